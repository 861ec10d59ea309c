"""
Experiment drivers: the component ablation, the V1/V2 alignment comparison
and the multi-seed trend study. Each trains matched models and evaluates
them on one split.
"""

import logging
from dataclasses import replace
from pathlib import Path
from typing import Iterable

import pandas as pd

from data.dataset import DEFAULT_FRACTIONS, split_pairs, write_dataset
from data.synthetic import SceneConfig, generate_dataset
from evaluation.runner import EvalReport
from pipeline.config import TrainConfig
from pipeline.reporting import evaluate_checkpoint
from pipeline.trainer import train

logger = logging.getLogger(__name__)

ABLATIONS: tuple[tuple[str, dict[str, bool]], ...] = (
    ("full", {}),
    ("w/o L_s", {"use_similarity_loss": False}),
    ("w/o CVMF", {"use_cvmf_concat": False}),
    ("w/o MOPE", {"use_mope": False}),
)

METRIC_COLUMNS = ("acc@0.25", "acc@0.5", "accI@0.25", "accI@0.5")

# Slack for the "no worse than" links of a directional trend
TREND_TOLERANCE = 0.05


def _row(name: str, report: EvalReport) -> dict:
    return {
        "variant": name,
        "acc@0.25": report.acc_025,
        "acc@0.5": report.acc_05,
        "accI@0.25": report.accI_025,
        "accI@0.5": report.accI_05,
    }


def _slug(name: str) -> str:
    return name.replace("/", "").replace(" ", "_").replace("__", "_").lower()


def _train_and_score(config: TrainConfig, data_root: str | Path, run_dir: Path, split: str) -> EvalReport:
    result = train(config, data_root, run_dir)
    return evaluate_checkpoint(result.checkpoint_path, data_root, split, run_dir / "eval")


def ablation_reports(
    base_config: TrainConfig, data_root: str | Path, out: str | Path, eval_split: str = "validation"
) -> dict[str, EvalReport]:
    """Train and score every ablation variant; reports keyed by variant name."""
    out = Path(out)
    reports = {}
    for name, flags in ABLATIONS:
        logger.info(f"Ablation {name}: {flags or 'all components'}")
        reports[name] = _train_and_score(
            replace(base_config, **flags), data_root, out / _slug(name), eval_split
        )
    return reports


def run_ablation(
    base_config: TrainConfig,
    data_root: str | Path,
    out: str | Path,
    eval_split: str = "validation",
) -> pd.DataFrame:
    """
    Train and evaluate the full model and the three single-component removals.

    Every variant shares the seed, data and step budget. Results are written
    to <out>/ablation.txt.

    Returns:
        One row per variant with acc@0.25, acc@0.5, accI@0.25, accI@0.5

    Example:
        >>> table = run_ablation(TrainConfig(max_steps=300), "data/v1", "runs/ablation")
        >>> table.set_index("variant").loc["w/o MOPE", "acc@0.25"]
    """
    reports = ablation_reports(base_config, data_root, out, eval_split)
    table = _table(reports)
    _write_table(table, Path(out) / "ablation.txt", f"ablation on {eval_split}")
    return table


def compare_alignment(
    base_config: TrainConfig,
    v1_root: str | Path,
    v2_root: str | Path,
    out: str | Path,
    eval_split: str = "validation",
) -> pd.DataFrame:
    """
    Train matched models on an aligned (V1) and a transformed (V2) dataset.

    Results are written to <out>/alignment.txt.
    """
    out = Path(out)
    reports = {
        name: _train_and_score(base_config, root, out / name.lower(), eval_split)
        for name, root in (("V1", v1_root), ("V2", v2_root))
    }
    table = _table(reports)
    _write_table(table, out / "alignment.txt", f"V1 vs V2 on {eval_split}")
    return table


def ablation_order_holds(
    table: pd.DataFrame, metric: str = "acc@0.25", tolerance: float = TREND_TOLERANCE
) -> bool:
    """
    full >= w/o L_s >= w/o CVMF >= w/o MOPE, each link within `tolerance`,
    and w/o MOPE strictly below every other variant.
    """
    acc = table.set_index("variant")[metric]
    chain = [float(acc[name]) for name, _ in ABLATIONS]
    ordered = all(a >= b - tolerance for a, b in zip(chain, chain[1:]))
    return ordered and all(chain[-1] < value for value in chain[:-1])


def count_trend_holds(
    by_count: pd.DataFrame, metric: str = "acc@0.25", tolerance: float = TREND_TOLERANCE
) -> bool:
    """Accuracy does not rise (beyond `tolerance`) from one object-count bin to the next.

    Bins without images are skipped.
    """
    values = by_count[metric].dropna().tolist()
    return all(b <= a + tolerance for a, b in zip(values, values[1:]))


def alignment_gap(table: pd.DataFrame, metric: str = "acc@0.25") -> float:
    """V1 minus V2 accuracy of a compare_alignment table."""
    acc = table.set_index("variant")[metric]
    return float(acc["V1"] - acc["V2"])


def majority(outcomes: Iterable[bool]) -> bool:
    outcomes = list(outcomes)
    return sum(outcomes) * 2 > len(outcomes)


def trend_study(
    base_config: TrainConfig,
    out: str | Path,
    seeds: Iterable[int] = (0, 1, 2),
    n_pairs: int = 512,
    objects_range: tuple[int, int] = (1, 8),
    scene: SceneConfig | None = None,
    eval_split: str = "test",
) -> pd.DataFrame:
    """
    Check the three directional trends once per seed.

    Per seed a V1 dataset and its V2 transform are generated, the four
    ablation variants are trained on V1 and the full model on V2. The full
    V1 model serves both the alignment and the object-count trend.

    Returns:
        One row per seed: acc@0.25 of V1 and V2, and whether the alignment,
        object-count and ablation trends hold. Also written to <out>/trends.txt.
    """
    out = Path(out)
    rows = []
    for seed in seeds:
        seed_dir = out / f"seed{seed}"
        roots = {}
        for name, v2 in (("v1", False), ("v2", True)):
            pairs = generate_dataset(seed, n_pairs, objects_range, scene, v2=v2)
            split = split_pairs([p.pair_id for p in pairs], DEFAULT_FRACTIONS, seed=seed)
            roots[name] = write_dataset(pairs, split, seed_dir / "data" / name).root

        config = replace(base_config, seed=seed)
        reports = ablation_reports(config, roots["v1"], seed_dir / "ablation", eval_split)
        v2_report = _train_and_score(config, roots["v2"], seed_dir / "v2", eval_split)

        alignment = _table({"V1": reports["full"], "V2": v2_report})
        rows.append(
            {
                "seed": seed,
                "acc@0.25 V1": reports["full"].acc_025,
                "acc@0.25 V2": v2_report.acc_025,
                "alignment": alignment_gap(alignment) > 0,
                "object count": count_trend_holds(reports["full"].by_count),
                "ablation": ablation_order_holds(_table(reports)),
            }
        )
        logger.info(f"Trends for seed {seed}: {rows[-1]}")

    table = pd.DataFrame(rows)
    _write_table(table, out / "trends.txt", f"trends over seeds {list(table['seed'])}")
    return table


def _table(reports: dict[str, EvalReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [_row(name, report) for name, report in reports.items()], columns=["variant", *METRIC_COLUMNS]
    )


def _write_table(table: pd.DataFrame, path: Path, title: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = table.to_string(index=False, float_format=lambda v: f"{v:.4f}")
    path.write_text(f"# {title}\n{body}\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
