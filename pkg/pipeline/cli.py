"""Command-line interface for the mogeo pipeline.

Commands:
- generate: Write a synthetic dataset (V1, or V2 with --v2)
- train: Train a model on the train split
- eval: Localize a split with a checkpoint and score it
- ablate: Train and evaluate the full model and its three removals
- align: Train matched models on a V1 and a V2 dataset and compare them
- visualize: Detection overlay and attention heatmaps of one pair
- timing: Parameter count and per-pair inference time

Usage:
    python -m pipeline.cli generate --seed 0 --pairs 32 --scene desk --out data/v1
    python -m pipeline.cli train --config configs/overfit.txt --data data/v1 --out runs/overfit
    python -m pipeline.cli eval --ckpt runs/overfit/checkpoint.pt --data data/v1 --split test
"""

import argparse
import logging
import sys
from pathlib import Path

from data.dataset import DEFAULT_FRACTIONS, SPLIT_NAMES, split_pairs, write_dataset
from data.synthetic import SCENE_PRESETS, generate_dataset
from pipeline.config import TrainConfig
from pipeline.experiments import alignment_gap, compare_alignment, run_ablation
from pipeline.logging_config import LOG_LEVELS, setup_logging
from pipeline.reporting import evaluate_checkpoint, timing_report
from pipeline.trainer import train
from visualization.overlays import visualize

logger = logging.getLogger(__name__)


def cmd_generate(args: argparse.Namespace) -> int:
    """
    Generate a synthetic dataset and write it to disk.

    Args:
        args: Command arguments

    Returns:
        Exit code (0 = success)
    """
    try:
        pairs = generate_dataset(
            seed=args.seed,
            n_pairs=args.pairs,
            objects_range=(args.objects_min, args.objects_max),
            scene=SCENE_PRESETS[args.scene],
            v2=args.v2,
        )
        split = split_pairs([p.pair_id for p in pairs], DEFAULT_FRACTIONS, seed=args.seed)
        manifest = write_dataset(pairs, split, args.out)

        counts = ", ".join(f"{name} {n}" for name, n in manifest.counts.items())
        print(f"✅ Wrote {manifest.n_pairs} {'V2' if args.v2 else 'V1'} pairs to {args.out}")
        print(f"   Splits: {counts}")
        return 0

    except Exception as e:
        logger.error(f"Failed to generate dataset: {e}", exc_info=True)
        print(f"❌ Failed to generate dataset: {e}")
        return 1


def cmd_train(args: argparse.Namespace) -> int:
    """Train on the train split of a dataset."""
    try:
        config = TrainConfig.from_env(args.config)
        result = train(config, args.data, args.out)

        print(f"✅ Trained {result.steps} steps")
        print(f"   Loss: {result.first_loss:.4f} -> {result.final_loss:.4f}")
        print(f"   Checkpoint: {result.checkpoint_path}")
        return 0

    except Exception as e:
        logger.error(f"Training failed: {e}", exc_info=True)
        print(f"❌ Training failed: {e}")
        return 1


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate a checkpoint on one split."""
    try:
        report = evaluate_checkpoint(args.ckpt, args.data, args.split, args.out)
        print(report.to_text())
        out = Path(args.out) if args.out else Path(args.ckpt).parent / "eval"
        print(f"💾 Report saved to: {out}")
        return 0

    except Exception as e:
        logger.error(f"Evaluation failed: {e}", exc_info=True)
        print(f"❌ Evaluation failed: {e}")
        return 1


def cmd_ablate(args: argparse.Namespace) -> int:
    """Run the four ablation rows."""
    try:
        config = TrainConfig.from_env(args.config)
        table = run_ablation(config, args.data, args.out, eval_split=args.split)
        print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
        print(f"💾 Table saved to: {Path(args.out) / 'ablation.txt'}")
        return 0

    except Exception as e:
        logger.error(f"Ablation failed: {e}", exc_info=True)
        print(f"❌ Ablation failed: {e}")
        return 1


def cmd_align(args: argparse.Namespace) -> int:
    """Compare matched V1 and V2 training runs."""
    try:
        config = TrainConfig.from_env(args.config)
        table = compare_alignment(config, args.v1, args.v2, args.out, eval_split=args.split)
        print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
        print(f"   V1 - V2 acc@0.25: {alignment_gap(table):+.4f}")
        print(f"💾 Table saved to: {Path(args.out) / 'alignment.txt'}")
        return 0

    except Exception as e:
        logger.error(f"Alignment comparison failed: {e}", exc_info=True)
        print(f"❌ Alignment comparison failed: {e}")
        return 1


def cmd_visualize(args: argparse.Namespace) -> int:
    """Write the overlay and heatmaps of one pair."""
    try:
        out = args.out or Path(args.ckpt).parent / "visualize" / args.pair
        paths = visualize(args.ckpt, args.data, args.pair, out)
        print(f"✅ Wrote {len(paths)} images to {out}")
        for path in paths:
            print(f"   {path.name}")
        return 0

    except Exception as e:
        logger.error(f"Visualization failed: {e}", exc_info=True)
        print(f"❌ Visualization failed: {e}")
        return 1


def cmd_timing(args: argparse.Namespace) -> int:
    """Report parameter count and inference time."""
    try:
        report = timing_report(args.ckpt, args.data, args.split, args.repetitions)
        print(report.to_text(), end="")
        return 0

    except Exception as e:
        logger.error(f"Timing failed: {e}", exc_info=True)
        print(f"❌ Timing failed: {e}")
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mogeo",
        description="Cross-view multi-object geo-localization pipeline",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Synthetic aligned dataset, then the transformed variant
  mogeo generate --seed 0 --pairs 200 --scene desk --out data/v1
  mogeo generate --seed 0 --pairs 200 --scene desk --v2 --out data/v2

  # Short desk-scale run
  mogeo train --config configs/overfit.txt --data data/v1 --out runs/overfit

  # V1 vs V2 with matched training
  mogeo align --config configs/overfit.txt --v1 data/v1 --v2 data/v2 --out runs/align

  # Score the test split
  mogeo eval --ckpt runs/overfit/checkpoint.pt --data data/v1 --split test

  # Overlay and heatmaps for one pair
  mogeo visualize --ckpt runs/overfit/checkpoint.pt --data data/v1 --pair 00003
        """,
    )
    subparsers = parser.add_subparsers(dest="command", help="Command to execute")

    gen = subparsers.add_parser("generate", help="Write a synthetic dataset")
    gen.add_argument("--seed", type=int, default=0, help="Master seed (default: 0)")
    gen.add_argument("--pairs", type=int, required=True, help="Number of pairs")
    gen.add_argument("--objects-min", type=int, default=1, help="Fewest objects per pair (default: 1)")
    gen.add_argument("--objects-max", type=int, default=8, help="Most objects per pair (default: 8)")
    gen.add_argument("--v2", action="store_true", help="Apply the crop/flip/scale transform")
    gen.add_argument(
        "--scene",
        type=str,
        default="default",
        choices=list(SCENE_PRESETS),
        help="Scene geometry preset (default: default)",
    )
    gen.add_argument("--out", type=str, required=True, help="Dataset directory")

    tr = subparsers.add_parser("train", help="Train a model")
    tr.add_argument("--config", type=str, default=None, help="Config file (default: built-in defaults)")
    tr.add_argument("--data", type=str, required=True, help="Dataset directory")
    tr.add_argument("--out", type=str, required=True, help="Run directory")

    ev = subparsers.add_parser("eval", help="Evaluate a checkpoint")
    ev.add_argument("--ckpt", type=str, required=True, help="Checkpoint path")
    ev.add_argument("--data", type=str, required=True, help="Dataset directory")
    ev.add_argument("--split", type=str, default="test", choices=list(SPLIT_NAMES))
    ev.add_argument("--out", type=str, default=None, help="Report directory (default: <ckpt dir>/eval)")

    ab = subparsers.add_parser("ablate", help="Run the component ablation")
    ab.add_argument("--config", type=str, default=None, help="Base config file")
    ab.add_argument("--data", type=str, required=True, help="Dataset directory")
    ab.add_argument("--out", type=str, required=True, help="Output directory")
    ab.add_argument("--split", type=str, default="validation", choices=list(SPLIT_NAMES))

    al = subparsers.add_parser("align", help="Compare matched V1 and V2 runs")
    al.add_argument("--config", type=str, default=None, help="Base config file")
    al.add_argument("--v1", type=str, required=True, help="Aligned dataset directory")
    al.add_argument("--v2", type=str, required=True, help="Transformed dataset directory")
    al.add_argument("--out", type=str, required=True, help="Output directory")
    al.add_argument("--split", type=str, default="test", choices=list(SPLIT_NAMES))

    vis = subparsers.add_parser("visualize", help="Overlay and attention heatmaps of one pair")
    vis.add_argument("--ckpt", type=str, required=True, help="Checkpoint path")
    vis.add_argument("--data", type=str, required=True, help="Dataset directory")
    vis.add_argument("--pair", type=str, required=True, help="Pair id")
    vis.add_argument("--out", type=str, default=None, help="Image directory")

    tm = subparsers.add_parser("timing", help="Parameter count and inference time")
    tm.add_argument("--ckpt", type=str, required=True, help="Checkpoint path")
    tm.add_argument("--data", type=str, required=True, help="Dataset directory")
    tm.add_argument("--split", type=str, default=None, choices=list(SPLIT_NAMES))
    tm.add_argument("--repetitions", type=int, default=10, help="Passes over the split (default: 10)")

    for sub in (gen, tr, ev, ab, al, vis, tm):
        sub.add_argument(
            "--log-level",
            type=str,
            default=None,
            choices=list(LOG_LEVELS),
            help="Logging level (default: log_level of the config or MOGEO_LOG_LEVEL, else INFO)",
        )
        sub.add_argument("--log-file", type=str, default=None, help="Rotating log file")

    return parser


def resolve_log_level(args: argparse.Namespace) -> str:
    """
    --log-level, else the log_level of the run config after MOGEO_LOG_LEVEL
    (commands without --config read the environment only), else INFO.
    """
    if args.log_level:
        return args.log_level
    try:
        return TrainConfig.from_env(getattr(args, "config", None)).log_level
    except (OSError, ValueError):
        # A broken config is reported by the command itself
        return "INFO"


def main(argv: list[str] | None = None) -> int:
    """
    Main CLI entry point.

    Returns:
        Exit code
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        return 1

    setup_logging(log_level=resolve_log_level(args), log_file=args.log_file)

    if args.command == "generate":
        return cmd_generate(args)
    elif args.command == "train":
        return cmd_train(args)
    elif args.command == "eval":
        return cmd_eval(args)
    elif args.command == "ablate":
        return cmd_ablate(args)
    elif args.command == "align":
        return cmd_align(args)
    elif args.command == "visualize":
        return cmd_visualize(args)
    elif args.command == "timing":
        return cmd_timing(args)
    else:
        parser.print_help()
        return 1


if __name__ == "__main__":
    sys.exit(main())
