"""
Visualization of localization results.

Detection overlays on the reference image and per-object attention heatmaps.
"""

from visualization.overlays import (
    attention_heatmap,
    draw_overlay,
    heatmap_filename,
    save_attention_maps,
    visualize,
)

__all__ = [
    "attention_heatmap",
    "draw_overlay",
    "heatmap_filename",
    "save_attention_maps",
    "visualize",
]
