import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from common.log import log
from generate.images import colorize, save_image

HEATMAP_COLORMAP = "viridis"


def fragment_heatmaps(per_rank_counts) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-rank (H, W) fragment-count images and their elementwise sum."""
    counts = [np.asarray(c, dtype=np.int64) for c in per_rank_counts]
    if not counts:
        return [], np.zeros((0, 0), dtype=np.int64)
    return counts, np.sum(counts, axis=0)


def write_heatmaps(folder: str, per_rank_counts, cmap: str = HEATMAP_COLORMAP, ext: str = ".ppm") -> list[str]:
    """One ramped image per rank plus `combined`, all on the shared count scale."""
    per_rank, combined = fragment_heatmaps(per_rank_counts)
    vmax = float(combined.max()) if combined.size else 0.0
    os.makedirs(folder, exist_ok=True)
    paths = []
    for rank, counts in enumerate(per_rank):
        path = os.path.join(folder, f"fragments_rank{rank:03d}{ext}")
        save_image(path, colorize(counts, cmap, vmax))
        paths.append(path)
    path = os.path.join(folder, f"fragments_combined{ext}")
    save_image(path, colorize(combined, cmap, vmax))
    paths.append(path)
    log("HEATMAP", f"Wrote {len(paths)} fragment heatmaps to {folder} (max {int(vmax)} per pixel)")
    return paths


def plot_fragment_stats(stats: pd.DataFrame, path: str) -> None:
    """Bar charts of total and non-empty-pixel average fragments per rank."""
    fig, (ax_avg, ax_total) = plt.subplots(1, 2, figsize=(10, 4))
    ax_avg.bar(stats["rank"], stats["avgFragmentsNonEmpty"], color="skyblue")
    ax_avg.set_title("Average fragments per non-empty pixel")
    ax_avg.set_xlabel("Rank")
    ax_avg.grid(axis="y")
    ax_total.bar(stats["rank"], stats["totalFragments"], color="salmon")
    ax_total.set_title("Total fragments")
    ax_total.set_xlabel("Rank")
    ax_total.grid(axis="y")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
