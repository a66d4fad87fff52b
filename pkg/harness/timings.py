from typing import Optional

import pandas as pd

from common.log import log
from harness.config import RenderConfig
from harness.distributed import DistributedResult, render_distributed
from mesh.mesh_core import Cluster


def stats_frame(result: DistributedResult, run: int = 0) -> pd.DataFrame:
    df = pd.DataFrame([r.as_record() for r in result.ranks])
    df.insert(0, "run", run)
    return df


def report_timings(config: RenderConfig, clusters: Optional[list[Cluster]] = None,
                   repeat: Optional[int] = None) -> pd.DataFrame:
    """Per-rank integration, compositing and total milliseconds averaged over `repeat` runs.

    Compositing is total minus the barrier-aligned integration phase.
    """
    repeat = config.repeat if repeat is None else repeat
    runs = []
    for run in range(repeat):
        result = render_distributed(config, clusters)
        runs.append(stats_frame(result, run))
    df = pd.concat(runs, ignore_index=True)
    summary = df.groupby("rank")[["integrationMs", "integrationWallMs", "compositingMs", "totalMs"]].mean().reset_index()
    summary["work"] = df.groupby("rank")[["samples", "elementSteps"]].sum().sum(axis=1).values // repeat
    for _, row in summary.iterrows():
        log("TIMING", f"rank {int(row['rank'])}: integration {row['integrationMs']:.1f} ms (cpu), "
                      f"compositing {row['compositingMs']:.1f} ms, total {row['totalMs']:.1f} ms over {repeat} runs")
    return summary
