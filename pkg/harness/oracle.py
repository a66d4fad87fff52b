"""
Single-process reference renderers.

`render_oracle` runs the same segment generation and integration for every
cluster in one process, sorts each pixel's fragments globally by
(depth, cluster id, order) and folds them; no transport, no per-rank lists.
`render_single_fragment` is the baseline that lets every rank pre-fold its
own fragments into one before compositing by depth.
"""

from typing import Optional

import numpy as np

from common.log import log
from composite.compositor import fold, prefold, single_fragment_composite
from harness.config import RenderConfig
from harness.distributed import DistributedResult, trace_pixels
from harness.scene import check_field, load_clusters, prepare_rank, scene_eps
from march.marcher import MarchStats
from mesh.mesh_core import Cluster


def render_oracle(config: RenderConfig, clusters: Optional[list[Cluster]] = None,
                  stats: Optional[MarchStats] = None) -> np.ndarray:
    clusters = load_clusters(config.scene) if clusters is None else clusters
    check_field(clusters, config.field, config.timestep)
    tf = config.transfer_function()
    eps = scene_eps(clusters)
    datas = []
    for rank in sorted({c.rank for c in clusters}):
        datas.extend(prepare_rank(clusters, rank, config.compacted, config.verify_reconstruction, eps,
                                  config.share_edges))
    datas.sort(key=lambda d: d.cluster_id)
    cam = config.camera
    origin, directions = cam.rays()
    image = np.zeros((cam.pixel_count, 4))
    total = 0
    if not tf.is_transparent:
        fragments, march, _cpu_ms = trace_pixels(datas, origin, directions, tf, config,
                                                 config.workers * config.ranks)
        if stats is not None:
            stats.merge(march)
        for pixel, found in enumerate(fragments):
            frags = [(f.depth, cid, order, f) for order, (cid, f) in enumerate(found)]
            if not frags:
                continue
            frags.sort(key=lambda x: x[:3])
            image[pixel] = fold(f.rgba for *_key, f in frags)
            total += len(frags)
    log("ORACLE", f"{len(datas)} clusters, {total} fragments")
    return image.reshape(cam.height, cam.width, 4)


def render_single_fragment(result: DistributedResult) -> np.ndarray:
    """Baseline from a finished distributed run: one pre-folded fragment per rank per pixel."""
    folded = [prefold(store) for store in result.stores]
    image = single_fragment_composite([rgba for rgba, _ in folded], [depth for _, depth in folded])
    regions = result.regions
    return image.reshape(regions.height, regions.width, 4)
