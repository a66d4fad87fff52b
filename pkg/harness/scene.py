from typing import Optional

import numpy as np

from common.log import log
from march.marcher import ClusterData
from mesh.cluster_io import load_scene
from mesh.mesh_core import Cluster
from raytrace.shell import scene_epsilon


def load_clusters(manifest_path: str) -> list[Cluster]:
    clusters = load_scene(manifest_path)
    log("SCENE", f"Loaded {len(clusters)} clusters from {manifest_path}")
    return clusters


def check_ranks(clusters: list[Cluster], ranks: int) -> None:
    for c in clusters:
        if not 0 <= c.rank < ranks:
            raise ValueError(f"cluster {c.cluster_id} is assigned to rank {c.rank}, but only {ranks} ranks run")


def scene_bounds(clusters: list[Cluster]) -> tuple[np.ndarray, np.ndarray]:
    pts = np.concatenate([c.mesh.positions for c in clusters]) if clusters else np.zeros((1, 3))
    return pts.min(axis=0), pts.max(axis=0)


def scene_eps(clusters: list[Cluster]) -> float:
    lo, hi = scene_bounds(clusters)
    return scene_epsilon(np.stack([lo, hi]))


def check_field(clusters: list[Cluster], field_id: int, timestep: int) -> None:
    for c in clusters:
        c.mesh.scalar_block(field_id, timestep)


def prepare_rank(clusters: list[Cluster], rank: int, compacted: bool = True, verify: bool = False,
                 eps: Optional[float] = None, share_edges: bool = True) -> list[ClusterData]:
    """Connectivity, shell, BVH and compact records for the clusters a rank owns, in manifest order."""
    eps = scene_eps(clusters) if eps is None else eps
    return [ClusterData.prepare(c, compacted, verify, eps, share_edges) for c in clusters if c.rank == rank]
