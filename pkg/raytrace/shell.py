"""
Shell extraction, packed element handles and shell-to-shell segment generation.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from common.errors import HandleOverflowError
from common.settings import EPS_SCALE
from mesh.cells import Kind, local_faces
from mesh.mesh_core import Cluster, Connectivity
from raytrace.bvh import ShellBVH, build_bvh, trace_front_face_culled

INDEX_BITS = 30
MAX_INDEX = 1 << INDEX_BITS


def pack_handle(kind: Kind, index: int) -> int:
    """Low 2 bits = kind (Tet=0, Pyr=1, Wed=2, Hex=3), high 30 bits = index."""
    if not 0 <= index < MAX_INDEX:
        raise HandleOverflowError(f"element index {index} does not fit in {INDEX_BITS} bits")
    return (int(index) << 2) | int(Kind(kind))


def unpack_handle(handle: int) -> tuple[Kind, int]:
    handle = int(handle) & 0xFFFFFFFF
    return Kind(handle & 0b11), handle >> 2


@dataclass(frozen=True)
class ShellFace:
    tri: tuple[int, int, int]       # vertex ids, outward winding
    handle: int                     # packed owning element
    face_slot: int                  # owning element's face slot
    face_ids: tuple[int, ...]       # full face ids in that slot's order (3 or 4)


@dataclass(frozen=True)
class Segment:
    pixel: int
    t_entry: float
    t_exit: float
    entry_handle: int
    cluster_id: int
    entry_face: int = -1            # shell face index; -1 when found by point location


@dataclass
class Shell:
    cluster_id: int
    faces: list[ShellFace]
    bvh: ShellBVH
    eps: float

    @property
    def triangle_count(self) -> int:
        return len(self.faces)


def extract_shell(cluster: Cluster, connectivity: Optional[Connectivity] = None) -> list[ShellFace]:
    """One face per boundary triangle, two per boundary quad split along (0, 2)."""
    conn = connectivity or cluster.ensure_connectivity()
    mesh = cluster.mesh
    out: list[ShellFace] = []
    for kind, index in mesh.iter_elements():
        handle = None
        for slot, ids, shape in local_faces(kind, mesh.elements[kind][index]):
            if not conn.is_boundary(kind, index, slot):
                continue
            if handle is None:
                handle = pack_handle(kind, index)
            if shape == "tri":
                out.append(ShellFace(ids, handle, slot, ids))
            else:
                out.append(ShellFace((ids[0], ids[1], ids[2]), handle, slot, ids))
                out.append(ShellFace((ids[0], ids[2], ids[3]), handle, slot, ids))
    return out


def scene_epsilon(points: np.ndarray) -> float:
    """EPS_SCALE x scene diagonal."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        return EPS_SCALE
    return EPS_SCALE * max(float(np.linalg.norm(p.max(axis=0) - p.min(axis=0))), 1e-300)


def build_shell(cluster: Cluster, eps: Optional[float] = None) -> Shell:
    faces = extract_shell(cluster)
    pos = cluster.mesh.positions
    tris = pos[np.array([f.tri for f in faces], dtype=np.int64)] if faces else np.zeros((0, 3, 3))
    return Shell(cluster.cluster_id, faces, build_bvh(tris), scene_epsilon(pos) if eps is None else eps)


def generate_segments(
    shell: Shell,
    origin,
    direction,
    pixel: int = 0,
    t_min: float = 0.0,
    t_max: float = np.inf,
    locate: Optional[Callable[[np.ndarray], Optional[int]]] = None,
) -> list[Segment]:
    """Disjoint, sorted ray segments inside one cluster.

    Forward front-face-culled traces find exit faces; from each exit a
    backward trace (-dir) finds the matching entry face. When the backward
    trace misses (ray origin inside the cluster) the entry is clamped to the
    current t_min and `locate(point)` resolves the start element handle.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    eps = shell.eps
    cur = max(t_min, eps)
    segments: list[Segment] = []
    while cur < t_max:
        fwd = trace_front_face_culled(shell.bvh, o, d, cur, t_max)
        if fwd is None:
            break
        _exit_face, t_exit = fwd
        p_exit = o + t_exit * d
        back = trace_front_face_culled(shell.bvh, p_exit, -d, eps, t_exit - cur - eps)
        if back is not None:
            face_id, dist = back
            t_entry = t_exit - dist
            handle = shell.faces[face_id].handle
        else:
            face_id, t_entry = -1, cur
            handle = locate(o + (t_entry + eps) * d) if locate is not None else None
        if t_exit - t_entry > eps and handle is not None:
            segments.append(Segment(pixel, t_entry, t_exit, handle, shell.cluster_id, face_id))
        cur = t_exit + eps
    return segments
