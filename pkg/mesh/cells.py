"""
VTK cell conventions for the four supported element kinds.

Vertex orderings follow VTK cell types 10 (tetra), 14 (pyramid), 13 (wedge)
and 12 (hexahedron). Face slots below are the single normative face
enumeration used by connectivity, shell extraction, compaction and marching.
Every face is wound so that the right-hand rule gives an outward normal.
"""

from enum import IntEnum

import numpy as np


class Kind(IntEnum):
    TET = 0
    PYR = 1
    WED = 2
    HEX = 3


KIND_NAMES = {Kind.TET: "tet", Kind.PYR: "pyr", Kind.WED: "wed", Kind.HEX: "hex"}
VTK_CELL_TYPES = {Kind.TET: 10, Kind.PYR: 14, Kind.WED: 13, Kind.HEX: 12}
VERTEX_COUNT = {Kind.TET: 4, Kind.PYR: 5, Kind.WED: 6, Kind.HEX: 8}

FACE_TABLE: dict[Kind, tuple[tuple[int, ...], ...]] = {
    Kind.TET: ((0, 1, 3), (1, 2, 3), (2, 0, 3), (0, 2, 1)),
    Kind.PYR: ((0, 3, 2, 1), (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)),
    Kind.WED: ((0, 1, 2), (3, 5, 4), (0, 3, 4, 1), (1, 4, 5, 2), (2, 5, 3, 0)),
    Kind.HEX: ((0, 4, 7, 3), (1, 2, 6, 5), (0, 1, 5, 4), (3, 7, 6, 2), (0, 3, 2, 1), (4, 5, 6, 7)),
}

# Worst-case left tests per element step
LEFT_TEST_BOUND = {Kind.TET: 2, Kind.PYR: 5, Kind.WED: 7, Kind.HEX: 13}


def _edge_set(face) -> set:
    return {frozenset((face[e], face[(e + 1) % len(face)])) for e in range(len(face))}


def per_face_left_test_bound(kind: Kind) -> int:
    """Worst case when each candidate face is tested on its own.

    Only the entry face's edges are known; the last candidate in slot order
    is taken by elimination.
    """
    faces = FACE_TABLE[Kind(kind)]
    worst = 0
    for entry in range(len(faces)):
        known = _edge_set(faces[entry])
        candidates = [s for s in range(len(faces)) if s != entry]
        worst = max(worst, sum(len(_edge_set(faces[s]) - known) for s in candidates[:-1]))
    return worst


PER_FACE_LEFT_TEST_BOUND = {k: per_face_left_test_bound(k) for k in Kind}


def face_shape(n: int) -> str:
    return "tri" if n == 3 else "quad"


def local_faces(kind: Kind, vertex_ids) -> list[tuple[int, tuple[int, ...], str]]:
    """Return [(faceSlot, orderedVertexIds, shape)] for an element."""
    kind = Kind(kind)
    ids = [int(v) for v in vertex_ids]
    if len(ids) != VERTEX_COUNT[kind]:
        raise ValueError(f"{KIND_NAMES[kind]} needs {VERTEX_COUNT[kind]} vertex ids, got {len(ids)}")
    out = []
    for slot, local in enumerate(FACE_TABLE[kind]):
        out.append((slot, tuple(ids[i] for i in local), face_shape(len(local))))
    return out


def face_normal(points: np.ndarray) -> np.ndarray:
    """Area-weighted normal of a (possibly non-planar) polygon, right-hand winding."""
    p = np.asarray(points, dtype=np.float64)
    if len(p) == 3:
        return np.cross(p[1] - p[0], p[2] - p[0])
    # Quad: cross of the diagonals (twice the vector area)
    return np.cross(p[2] - p[0], p[3] - p[1])


def element_volume(kind: Kind, points: np.ndarray) -> float:
    """Signed volume via the divergence theorem over the outward-wound faces.

    Positive for a valid element in VTK orientation. Quads are split along
    their (0, 2) diagonal, the same split the shell uses.
    """
    p = np.asarray(points, dtype=np.float64)
    c = p.mean(axis=0)
    vol = 0.0
    for local in FACE_TABLE[Kind(kind)]:
        tris = [local] if len(local) == 3 else [(local[0], local[1], local[2]), (local[0], local[2], local[3])]
        for a, b, d in tris:
            vol += np.dot(p[a] - c, np.cross(p[b] - c, p[d] - c))
    return float(vol / 6.0)
