"""
Mesh, cluster and connectivity types.

Topology (positions + elements) is fixed; scalar fields are stored as
structure-of-arrays blocks indexed (field, timestep, vertex) so that changing
the timestep only swaps the scalar block.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from common.errors import DegenerateElementError, MeshError, NonManifoldError
from mesh.cells import FACE_TABLE, KIND_NAMES, VERTEX_COUNT, Kind, element_volume, local_faces

BOUNDARY = -1


@dataclass(frozen=True)
class Element:
    kind: Kind
    vertex_ids: tuple[int, ...]


def _empty_elements() -> dict[Kind, np.ndarray]:
    return {k: np.zeros((0, VERTEX_COUNT[k]), dtype=np.uint32) for k in Kind}


@dataclass
class Mesh:
    positions: np.ndarray                      # (V, 3) float64
    elements: dict[Kind, np.ndarray] = field(default_factory=_empty_elements)  # kind -> (n, nv) uint32
    scalars: Optional[np.ndarray] = None       # (fields, timesteps, V) float32

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        elements = _empty_elements()
        for k, arr in (self.elements or {}).items():
            elements[Kind(k)] = np.ascontiguousarray(arr, dtype=np.uint32).reshape(-1, VERTEX_COUNT[Kind(k)])
        self.elements = elements
        if self.scalars is None:
            self.scalars = np.zeros((1, 1, len(self.positions)), dtype=np.float32)
        self.scalars = np.ascontiguousarray(self.scalars, dtype=np.float32)
        if self.scalars.ndim != 3 or self.scalars.shape[2] != len(self.positions):
            raise MeshError(f"scalars must be (fields, timesteps, {len(self.positions)}), got {self.scalars.shape}")

    @property
    def vertex_count(self) -> int:
        return len(self.positions)

    @property
    def field_count(self) -> int:
        return self.scalars.shape[0]

    @property
    def timestep_count(self) -> int:
        return self.scalars.shape[1]

    def element_counts(self) -> dict[Kind, int]:
        return {k: len(self.elements[k]) for k in Kind}

    def element_count(self) -> int:
        return sum(len(a) for a in self.elements.values())

    def element(self, kind: Kind, index: int) -> Element:
        return Element(Kind(kind), tuple(int(v) for v in self.elements[Kind(kind)][index]))

    def iter_elements(self):
        for k in Kind:
            for i in range(len(self.elements[k])):
                yield k, i

    def scalar_block(self, field_id: int = 0, timestep: int = 0) -> np.ndarray:
        if not 0 <= field_id < self.field_count:
            raise IndexError(f"field {field_id} out of range (have {self.field_count})")
        if not 0 <= timestep < self.timestep_count:
            raise IndexError(f"timestep {timestep} out of range (have {self.timestep_count})")
        return self.scalars[field_id, timestep]

    def validate(self) -> None:
        """Check index ranges, repeated indices and element orientation."""
        if not np.all(np.isfinite(self.positions)):
            raise MeshError("non-finite vertex position")
        n = self.vertex_count
        for k in Kind:
            arr = self.elements[k]
            if len(arr) == 0:
                continue
            if int(arr.max()) >= n:
                raise MeshError(f"{KIND_NAMES[k]} index {int(arr.max())} out of range (vertex count {n})")
            for i, row in enumerate(arr):
                if len(set(row.tolist())) != len(row):
                    raise DegenerateElementError(f"{KIND_NAMES[k]} {i} repeats a vertex: {row.tolist()}")
                if element_volume(k, self.positions[row]) <= 0.0:
                    raise DegenerateElementError(f"{KIND_NAMES[k]} {i} has non-positive volume")


@dataclass
class Connectivity:
    """Half-face adjacency.

    For each kind: arrays of shape (n, faces) holding the neighbor's kind
    (BOUNDARY when unmatched), index, face slot and twist, where the
    neighbor's ordered face ids are my_face[(twist - j) % n_face_vertices].
    """
    neighbor_kind: dict[Kind, np.ndarray]
    neighbor_index: dict[Kind, np.ndarray]
    neighbor_slot: dict[Kind, np.ndarray]
    twist: dict[Kind, np.ndarray]

    def neighbor(self, kind: Kind, index: int, slot: int) -> Optional[tuple[Kind, int, int, int]]:
        nk = int(self.neighbor_kind[kind][index, slot])
        if nk == BOUNDARY:
            return None
        return (Kind(nk), int(self.neighbor_index[kind][index, slot]),
                int(self.neighbor_slot[kind][index, slot]), int(self.twist[kind][index, slot]))

    def is_boundary(self, kind: Kind, index: int, slot: int) -> bool:
        return int(self.neighbor_kind[kind][index, slot]) == BOUNDARY

    def boundary_face_count(self) -> int:
        return int(sum((a == BOUNDARY).sum() for a in self.neighbor_kind.values()))

    def face_slot_count(self) -> int:
        return int(sum(a.size for a in self.neighbor_kind.values()))


@dataclass
class Cluster:
    cluster_id: int
    mesh: Mesh
    rank: int = 0
    connectivity: Optional[Connectivity] = None

    def ensure_connectivity(self) -> Connectivity:
        if self.connectivity is None:
            self.connectivity = build_connectivity(self)
        return self.connectivity


def face_key(ids) -> tuple[int, ...]:
    return tuple(sorted(int(v) for v in ids))


def rotate_to(mine: tuple[int, ...], theirs: tuple[int, ...]) -> int:
    """Twist t with theirs[j] == mine[(t - j) % n]; raises if the faces don't pair."""
    n = len(mine)
    try:
        t = mine.index(theirs[0])
    except ValueError:
        raise MeshError(f"faces {mine} and {theirs} do not share vertices")
    for j in range(n):
        if theirs[j] != mine[(t - j) % n]:
            raise MeshError(f"faces {mine} and {theirs} are not oppositely wound")
    return t


def _alloc(mesh: Mesh):
    kinds, index, slot, twist = {}, {}, {}, {}
    for k in Kind:
        shape = (len(mesh.elements[k]), len(FACE_TABLE[k]))
        kinds[k] = np.full(shape, BOUNDARY, dtype=np.int8)
        index[k] = np.full(shape, -1, dtype=np.int64)
        slot[k] = np.full(shape, -1, dtype=np.int8)
        twist[k] = np.zeros(shape, dtype=np.int8)
    return kinds, index, slot, twist


def _link(conn_arrays, a, b) -> None:
    kinds, index, slot, twist = conn_arrays
    (ka, ia, sa, fa), (kb, ib, sb, fb) = a, b
    kinds[ka][ia, sa], index[ka][ia, sa], slot[ka][ia, sa] = int(kb), ib, sb
    twist[ka][ia, sa] = rotate_to(fa, fb)
    kinds[kb][ib, sb], index[kb][ib, sb], slot[kb][ib, sb] = int(ka), ia, sa
    twist[kb][ib, sb] = rotate_to(fb, fa)


def build_connectivity(cluster_or_mesh) -> Connectivity:
    """Match element faces by sorted vertex key (expected O(E))."""
    mesh = cluster_or_mesh.mesh if isinstance(cluster_or_mesh, Cluster) else cluster_or_mesh
    owners: dict[tuple[int, ...], list] = {}
    for k, i in mesh.iter_elements():
        for s, ids, _shape in local_faces(k, mesh.elements[k][i]):
            owners.setdefault(face_key(ids), []).append((k, i, s, ids))
    arrays = _alloc(mesh)
    for key, faces in owners.items():
        if len(faces) > 2:
            raise NonManifoldError(key, [(KIND_NAMES[k], i, s) for k, i, s, _ in faces])
        if len(faces) == 2:
            _link(arrays, faces[0], faces[1])
    return Connectivity(*arrays)


def brute_force_connectivity(mesh: Mesh) -> Connectivity:
    """All-pairs face comparison; O(E^2), kept for verification only."""
    faces = []
    for k, i in mesh.iter_elements():
        for s, ids, _shape in local_faces(k, mesh.elements[k][i]):
            faces.append((k, i, s, ids))
    arrays = _alloc(mesh)
    for a in range(len(faces)):
        for b in range(a + 1, len(faces)):
            if set(faces[a][3]) == set(faces[b][3]) and len(faces[a][3]) == len(faces[b][3]):
                _link(arrays, faces[a], faces[b])
    return Connectivity(*arrays)
