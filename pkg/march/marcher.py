"""
Connectivity-driven element marching along one ray segment.

Each element step projects the current element into the ray-centric frame,
picks the exit face with 2D left tests, crosses it through the half-face
connectivity and rebuilds the next element's vertex ids from its compact
record. Samples are taken at tEntry + (k + 1/2) * step and accumulated front
to back into one fragment.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from common.errors import CompactionCorruptionError, MarchFailure
from common.log import log_once
from common.settings import OPAQUE_THRESHOLD
from composite.deepfb import Fragment
from march.frame import RayFrame
from march.interpolation import contains_and_interpolate, element_contains
from march.transfer_function import TransferFunction
from mesh.cells import FACE_TABLE, LEFT_TEST_BOUND, PER_FACE_LEFT_TEST_BOUND, Kind
from mesh.compaction import compact_mesh, reconstruct
from mesh.mesh_core import Cluster, Connectivity
from raytrace.shell import Segment, Shell, build_shell, pack_handle, unpack_handle


@dataclass
class MarchState:
    kind: Kind
    index: int
    vertex_ids: tuple[int, ...]
    entry_slot: Optional[int]           # None when the start came from point location
    last_face_shape: Optional[str]      # "tri" / "quad" of the face last crossed


@dataclass
class MarchStats:
    segments: int = 0
    fragments: int = 0
    samples: int = 0
    element_steps: int = 0
    reconstructions: int = 0
    failures: int = 0
    left_tests: int = 0
    left_test_max: dict = field(default_factory=lambda: {k: 0 for k in Kind})

    def record_left_tests(self, kind: Kind, count: int) -> None:
        self.left_tests += count
        if count > self.left_test_max[kind]:
            self.left_test_max[kind] = count

    def merge(self, other: "MarchStats") -> None:
        for name in ("segments", "fragments", "samples", "element_steps", "reconstructions", "failures", "left_tests"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        for k in Kind:
            self.left_test_max[k] = max(self.left_test_max[k], other.left_test_max[k])

    def within_bounds(self, share_edges: bool = True) -> bool:
        bounds = LEFT_TEST_BOUND if share_edges else PER_FACE_LEFT_TEST_BOUND
        return all(self.left_test_max[k] <= bounds[k] for k in Kind)


@dataclass
class ClusterData:
    """Everything one rank needs to trace and march a cluster."""
    cluster: Cluster
    connectivity: Connectivity
    shell: Shell
    records: Optional[dict]             # kind -> compact records; None marches explicit ids
    verify: bool = False
    share_edges: bool = True
    _boxes: Optional[dict] = field(default=None, repr=False)

    @classmethod
    def prepare(cls, cluster: Cluster, compacted: bool = True, verify: bool = False,
                eps: Optional[float] = None, share_edges: bool = True) -> "ClusterData":
        conn = cluster.ensure_connectivity()
        records = compact_mesh(cluster.mesh) if compacted else None
        return cls(cluster, conn, build_shell(cluster, eps), records, verify, share_edges)

    @property
    def cluster_id(self) -> int:
        return self.cluster.cluster_id

    @property
    def compacted(self) -> bool:
        return self.records is not None

    def next_element(self, kind: Kind, index: int, entry_slot: int, entry_ids) -> tuple[int, ...]:
        if self.records is None:
            return tuple(int(v) for v in self.cluster.mesh.elements[kind][index])
        ids = reconstruct(self.records[kind][index], kind, entry_slot, entry_ids)
        if self.verify:
            stored = tuple(int(v) for v in self.cluster.mesh.elements[kind][index])
            if ids != stored:
                raise CompactionCorruptionError(
                    f"cluster {self.cluster_id} {kind.name.lower()} {index}: rebuilt {ids}, stored {stored}")
        return ids

    def _element_boxes(self) -> dict:
        if self._boxes is None:
            pos = self.cluster.mesh.positions
            self._boxes = {}
            for k, arr in self.cluster.mesh.elements.items():
                pts = pos[arr.astype(np.int64)] if len(arr) else np.zeros((0, 1, 3))
                self._boxes[k] = (pts.min(axis=1), pts.max(axis=1))
        return self._boxes

    def locate(self, point) -> Optional[int]:
        """Packed handle of the first element containing `point` (brute force)."""
        p = np.asarray(point, dtype=np.float64)
        mesh = self.cluster.mesh
        pad = self.shell.eps
        for k, (lo, hi) in self._element_boxes().items():
            hits = np.nonzero(np.all((lo - pad <= p) & (p <= hi + pad), axis=1))[0]
            for i in hits:
                ids = mesh.elements[k][i].astype(np.int64)
                if element_contains(k, mesh.positions[ids], p):
                    return pack_handle(k, int(i))
        return None


def _left(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def find_exit_face(kind: Kind, vertex_ids, entry_slot: Optional[int], xy: np.ndarray,
                   share_edges: bool = True) -> tuple[int, int]:
    """(exit face slot, left tests performed).

    `xy` holds the element's vertices projected into the ray-centric plane,
    in VTK order. A face is the exit face when the origin lies left of all
    of its (outward-wound) edges. Edge results are shared between the two
    faces an edge borders, the entry face's edges are known, and a lone
    unrejected candidate is accepted without testing.

    With `share_edges` off every candidate face is tested on its own, in slot
    order, knowing only the entry face's edges; this is the counting the
    per-kind worst cases in `PER_FACE_LEFT_TEST_BOUND` describe.
    """
    faces = FACE_TABLE[kind]
    memo: dict[tuple[int, int], bool] = {}
    tests = 0

    def known(i: int, j: int) -> Optional[bool]:
        val = memo.get((min(i, j), max(i, j)))
        if val is None:
            return None
        return val if i < j else not val

    def orient(i: int, j: int) -> bool:
        nonlocal tests
        lo, hi = min(i, j), max(i, j)
        tests += 1
        value = _left(xy[lo], xy[hi])
        # Exact zeros: the direction from the lower vertex id passes
        passes = value > 0 if value != 0 else vertex_ids[lo] < vertex_ids[hi]
        return passes if i < j else not passes

    def test(i: int, j: int) -> bool:
        result = orient(i, j)
        memo[(min(i, j), max(i, j))] = result if i < j else not result
        return result

    def edges(slot: int):
        f = faces[slot]
        return [(f[e], f[(e + 1) % len(f)]) for e in range(len(f))]

    if entry_slot is not None:
        for i, j in edges(entry_slot):
            memo[(min(i, j), max(i, j))] = not (i < j)
    remaining = [s for s in range(len(faces)) if s != entry_slot]
    if not share_edges:
        for slot in remaining[:-1]:
            if all(orient(i, j) if known(i, j) is None else known(i, j) for i, j in edges(slot)):
                return slot, tests
        return remaining[-1], tests
    while True:
        remaining = [s for s in remaining if not any(known(i, j) is False for i, j in edges(s))]
        if not remaining:
            raise MarchFailure(f"no exit face for {kind.name.lower()} {tuple(vertex_ids)}")
        if len(remaining) == 1:
            return remaining[0], tests
        slot = remaining[0]
        pending = [(i, j) for i, j in edges(slot) if known(i, j) is None]
        if not pending:
            return slot, tests
        test(*pending[0])


def start_state(segment: Segment, data: ClusterData) -> MarchState:
    if segment.entry_face >= 0:
        face = data.shell.faces[segment.entry_face]
        kind, index = unpack_handle(face.handle)
        ids = data.next_element(kind, index, face.face_slot, face.face_ids)
        shape = "tri" if len(face.face_ids) == 3 else "quad"
        return MarchState(kind, index, ids, face.face_slot, shape)
    kind, index = unpack_handle(segment.entry_handle)
    ids = tuple(int(v) for v in data.cluster.mesh.elements[kind][index])
    return MarchState(kind, index, ids, None, None)


def advance(state: MarchState, data: ClusterData, frame: RayFrame, stats: Optional[MarchStats] = None) -> Optional[MarchState]:
    """Step into the neighbor across the exit face; None when the exit face is on the boundary."""
    positions = data.cluster.mesh.positions
    xy = frame.project_2d(positions[np.asarray(state.vertex_ids, dtype=np.int64)])
    slot, tests = find_exit_face(state.kind, state.vertex_ids, state.entry_slot, xy, data.share_edges)
    if stats is not None:
        stats.element_steps += 1
        if state.entry_slot is not None:
            stats.record_left_tests(state.kind, tests)
    neighbor = data.connectivity.neighbor(state.kind, state.index, slot)
    if neighbor is None:
        return None
    nkind, nindex, nslot, twist = neighbor
    exit_ids = [state.vertex_ids[p] for p in FACE_TABLE[state.kind][slot]]
    n = len(exit_ids)
    entry_ids = [exit_ids[(twist - j) % n] for j in range(n)]
    ids = data.next_element(nkind, nindex, nslot, entry_ids)
    if stats is not None and data.compacted:
        stats.reconstructions += 1
    return MarchState(nkind, nindex, ids, nslot, "tri" if n == 3 else "quad")


def _accumulate(color: np.ndarray, alpha: float, rgb: np.ndarray, a: float) -> float:
    color += (1.0 - alpha) * a * rgb
    return alpha + (1.0 - alpha) * a


def integrate_segment(
    segment: Segment,
    data: ClusterData,
    tf: TransferFunction,
    step: float,
    origin,
    direction,
    field_id: int = 0,
    timestep: int = 0,
    stats: Optional[MarchStats] = None,
    opaque: float = OPAQUE_THRESHOLD,
) -> Optional[Fragment]:
    """One fragment for the segment, or None when nothing was accumulated."""
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    frame = RayFrame.from_ray(o, d)
    mesh = data.cluster.mesh
    values = mesh.scalar_block(field_id, timestep)
    if stats is not None:
        stats.segments += 1
    max_steps = 4 * mesh.element_count() + 16
    color = np.zeros(3)
    alpha = 0.0
    try:
        state = start_state(segment, data)
        steps = 0
        k = 0
        t = segment.t_entry + 0.5 * step
        while t < segment.t_exit and alpha < opaque:
            p = o + t * d
            while True:
                ids = np.asarray(state.vertex_ids, dtype=np.int64)
                inside, s = contains_and_interpolate(state.kind, mesh.positions[ids], values[ids], p)
                if inside:
                    break
                steps += 1
                if steps > max_steps:
                    raise MarchFailure(f"cluster {data.cluster_id}: exceeded {max_steps} element steps")
                state = advance(state, data, frame, stats)
                if state is None:
                    break
            if state is None:
                break
            rgb, a = tf.eval(s)
            alpha = _accumulate(color, alpha, rgb, a)
            if stats is not None:
                stats.samples += 1
            k += 1
            t = segment.t_entry + (k + 0.5) * step
    except MarchFailure as exc:
        if stats is not None:
            stats.failures += 1
        log_once("MARCH", "failure", f"segment dropped: {exc}", level="WARN")
        return None
    if alpha <= 0.0:
        return None
    if stats is not None:
        stats.fragments += 1
    return Fragment(tuple(color.tolist()), alpha, segment.t_entry)


def integrate_brute_force(
    cluster: Cluster,
    tf: TransferFunction,
    step: float,
    origin,
    direction,
    t_entry: float,
    t_exit: float,
    field_id: int = 0,
    timestep: int = 0,
    opaque: float = OPAQUE_THRESHOLD,
    on_sample: Optional[Callable[[float, Optional[tuple]], None]] = None,
) -> Optional[Fragment]:
    """Straight-line reference: every sample is point-located over all elements."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    mesh = cluster.mesh
    values = mesh.scalar_block(field_id, timestep)
    color = np.zeros(3)
    alpha = 0.0
    k = 0
    t = t_entry + 0.5 * step
    while t < t_exit and alpha < opaque:
        p = o + t * d
        hit = None
        for kind, i in mesh.iter_elements():
            ids = mesh.elements[kind][i].astype(np.int64)
            inside, s = contains_and_interpolate(kind, mesh.positions[ids], values[ids], p)
            if inside:
                hit = (kind, i, s)
                break
        if on_sample is not None:
            on_sample(t, hit[:2] if hit else None)
        if hit is None:
            break
        rgb, a = tf.eval(hit[2])
        alpha = _accumulate(color, alpha, rgb, a)
        k += 1
        t = t_entry + (k + 0.5) * step
    if alpha <= 0.0:
        return None
    return Fragment(tuple(color.tolist()), alpha, t_entry)
