"""
Binned-SAH bounding volume hierarchy over shell triangles, with a
front-face-culled, watertight closest-hit query.

Only back faces (dot(dir, outward normal) > 0) are reported: a forward ray
finds the face it leaves a cluster through, a backward ray (-dir) the face
it entered through.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

MAX_LEAF_TRIS = 4
SAH_BINS = 12
TRAVERSAL_COST = 1.0
INTERSECT_COST = 1.0


@dataclass
class ShellBVH:
    lo: np.ndarray          # (nodes, 3)
    hi: np.ndarray          # (nodes, 3)
    left: np.ndarray        # child index, -1 for leaves
    right: np.ndarray
    start: np.ndarray       # leaf range into `order`
    count: np.ndarray
    order: np.ndarray       # triangle ids in leaf order
    tris: np.ndarray        # (n, 3, 3) triangle vertex positions
    normals: np.ndarray     # (n, 3) outward (unnormalized) normals

    @property
    def node_count(self) -> int:
        return len(self.lo)

    @cached_property
    def node_lists(self) -> tuple[list, list, list, list, list, list]:
        """Node arrays as Python lists; traversal touches one node at a time."""
        return (self.lo.tolist(), self.hi.tolist(), self.left.tolist(), self.right.tolist(),
                self.start.tolist(), self.count.tolist())

    def leaf_ranges(self):
        for n in range(self.node_count):
            if self.left[n] < 0:
                yield n, self.order[self.start[n]:self.start[n] + self.count[n]]


def _area(lo: np.ndarray, hi: np.ndarray) -> float:
    e = np.maximum(hi - lo, 0.0)
    return float(2.0 * (e[0] * e[1] + e[1] * e[2] + e[2] * e[0]))


def _sah_split(ids: np.ndarray, cents: np.ndarray, tlo: np.ndarray, thi: np.ndarray):
    """Best (axis, mask_left) by binned SAH, or None if centroids coincide."""
    best = None
    cset = cents[ids]
    cmin, cmax = cset.min(axis=0), cset.max(axis=0)
    for axis in range(3):
        extent = cmax[axis] - cmin[axis]
        if extent <= 0.0:
            continue
        bins = np.minimum(((cset[:, axis] - cmin[axis]) / extent * SAH_BINS).astype(np.int64), SAH_BINS - 1)
        counts = np.bincount(bins, minlength=SAH_BINS)
        blo = np.full((SAH_BINS, 3), np.inf)
        bhi = np.full((SAH_BINS, 3), -np.inf)
        for b in range(SAH_BINS):
            sel = ids[bins == b]
            if len(sel):
                blo[b] = tlo[sel].min(axis=0)
                bhi[b] = thi[sel].max(axis=0)
        for split in range(1, SAH_BINS):
            nl, nr = counts[:split].sum(), counts[split:].sum()
            if nl == 0 or nr == 0:
                continue
            cost = (_area(blo[:split].min(axis=0), bhi[:split].max(axis=0)) * nl
                    + _area(blo[split:].min(axis=0), bhi[split:].max(axis=0)) * nr)
            if best is None or cost < best[0]:
                best = (cost, bins < split)
    return None if best is None else best[1]


def build_bvh(tris: np.ndarray) -> ShellBVH:
    """Build over (n, 3, 3) triangles; leaves hold at most MAX_LEAF_TRIS."""
    tris = np.asarray(tris, dtype=np.float64).reshape(-1, 3, 3)
    n = len(tris)
    tlo, thi = tris.min(axis=1), tris.max(axis=1)
    cents = tris.mean(axis=1)
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])

    lo, hi, left, right, start, count = [], [], [], [], [], []
    order: list[int] = []

    def new_node(ids):
        lo.append(tlo[ids].min(axis=0) if len(ids) else np.zeros(3))
        hi.append(thi[ids].max(axis=0) if len(ids) else np.zeros(3))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(lo) - 1

    stack = [(new_node(np.arange(n)), np.arange(n))]
    while stack:
        node, ids = stack.pop()
        if len(ids) <= MAX_LEAF_TRIS:
            start[node] = len(order)
            count[node] = len(ids)
            order.extend(int(i) for i in ids)
            continue
        mask = _sah_split(ids, cents, tlo, thi)
        if mask is None:
            # Coincident centroids: fall back to an index median split
            mask = np.arange(len(ids)) < len(ids) // 2
        lids, rids = ids[mask], ids[~mask]
        ln, rn = new_node(lids), new_node(rids)
        left[node], right[node] = ln, rn
        stack.append((rn, rids))
        stack.append((ln, lids))

    return ShellBVH(
        lo=np.array(lo).reshape(-1, 3), hi=np.array(hi).reshape(-1, 3),
        left=np.array(left, dtype=np.int64), right=np.array(right, dtype=np.int64),
        start=np.array(start, dtype=np.int64), count=np.array(count, dtype=np.int64),
        order=np.array(order, dtype=np.int64), tris=tris, normals=normals,
    )


@dataclass
class _RayPrep:
    origin: np.ndarray
    direction: np.ndarray
    kx: int
    ky: int
    kz: int
    sx: float
    sy: float
    sz: float


def _prepare(origin, direction) -> _RayPrep:
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    kz = int(np.argmax(np.abs(d)))
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if d[kz] < 0.0:
        kx, ky = ky, kx
    return _RayPrep(o, d, kx, ky, kz, d[kx] / d[kz], d[ky] / d[kz], 1.0 / d[kz])


def _box_entry(origin: list, inv: list, lo: list, hi: list, t_min: float, t_max: float) -> Optional[float]:
    """Slab test on plain floats; `inv[axis]` is None for a zero direction component."""
    enter, leave = t_min, t_max
    for axis in range(3):
        o = origin[axis]
        if inv[axis] is None:
            # Parallel to the slab: inside or never (a boundary origin counts as inside)
            if o < lo[axis] or o > hi[axis]:
                return None
            continue
        t0 = (lo[axis] - o) * inv[axis]
        t1 = (hi[axis] - o) * inv[axis]
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > enter:
            enter = t0
        if t1 < leave:
            leave = t1
    return enter if enter <= leave else None


def intersect_back_faces(ray: _RayPrep, tris: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Watertight ray/triangle distances for back faces; NaN where missed."""
    k = (ray.kx, ray.ky, ray.kz)
    a = (tris[:, 0] - ray.origin)[:, k]
    b = (tris[:, 1] - ray.origin)[:, k]
    c = (tris[:, 2] - ray.origin)[:, k]
    ax, ay = a[:, 0] - ray.sx * a[:, 2], a[:, 1] - ray.sy * a[:, 2]
    bx, by = b[:, 0] - ray.sx * b[:, 2], b[:, 1] - ray.sy * b[:, 2]
    cx, cy = c[:, 0] - ray.sx * c[:, 2], c[:, 1] - ray.sy * c[:, 2]
    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax
    det = u + v + w
    inside = (((u >= 0) & (v >= 0) & (w >= 0)) | ((u <= 0) & (v <= 0) & (w <= 0))) & (det != 0.0)
    back = normals @ ray.direction > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (u * a[:, 2] + v * b[:, 2] + w * c[:, 2]) * ray.sz / det
    return np.where(inside & back, t, np.nan)


def trace_front_face_culled(bvh: ShellBVH, origin, direction, t_min: float = 0.0,
                            t_max: float = np.inf) -> Optional[tuple[int, float]]:
    """Nearest back-face hit (face index, t) with t_min < t < t_max, or None.

    Equal distances resolve to the lowest face index.
    """
    if bvh.node_count == 0 or len(bvh.tris) == 0:
        return None
    ray = _prepare(origin, direction)
    lo, hi, left, right, start, count = bvh.node_lists
    o = ray.origin.tolist()
    inv = [None if c == 0.0 else 1.0 / c for c in ray.direction.tolist()]
    best_t, best_face = t_max, -1
    stack = [0]
    while stack:
        node = stack.pop()
        entry = _box_entry(o, inv, lo[node], hi[node], t_min, best_t)
        if entry is None:
            continue
        if left[node] < 0:
            ids = bvh.order[start[node]:start[node] + count[node]]
            ts = intersect_back_faces(ray, bvh.tris[ids], bvh.normals[ids])
            for face, t in zip(ids.tolist(), ts.tolist()):
                if t != t or t <= t_min:
                    continue
                if t < best_t or (t == best_t and face < best_face):
                    best_t, best_face = t, face
            continue
        stack.append(right[node])
        stack.append(left[node])
    return None if best_face < 0 else (best_face, best_t)


def trace_brute_force(tris: np.ndarray, origin, direction, t_min: float = 0.0,
                      t_max: float = np.inf) -> Optional[tuple[int, float]]:
    """Exhaustive all-triangle version of trace_front_face_culled."""
    tris = np.asarray(tris, dtype=np.float64).reshape(-1, 3, 3)
    if len(tris) == 0:
        return None
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    ts = intersect_back_faces(_prepare(origin, direction), tris, normals)
    ok = ~np.isnan(ts) & (ts > t_min) & (ts < t_max)
    if not ok.any():
        return None
    cand = np.where(ok)[0]
    best = cand[np.argmin(ts[cand])]
    return int(best), float(ts[best])
