"""
Synthetic, possibly non-convex and interleaving partitions of a regular grid.

Every grid cell is decomposed into elements of one kind (conforming across
cells of the same decomposition), then cells are assigned to clusters by a
partition pattern. Each cluster gets its own local vertex numbering.
"""

from itertools import permutations
from typing import Callable, Optional, Sequence

import numpy as np

from common.errors import PartitionError
from mesh.cells import FACE_TABLE, Kind, element_volume
from mesh.mesh_core import Cluster, Mesh

MIXES = ("tet", "pyr", "wed", "hex", "mixed")
PATTERNS = ("slabs", "checkerboard", "interleavedCombs")

# Unit cube corners in VTK hexahedron order
CUBE_CORNERS = np.array([
    (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
    (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
], dtype=np.int64)
_CORNER_OF_BITS = {tuple(c): i for i, c in enumerate(CUBE_CORNERS.tolist())}

# Columns of a 'mixed' grid cycle through these kinds; all of them expose
# full quads on x/y cube faces and share their z faces only with their own kind.
MIXED_COLUMN_KINDS = (Kind.HEX, Kind.WED, Kind.PYR)

FieldFn = Callable[[np.ndarray, int, int], np.ndarray]


def distance_field(points: np.ndarray, field_id: int, timestep: int, center=None, radius=None) -> np.ndarray:
    """Default analytic field: normalized distance from the domain center.

    Field 1 is the normalized x coordinate; higher fields repeat the pattern.
    Each timestep scales the field by (1 - 0.1 t).
    """
    p = np.asarray(points, dtype=np.float64)
    lo, hi = p.min(axis=0), p.max(axis=0)
    c = (lo + hi) / 2 if center is None else np.asarray(center, dtype=np.float64)
    r = np.linalg.norm(hi - lo) / 2 if radius is None else float(radius)
    if field_id % 2 == 0:
        base = np.linalg.norm(p - c, axis=1) / max(r, 1e-300)
    else:
        span = max(hi[0] - lo[0], 1e-300)
        base = (p[:, 0] - lo[0]) / span
    return np.clip(base * (1.0 - 0.1 * timestep), 0.0, 1.0)


def _kuhn_tets() -> list[tuple[int, ...]]:
    """Six tets sharing the cube's main diagonal, positively oriented."""
    tets = []
    for perm in permutations(range(3)):
        bits = [0, 0, 0]
        path = [_CORNER_OF_BITS[tuple(bits)]]
        for axis in perm:
            bits[axis] = 1
            path.append(_CORNER_OF_BITS[tuple(bits)])
        if element_volume(Kind.TET, CUBE_CORNERS[path].astype(np.float64)) < 0:
            path[1], path[2] = path[2], path[1]
        tets.append(tuple(path))
    return tets


KUHN_TETS = _kuhn_tets()
# Prisms split along the cube's xy diagonal (0,0)-(1,1), bottom triangle wound downward
CUBE_WEDGES = ((0, 2, 1, 4, 6, 5), (0, 3, 2, 4, 7, 6))


def _cell_kind(mix: str, i: int, j: int) -> Kind:
    if mix == "mixed":
        return MIXED_COLUMN_KINDS[(i + j) % len(MIXED_COLUMN_KINDS)]
    return {"tet": Kind.TET, "pyr": Kind.PYR, "wed": Kind.WED, "hex": Kind.HEX}[mix]


def _cell_cluster(pattern: str, dims, n: int, i: int, j: int, k: int) -> int:
    nx, ny, nz = dims
    if pattern == "slabs":
        return i * n // nx
    if pattern == "checkerboard":
        bi, bj, bk = i * 2 // nx, j * 2 // ny, k * 2 // nz
        if n == 2:
            return (bi + bj + bk) % 2
        return (bi + 2 * bj + 4 * bk) % n
    # interleavedCombs: a bottom spine with teeth on even x columns, a top
    # spine with teeth on odd columns; pairs of combs stacked along y.
    if k == 0:
        comb = 0
    elif k == nz - 1:
        comb = 1
    else:
        comb = i % 2
    return comb + 2 * (j * (n // 2) // ny)


def _check_partition(dims, mix: str, pattern: str, n: int) -> None:
    nx, ny, nz = dims
    if min(dims) < 2:
        raise PartitionError(f"grid dims must be >= 2 per axis, got {dims}")
    if mix not in MIXES:
        raise PartitionError(f"unsupported element mix {mix!r} (choose from {MIXES})")
    if pattern not in PATTERNS:
        raise PartitionError(f"unsupported partition pattern {pattern!r} (choose from {PATTERNS})")
    if n < 1:
        raise PartitionError("need at least one cluster")
    if pattern == "slabs" and n > nx:
        raise PartitionError(f"{n} slabs do not fit {nx} cells along x")
    if pattern == "checkerboard" and n > 8:
        raise PartitionError("checkerboard supports at most 8 clusters")
    if pattern == "interleavedCombs":
        if n % 2 or n // 2 > ny:
            raise PartitionError(f"interleavedCombs needs an even cluster count <= 2*ny, got {n}")
        if nx < 3 or nz < 3:
            raise PartitionError("interleavedCombs needs at least 3 cells along x and z")


def make_synthetic_partition(
    dims: Sequence[int] = (4, 4, 4),
    mix: str = "tet",
    pattern: str = "slabs",
    n_clusters: int = 2,
    fields: int = 1,
    timesteps: int = 1,
    spacing: Optional[float] = None,
    field_fn: Optional[FieldFn] = None,
) -> list[Cluster]:
    """Build clusters tiling a dims[0] x dims[1] x dims[2] grid of cells."""
    dims = tuple(int(d) for d in dims)
    _check_partition(dims, mix, pattern, n_clusters)
    nx, ny, nz = dims
    h = 1.0 / max(dims) if spacing is None else float(spacing)

    gi, gj, gk = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij")
    grid_points = np.stack([gi.ravel(order="F"), gj.ravel(order="F"), gk.ravel(order="F")], axis=1) * h
    points = [grid_points]
    next_id = len(grid_points)

    def gid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    per_cluster: dict[int, dict[Kind, list]] = {}
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                corners = [gid(i + dx, j + dy, k + dz) for dx, dy, dz in CUBE_CORNERS.tolist()]
                kind = _cell_kind(mix, i, j)
                cid = _cell_cluster(pattern, dims, n_clusters, i, j, k)
                bucket = per_cluster.setdefault(cid, {kk: [] for kk in Kind})
                if kind == Kind.HEX:
                    bucket[Kind.HEX].append(corners)
                elif kind == Kind.TET:
                    bucket[Kind.TET].extend([corners[a] for a in t] for t in KUHN_TETS)
                elif kind == Kind.WED:
                    bucket[Kind.WED].extend([corners[a] for a in w] for w in CUBE_WEDGES)
                else:
                    points.append(np.array([[(i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h]]))
                    center = next_id
                    next_id += 1
                    for face in FACE_TABLE[Kind.HEX]:
                        outward = [corners[a] for a in face]
                        base = [outward[0], outward[3], outward[2], outward[1]]
                        bucket[Kind.PYR].append(base + [center])

    if sorted(per_cluster) != list(range(n_clusters)):
        raise PartitionError(f"pattern {pattern!r} left clusters empty for dims {dims}")

    all_points = np.concatenate(points, axis=0)
    fn = field_fn or distance_field
    values = np.stack([
        np.stack([fn(all_points, f, t) for t in range(timesteps)]) for f in range(fields)
    ]).astype(np.float32)

    clusters = []
    for cid in range(n_clusters):
        bucket = per_cluster[cid]
        used = np.unique(np.concatenate([np.asarray(v, dtype=np.int64).ravel() for v in bucket.values() if v]))
        remap = np.full(len(all_points), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        elements = {kk: remap[np.asarray(v, dtype=np.int64)].astype(np.uint32) if v else None
                    for kk, v in bucket.items()}
        mesh = Mesh(positions=all_points[used],
                    elements={kk: a for kk, a in elements.items() if a is not None},
                    scalars=values[:, :, used])
        clusters.append(Cluster(cluster_id=cid, mesh=mesh, rank=cid))
    return clusters


def assign_ranks(clusters: list[Cluster], ranks: int) -> list[Cluster]:
    """Round-robin clusters over ranks (in place); returns the same list."""
    if ranks < 1:
        raise ValueError("ranks must be >= 1")
    for c in clusters:
        c.rank = c.cluster_id % ranks
    return clusters
