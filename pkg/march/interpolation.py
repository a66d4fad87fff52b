"""
Point containment and scalar interpolation inside a single element.

Tets use barycentric coordinates. Pyramids, wedges and hexahedra invert the
VTK isoparametric map by Newton iteration from the reference centroid; a
solve that does not converge counts as outside.
"""

import numpy as np

from common.settings import NEWTON_ITERS, TAU
from mesh.cells import Kind

NEWTON_TOL = 1e-12

REFERENCE_CENTROID = {
    Kind.PYR: np.array([0.5, 0.5, 0.25]),
    Kind.WED: np.array([1.0 / 3.0, 1.0 / 3.0, 0.5]),
    Kind.HEX: np.array([0.5, 0.5, 0.5]),
}


def tet_barycentric(points: np.ndarray, p) -> np.ndarray:
    p0 = points[0]
    m = (points[1:] - p0).T
    l123 = np.linalg.solve(m, np.asarray(p, dtype=np.float64) - p0)
    return np.concatenate([[1.0 - l123.sum()], l123])


def shape_functions(kind: Kind, r: float, s: float, t: float) -> tuple[np.ndarray, np.ndarray]:
    """VTK shape function weights and their (n, 3) derivatives w.r.t. (r, s, t)."""
    if kind == Kind.HEX:
        rm, sm, tm = 1 - r, 1 - s, 1 - t
        n = np.array([rm * sm * tm, r * sm * tm, r * s * tm, rm * s * tm,
                      rm * sm * t, r * sm * t, r * s * t, rm * s * t])
        d = np.array([
            [-sm * tm, -rm * tm, -rm * sm], [sm * tm, -r * tm, -r * sm],
            [s * tm, r * tm, -r * s], [-s * tm, rm * tm, -rm * s],
            [-sm * t, -rm * t, rm * sm], [sm * t, -r * t, r * sm],
            [s * t, r * t, r * s], [-s * t, rm * t, rm * s],
        ])
        return n, d
    if kind == Kind.WED:
        u, tm = 1 - r - s, 1 - t
        n = np.array([u * tm, r * tm, s * tm, u * t, r * t, s * t])
        d = np.array([
            [-tm, -tm, -u], [tm, 0.0, -r], [0.0, tm, -s],
            [-t, -t, u], [t, 0.0, r], [0.0, t, s],
        ])
        return n, d
    if kind == Kind.PYR:
        rm, sm, tm = 1 - r, 1 - s, 1 - t
        n = np.array([rm * sm * tm, r * sm * tm, r * s * tm, rm * s * tm, t])
        d = np.array([
            [-sm * tm, -rm * tm, -rm * sm], [sm * tm, -r * tm, -r * sm],
            [s * tm, r * tm, -r * s], [-s * tm, rm * tm, -rm * s],
            [0.0, 0.0, 1.0],
        ])
        return n, d
    raise ValueError(f"no isoparametric map for {kind!r}")


def invert_isoparametric(kind: Kind, points: np.ndarray, p, iters: int = NEWTON_ITERS):
    """Reference coordinates of p, or None when Newton does not converge."""
    xi = REFERENCE_CENTROID[kind].copy()
    p = np.asarray(p, dtype=np.float64)
    for _ in range(iters):
        n, d = shape_functions(kind, *xi)
        residual = n @ points - p
        jac = points.T @ d
        try:
            delta = np.linalg.solve(jac, residual)
        except np.linalg.LinAlgError:
            return None
        xi -= delta
        if not np.all(np.isfinite(xi)):
            return None
        if np.max(np.abs(delta)) < NEWTON_TOL:
            return xi
    return None


def reference_inside(kind: Kind, xi: np.ndarray, tau: float = TAU) -> bool:
    r, s, t = xi
    lo, hi = -tau, 1 + tau
    if not (lo <= r <= hi and lo <= s <= hi and lo <= t <= hi):
        return False
    if kind == Kind.WED:
        return r + s <= hi
    return True


def contains_and_interpolate(kind: Kind, points, scalars, p, tau: float = TAU) -> tuple[bool, float]:
    """(inside, interpolated scalar); the scalar is 0.0 when outside."""
    points = np.asarray(points, dtype=np.float64)
    scalars = np.asarray(scalars, dtype=np.float64)
    kind = Kind(kind)
    if kind == Kind.TET:
        try:
            bary = tet_barycentric(points, p)
        except np.linalg.LinAlgError:
            return False, 0.0
        if np.all(bary >= -tau) and np.all(bary <= 1 + tau):
            return True, float(bary @ scalars)
        return False, 0.0
    xi = invert_isoparametric(kind, points, p)
    if xi is None or not reference_inside(kind, xi, tau):
        return False, 0.0
    n, _ = shape_functions(kind, *xi)
    return True, float(n @ scalars)


def element_contains(kind: Kind, points, p, tau: float = TAU) -> bool:
    return contains_and_interpolate(kind, points, np.zeros(len(points)), p, tau)[0]
