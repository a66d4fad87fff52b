"""
Transfer functions: piecewise-linear (rgb, alpha) over a scalar domain.

File format: first line `domain sMin sMax`, then one `s r g b a` line per
control point with strictly increasing s. Blank lines and `#` comments are
ignored.
"""

from dataclasses import dataclass

import matplotlib
import numpy as np


@dataclass(frozen=True)
class TransferFunction:
    scalars: np.ndarray     # (n,) strictly increasing
    rgba: np.ndarray        # (n, 4), straight (not premultiplied) color + opacity
    domain: tuple[float, float]

    def __post_init__(self):
        s = np.asarray(self.scalars, dtype=np.float64).reshape(-1)
        c = np.asarray(self.rgba, dtype=np.float64).reshape(-1, 4)
        if len(s) == 0 or len(s) != len(c):
            raise ValueError("transfer function needs matching, non-empty control scalars and colors")
        if np.any(np.diff(s) <= 0):
            raise ValueError("transfer function control scalars must be strictly increasing")
        if np.any(c < 0) or np.any(c > 1):
            raise ValueError("transfer function colors and opacities must lie in [0, 1]")
        lo, hi = float(self.domain[0]), float(self.domain[1])
        if not lo <= hi:
            raise ValueError(f"invalid transfer function domain [{lo}, {hi}]")
        object.__setattr__(self, "scalars", s)
        object.__setattr__(self, "rgba", c)
        object.__setattr__(self, "domain", (lo, hi))

    @property
    def is_transparent(self) -> bool:
        return bool(np.all(self.rgba[:, 3] == 0))

    def eval(self, scalar: float) -> tuple[np.ndarray, float]:
        """(rgb, alpha) at a scalar clamped to the domain."""
        x = min(max(float(scalar), self.domain[0]), self.domain[1])
        out = np.array([np.interp(x, self.scalars, self.rgba[:, c]) for c in range(4)])
        return out[:3], float(out[3])

    def eval_many(self, scalars) -> np.ndarray:
        x = np.clip(np.asarray(scalars, dtype=np.float64), *self.domain)
        return np.stack([np.interp(x, self.scalars, self.rgba[:, c]) for c in range(4)], axis=-1)


def eval_transfer_function(tf: TransferFunction, scalar: float) -> tuple[np.ndarray, float]:
    return tf.eval(scalar)


def parse_tf(text: str) -> TransferFunction:
    domain = None
    points = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if domain is None:
            if parts[0] != "domain" or len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'domain sMin sMax', got {raw!r}")
            domain = (float(parts[1]), float(parts[2]))
            continue
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 's r g b a', got {raw!r}")
        points.append([float(p) for p in parts])
    if domain is None or not points:
        raise ValueError("transfer function file needs a domain line and at least one control point")
    arr = np.array(points)
    return TransferFunction(arr[:, 0], arr[:, 1:], domain)


def load_tf_file(path: str) -> TransferFunction:
    with open(path, "r", encoding="utf-8") as f:
        return parse_tf(f.read())


def format_tf(tf: TransferFunction) -> str:
    lines = [f"domain {float(tf.domain[0])!r} {float(tf.domain[1])!r}"]
    for s, rgba in zip(tf.scalars, tf.rgba):
        lines.append(" ".join(repr(float(v)) for v in (s, *rgba)))
    return "\n".join(lines) + "\n"


def save_tf_file(tf: TransferFunction, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_tf(tf))


def constant_tf(rgb, alpha: float, domain=(0.0, 1.0)) -> TransferFunction:
    c = [*rgb, alpha]
    return TransferFunction([domain[0], domain[1] if domain[1] > domain[0] else domain[0] + 1.0], [c, c], domain)


def transparent_tf(domain=(0.0, 1.0)) -> TransferFunction:
    return constant_tf((0.0, 0.0, 0.0), 0.0, domain)


def colormap_tf(name: str = "viridis", domain=(0.0, 1.0), max_alpha: float = 0.3, points: int = 16) -> TransferFunction:
    """Colors sampled from a matplotlib colormap, opacity ramping linearly to max_alpha."""
    cmap = matplotlib.colormaps[name]
    x = np.linspace(0.0, 1.0, points)
    rgba = np.array(cmap(x), dtype=np.float64)
    rgba[:, 3] = x * max_alpha
    s = domain[0] + x * (domain[1] - domain[0])
    return TransferFunction(s, rgba, domain)
