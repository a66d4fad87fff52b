import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; one primary ray through each pixel center, row 0 at the top."""
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float]
    fov: float          # vertical, degrees
    width: int
    height: int

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise ValueError(f"fov must be in (0, 180), got {self.fov}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid image size {self.width}x{self.height}")
        forward = np.asarray(self.look_at, dtype=np.float64) - np.asarray(self.position, dtype=np.float64)
        if np.linalg.norm(forward) == 0.0:
            raise ValueError("camera position and look-at point coincide")
        if np.linalg.norm(np.cross(forward, self.up)) <= 1e-12 * np.linalg.norm(forward) * np.linalg.norm(self.up):
            raise ValueError("camera up vector is parallel to the view direction")

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        forward = np.asarray(self.look_at, dtype=np.float64) - np.asarray(self.position, dtype=np.float64)
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)
        return forward, right, up

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """(origin, (W*H, 3) unit directions) in row-major pixel order."""
        forward, right, up = self.basis()
        half_h = math.tan(math.radians(self.fov) / 2.0)
        half_w = half_h * self.width / self.height
        xs = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0) * half_w
        ys = (1.0 - 2.0 * (np.arange(self.height) + 0.5) / self.height) * half_h
        gx, gy = np.meshgrid(xs, ys)
        d = forward + gx.reshape(-1, 1) * right + gy.reshape(-1, 1) * up
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return np.asarray(self.position, dtype=np.float64), d


def parse_camera(spec: str, width: int, height: int) -> Camera:
    """`px,py,pz,lx,ly,lz,ux,uy,uz,fov` -> Camera."""
    parts = [float(p) for p in spec.split(",")]
    if len(parts) != 10:
        raise ValueError(f"camera needs 10 comma-separated numbers (pos, look, up, fov), got {len(parts)}")
    return Camera(tuple(parts[0:3]), tuple(parts[3:6]), tuple(parts[6:9]), parts[9], width, height)


def parse_size(spec: str) -> tuple[int, int]:
    try:
        w, h = (int(p) for p in spec.lower().split("x"))
    except ValueError:
        raise ValueError(f"size must look like WxH, got {spec!r}")
    if w < 1 or h < 1:
        raise ValueError(f"invalid image size {spec!r}")
    return w, h


def framing_camera(lo, hi, width: int, height: int, fov: float = 40.0, direction=(0.23, 0.31, 1.0)) -> Camera:
    """Camera looking at the center of a bounding box from far enough to see all of it."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    center = 0.5 * (lo + hi)
    radius = 0.5 * float(np.linalg.norm(hi - lo))
    d = np.asarray(direction, dtype=np.float64)
    d /= np.linalg.norm(d)
    distance = radius / math.sin(math.radians(fov) / 2.0) * 1.05
    up = (0.0, 1.0, 0.0) if abs(d[1]) < 0.9 else (0.0, 0.0, 1.0)
    return Camera(tuple(center - distance * d), tuple(center), up, fov, width, height)
