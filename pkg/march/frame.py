from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RayFrame:
    """Right-handed orthonormal basis (u, v, w) with w along the ray."""
    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @classmethod
    def from_ray(cls, origin, direction) -> "RayFrame":
        w = np.asarray(direction, dtype=np.float64)
        w = w / np.linalg.norm(w)
        # Helper axis: the world axis least aligned with w
        helper = np.zeros(3)
        helper[int(np.argmin(np.abs(w)))] = 1.0
        u = np.cross(helper, w)
        u /= np.linalg.norm(u)
        v = np.cross(w, u)
        return cls(np.asarray(origin, dtype=np.float64), u, v, w)

    @property
    def basis(self) -> np.ndarray:
        return np.stack([self.u, self.v, self.w])

    def to_ray_centric(self, points) -> np.ndarray:
        """(x, y, z) with the ray along +z; accepts one point or an (n, 3) array."""
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.basis.T

    def project_2d(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.basis[:2].T

    def to_world(self, local) -> np.ndarray:
        return self.origin + np.asarray(local, dtype=np.float64) @ self.basis
