"""Point clouds, rigid transforms and surface sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateMeshError, EmptyCloudError
from .stl import TriMesh


@dataclass
class PointCloud:
    points: np.ndarray  # (n, 3) float64
    source_seed: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points must be an (n, 3) array")

    def __len__(self) -> int:
        return len(self.points)

    def centroid(self) -> np.ndarray:
        if len(self.points) == 0:
            raise EmptyCloudError("empty point cloud has no centroid")
        return self.points.mean(axis=0)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation-then-translation map ``x -> R x + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation",
                           np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=np.float64))
        r = self.rotation
        if r.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation length 3")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation has negative determinant")

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """The map ``x -> self(inner(x))``."""
        return RigidTransform(self.rotation @ inner.rotation,
                              self.rotation @ inner.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


def sample_points(mesh: TriMesh, n: int, seed: int) -> PointCloud:
    """Draw ``n`` points uniformly from the mesh surface.

    Triangles are chosen with probability proportional to area (zero-area
    triangles excluded) and positions are barycentric-uniform. The generator
    is counter-based (Philox), so a given (mesh, n, seed) always produces
    the same cloud, on any platform.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    areas = mesh.triangle_areas()
    positive = areas > 0.0
    if not np.any(positive):
        raise DegenerateMeshError("mesh has no positive-area triangles")
    areas = areas[positive]
    tri_idx = np.flatnonzero(positive)
    cumulative = np.cumsum(areas)
    total = cumulative[-1]

    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.random((n, 3))
    chosen = tri_idx[np.searchsorted(cumulative, draws[:, 0] * total, side="right")
                     .clip(0, len(areas) - 1)]
    a, b, c = mesh.triangle_corners()
    u = draws[:, 1]
    v = draws[:, 2]
    flip = u + v > 1.0
    u = np.where(flip, 1.0 - u, u)
    v = np.where(flip, 1.0 - v, v)
    w = 1.0 - u - v
    points = (w[:, None] * a[chosen] + u[:, None] * b[chosen] + v[:, None] * c[chosen])
    return PointCloud(points, source_seed=seed)


def scale_factor(cloud: PointCloud) -> float:
    """Root mean square distance of the points from their centroid."""
    if len(cloud) == 0:
        raise EmptyCloudError("empty point cloud has no scale factor")
    centered = cloud.points - cloud.points.mean(axis=0)
    return float(np.sqrt(np.mean(np.einsum("ij,ij->i", centered, centered))))
