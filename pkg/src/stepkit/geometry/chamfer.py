"""Bidirectional Chamfer Distance between point clouds.

The production path uses a kd-tree; the quadratic scan is kept as an
independent oracle and must agree with it to 1e-9 on small clouds.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import EmptyCloudError
from .cloud import PointCloud


def _points(cloud) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise EmptyCloudError("chamfer distance needs non-empty (n, 3) clouds")
    return pts


def chamfer(p, q) -> float:
    """Mean squared nearest-neighbor distance from P to Q plus the same
    from Q to P. Symmetric; units are squared length."""
    a = _points(p)
    b = _points(q)
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(np.mean(d_ab ** 2) + np.mean(d_ba ** 2))


def chamfer_bruteforce(p, q) -> float:
    """O(|P|*|Q|) evaluation of the same quantity; test oracle."""
    a = _points(p)
    b = _points(q)
    d2 = np.einsum("ijk,ijk->ij", a[:, None, :] - b[None, :, :],
                   a[:, None, :] - b[None, :, :])
    return float(np.mean(d2.min(axis=1)) + np.mean(d2.min(axis=0)))
