"""Multi-stage rigid registration: centroid shift, FPFH+RANSAC global
alignment, then point-to-point ICP refinement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..errors import EmptyCloudError, RegistrationFailedError, TooFewPointsError
from . import _kernels
from .cloud import PointCloud, RigidTransform


@dataclass(frozen=True)
class RegistrationParams:
    max_iterations: int = 100000
    confidence: float = 0.999
    inlier_threshold: float = 0.05
    edge_similarity: float = 0.9
    seed: int = 0
    min_inliers: int = 3


@dataclass
class AlignmentResult:
    """Outcome of the full alignment pipeline.

    ``stage_residuals`` holds the RMS nearest-neighbor distance after the
    center, global and icp stages; residuals are not guaranteed monotone
    across stages (a bad global hypothesis can regress before ICP fixes it).
    """

    transform: RigidTransform
    stage_residuals: dict[str, float] = field(default_factory=dict)
    icp_iterations: int = 0


def center_align(p: PointCloud, q: PointCloud) -> RigidTransform:
    """Translation mapping P's centroid onto Q's; identity rotation."""
    return RigidTransform(np.eye(3), q.centroid() - p.centroid())


def estimate_normals(points: np.ndarray, k: int = 30) -> np.ndarray:
    """Per-point unit normals from local PCA over the k nearest neighbors,
    oriented away from the cloud centroid."""
    n = len(points)
    k = min(k, n)
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k)
    if k == 1:
        idx = idx[:, None]
    neighborhoods = points[idx]
    centered = neighborhoods - neighborhoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    outward = points - points.mean(axis=0)
    flip = np.einsum("ij,ij->i", normals, outward) < 0.0
    normals[flip] *= -1.0
    return normals


def fpfh_features(cloud: PointCloud, radius: float, *, normal_k: int = 30,
                  max_neighbors: int = 100) -> np.ndarray:
    """Fast Point Feature Histograms: one 33-bin row per point.

    Three angular pair features are histogrammed into 11 bins each over
    neighbors within ``radius`` (capped at ``max_neighbors`` nearest), then
    blended with distance-weighted neighbor histograms. Rows are normalized
    to unit L1 mass; isolated points get all-zero rows.
    """
    pts = cloud.points
    if len(pts) < 10:
        raise TooFewPointsError(f"need at least 10 points, got {len(pts)}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    normals = estimate_normals(pts, k=normal_k)

    tree = cKDTree(pts)
    # k nearest within radius, self excluded; missing slots padded with n.
    dist, idx = tree.query(pts, k=max_neighbors + 1, distance_upper_bound=radius)
    dist, idx = dist[:, 1:], idx[:, 1:]
    valid = idx < len(pts)
    counts = valid.sum(axis=1).astype(np.int64)
    neigh_start = np.zeros(len(pts) + 1, dtype=np.int64)
    np.cumsum(counts, out=neigh_start[1:])
    neigh_idx = idx[valid].astype(np.int64)
    neigh_dist = dist[valid]

    spfh = _kernels.spfh_histograms(pts, normals, neigh_idx, neigh_start)
    feat = _kernels.fpfh_from_spfh(spfh, neigh_idx, neigh_start, neigh_dist)
    mass = feat.sum(axis=1)
    nz = mass > 0
    feat[nz] /= mass[nz, None]
    return feat


def best_fit_transform(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping src points onto dst (Kabsch)."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    # Re-orthonormalize to keep the RigidTransform invariant tight.
    ru, _, rvt = np.linalg.svd(r)
    r = ru @ rvt
    return RigidTransform(r, cd - r @ cs)


def ransac_register(p: PointCloud, q: PointCloud,
                    feat_p: np.ndarray, feat_q: np.ndarray,
                    params: RegistrationParams = RegistrationParams()) -> RigidTransform:
    """Coarse rigid transform from feature correspondences.

    Each hypothesis fits a transform to 3 sampled feature matches (after an
    edge-length similarity check) and is scored by its correspondence-inlier
    count at ``inlier_threshold``; iteration stops early once the requested
    confidence is reached. Deterministic for a fixed seed. Raises
    :class:`RegistrationFailedError` when no hypothesis reaches
    ``min_inliers``.
    """
    if len(p) == 0 or len(q) == 0:
        raise EmptyCloudError("cannot register empty clouds")
    if len(feat_p) != len(p) or len(feat_q) != len(q):
        raise ValueError("feature row counts must match the clouds")

    _, corr = cKDTree(feat_q).query(feat_p)
    src_all = p.points
    dst_all = q.points[corr]
    n = len(src_all)
    thr2 = params.inlier_threshold ** 2
    sim_lo = params.edge_similarity
    sim_hi = 1.0 / params.edge_similarity if params.edge_similarity > 0 else np.inf

    rng = np.random.Generator(np.random.Philox(params.seed))
    best_transform: RigidTransform | None = None
    best_inliers = -1
    best_mask: np.ndarray | None = None
    needed = params.max_iterations

    it = 0
    while it < needed and it < params.max_iterations:
        it += 1
        sel = rng.choice(n, size=3, replace=False) if n >= 3 else np.arange(n)
        s3 = src_all[sel]
        d3 = dst_all[sel]
        if len(sel) < 3:
            break
        ok = True
        for a, b in ((0, 1), (0, 2), (1, 2)):
            es = np.linalg.norm(s3[a] - s3[b])
            ed = np.linalg.norm(d3[a] - d3[b])
            if es < 1e-12 or ed < 1e-12 or not (sim_lo <= ed / es <= sim_hi):
                ok = False
                break
        if not ok:
            continue
        t = best_fit_transform(s3, d3)
        resid = t.apply(src_all) - dst_all
        mask = np.einsum("ij,ij->i", resid, resid) < thr2
        inliers = int(mask.sum())
        if inliers > best_inliers:
            best_inliers = inliers
            best_transform = t
            best_mask = mask
            ratio = inliers / n
            if 0.0 < ratio < 1.0:
                est = np.log(1.0 - params.confidence) / np.log(1.0 - ratio ** 3)
                needed = min(params.max_iterations, max(1, int(np.ceil(est))))
            elif ratio >= 1.0:
                break

    if best_transform is None or best_inliers < params.min_inliers:
        raise RegistrationFailedError(
            f"no hypothesis reached {params.min_inliers} inliers "
            f"(best {max(best_inliers, 0)})")
    if best_mask is not None and best_mask.sum() >= 3:
        best_transform = best_fit_transform(src_all[best_mask], dst_all[best_mask])
    return best_transform


def icp_refine(p: PointCloud, q: PointCloud, init: RigidTransform,
               *, max_iterations: int = 100, tolerance: float = 1e-6) -> RigidTransform:
    """Point-to-point ICP starting from ``init``; returns the refined total
    transform (``init`` itself if no step improves the residual)."""
    transform, _, _ = icp_refine_full(p, q, init, max_iterations=max_iterations,
                                      tolerance=tolerance)
    return transform


def icp_refine_full(p: PointCloud, q: PointCloud, init: RigidTransform,
                    *, max_iterations: int = 100, tolerance: float = 1e-6
                    ) -> tuple[RigidTransform, int, float]:
    """ICP with bookkeeping: (transform, accepted iterations, final RMS).

    Only residual-decreasing steps are accepted, so the RMS sequence is
    monotone; iteration stops when the relative change drops below
    ``tolerance`` or after ``max_iterations``.
    """
    if len(p) == 0 or len(q) == 0:
        raise EmptyCloudError("cannot refine alignment of empty clouds")
    src0 = p.points
    tree = cKDTree(q.points)
    transform = init
    current = transform.apply(src0)
    dist, idx = tree.query(current)
    rms = float(np.sqrt(np.mean(dist ** 2)))
    iterations = 0
    for _ in range(max_iterations):
        step = best_fit_transform(current, q.points[idx])
        candidate = step.compose(transform)
        moved = candidate.apply(src0)
        new_dist, new_idx = tree.query(moved)
        new_rms = float(np.sqrt(np.mean(new_dist ** 2)))
        if new_rms >= rms:
            break
        improvement = (rms - new_rms) / max(rms, 1e-30)
        transform, current, rms, idx = candidate, moved, new_rms, new_idx
        iterations += 1
        if improvement < tolerance:
            break
    return transform, iterations, rms


def nn_rms(src: np.ndarray, dst: np.ndarray) -> float:
    """RMS nearest-neighbor distance from src to dst."""
    dist, _ = cKDTree(dst).query(src)
    return float(np.sqrt(np.mean(dist ** 2)))
