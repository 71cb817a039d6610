"""Hot numeric kernels with numba acceleration and numpy fallbacks.

Every kernel exists in two equivalent versions: a loop-style one compiled
with ``@njit`` and a vectorized pure-numpy one. The module-level names
dispatch to the compiled versions when numba is importable and the
``STEPKIT_NO_NUMBA`` environment variable is unset; both versions stay
importable for the benchmark suite. Kernels are single-threaded on purpose:
batch evaluation parallelizes across file pairs in Python threads, and the
compiled code must be safe to enter concurrently and give thread-count
independent results.
"""

from __future__ import annotations

import math
import os

import numpy as np

NUMBA_DISABLED = os.environ.get("STEPKIT_NO_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on",
}

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via STEPKIT_NO_NUMBA")
    import numba as _nb

    HAVE_NUMBA = True
except ImportError:
    _nb = None
    HAVE_NUMBA = False

_EPS = 1e-12
_BINS = 11


# --- pairwise feature histograms (the SPFH stage of FPFH) ---

def spfh_histograms_numpy(points: np.ndarray, normals: np.ndarray,
                          neigh_idx: np.ndarray, neigh_start: np.ndarray) -> np.ndarray:
    """Per-point 33-bin histogram of pair features against its neighbors.

    Neighbor lists are CSR-style: point ``i`` pairs with
    ``neigh_idx[neigh_start[i]:neigh_start[i+1]]``. Bin layout is
    [0:11] alpha, [11:22] phi, [22:33] theta.
    """
    n = points.shape[0]
    hist = np.zeros((n, 3 * _BINS))
    counts = np.diff(neigh_start)
    src = np.repeat(np.arange(n), counts)
    dst = neigh_idx
    if len(dst) == 0:
        return hist

    p = points[src]
    q = points[dst]
    diff = q - p
    d = np.linalg.norm(diff, axis=1)
    ok = d > _EPS
    u = normals[src]
    pq = np.zeros_like(diff)
    pq[ok] = diff[ok] / d[ok, None]
    v = np.cross(pq, u)
    vn = np.linalg.norm(v, axis=1)
    ok &= vn > _EPS
    v[ok] /= vn[ok, None]
    w = np.cross(u, v)
    nq = normals[dst]

    alpha = np.einsum("ij,ij->i", v, nq)
    phi = np.einsum("ij,ij->i", u, pq)
    theta = np.arctan2(np.einsum("ij,ij->i", w, nq),
                       np.einsum("ij,ij->i", u, nq))

    b_alpha = np.clip(((alpha + 1.0) * 0.5 * _BINS).astype(np.int64), 0, _BINS - 1)
    b_phi = np.clip(((phi + 1.0) * 0.5 * _BINS).astype(np.int64), 0, _BINS - 1)
    b_theta = np.clip(((theta + math.pi) / (2.0 * math.pi) * _BINS).astype(np.int64),
                      0, _BINS - 1)

    flat = hist.reshape(-1)
    base = src[ok] * 3 * _BINS
    np.add.at(flat, base + b_alpha[ok], 1.0)
    np.add.at(flat, base + _BINS + b_phi[ok], 1.0)
    np.add.at(flat, base + 2 * _BINS + b_theta[ok], 1.0)
    return hist


def fpfh_from_spfh_numpy(spfh: np.ndarray, neigh_idx: np.ndarray,
                         neigh_start: np.ndarray, dists: np.ndarray) -> np.ndarray:
    """Distance-weighted neighbor combination: out[i] = spfh[i] +
    mean_j(spfh[j] / d_ij) over i's neighbors."""
    n = spfh.shape[0]
    out = spfh.copy()
    counts = np.diff(neigh_start)
    src = np.repeat(np.arange(n), counts)
    ok = dists > _EPS
    if not np.any(ok):
        return out
    weights = np.zeros_like(dists)
    weights[ok] = 1.0 / dists[ok]
    contrib = spfh[neigh_idx[ok]] * weights[ok, None]
    acc = np.zeros_like(spfh)
    np.add.at(acc, src[ok], contrib)
    valid = np.zeros(n)
    np.add.at(valid, src[ok], 1.0)
    nz = valid > 0
    out[nz] += acc[nz] / valid[nz, None]
    return out


def min_sqdist_numpy(a: np.ndarray, b: np.ndarray,
                     block: int = 256) -> np.ndarray:
    """For each row of ``a``, the squared distance to the closest row of
    ``b``. Plain O(|a|*|b|) evaluation, blocked to bound memory."""
    out = np.empty(a.shape[0])
    for lo in range(0, a.shape[0], block):
        hi = min(lo + block, a.shape[0])
        diff = a[lo:hi, None, :] - b[None, :, :]
        out[lo:hi] = np.min(np.einsum("ijk,ijk->ij", diff, diff), axis=1)
    return out


if HAVE_NUMBA:

    @_nb.njit(cache=True)
    def _spfh_histograms_numba(points, normals, neigh_idx, neigh_start):  # pragma: no cover
        n = points.shape[0]
        hist = np.zeros((n, 3 * _BINS))
        for i in range(n):
            ux, uy, uz = normals[i, 0], normals[i, 1], normals[i, 2]
            px, py, pz = points[i, 0], points[i, 1], points[i, 2]
            for k in range(neigh_start[i], neigh_start[i + 1]):
                j = neigh_idx[k]
                dx = points[j, 0] - px
                dy = points[j, 1] - py
                dz = points[j, 2] - pz
                d = math.sqrt(dx * dx + dy * dy + dz * dz)
                if d <= _EPS:
                    continue
                qx, qy, qz = dx / d, dy / d, dz / d
                vx = qy * uz - qz * uy
                vy = qz * ux - qx * uz
                vz = qx * uy - qy * ux
                vn = math.sqrt(vx * vx + vy * vy + vz * vz)
                if vn <= _EPS:
                    continue
                vx, vy, vz = vx / vn, vy / vn, vz / vn
                wx = uy * vz - uz * vy
                wy = uz * vx - ux * vz
                wz = ux * vy - uy * vx
                nx, ny, nz_ = normals[j, 0], normals[j, 1], normals[j, 2]
                alpha = vx * nx + vy * ny + vz * nz_
                phi = ux * qx + uy * qy + uz * qz
                theta = math.atan2(wx * nx + wy * ny + wz * nz_,
                                   ux * nx + uy * ny + uz * nz_)
                ba = int((alpha + 1.0) * 0.5 * _BINS)
                if ba < 0:
                    ba = 0
                elif ba > _BINS - 1:
                    ba = _BINS - 1
                bp = int((phi + 1.0) * 0.5 * _BINS)
                if bp < 0:
                    bp = 0
                elif bp > _BINS - 1:
                    bp = _BINS - 1
                bt = int((theta + math.pi) / (2.0 * math.pi) * _BINS)
                if bt < 0:
                    bt = 0
                elif bt > _BINS - 1:
                    bt = _BINS - 1
                hist[i, ba] += 1.0
                hist[i, _BINS + bp] += 1.0
                hist[i, 2 * _BINS + bt] += 1.0
        return hist

    @_nb.njit(cache=True)
    def _fpfh_from_spfh_numba(spfh, neigh_idx, neigh_start, dists):  # pragma: no cover
        n = spfh.shape[0]
        m = spfh.shape[1]
        out = spfh.copy()
        for i in range(n):
            valid = 0
            acc = np.zeros(m)
            for k in range(neigh_start[i], neigh_start[i + 1]):
                d = dists[k]
                if d <= _EPS:
                    continue
                j = neigh_idx[k]
                w = 1.0 / d
                for c in range(m):
                    acc[c] += spfh[j, c] * w
                valid += 1
            if valid > 0:
                for c in range(m):
                    out[i, c] += acc[c] / valid
        return out

    @_nb.njit(cache=True)
    def _min_sqdist_numba(a, b):  # pragma: no cover
        out = np.empty(a.shape[0])
        for i in range(a.shape[0]):
            best = np.inf
            ax, ay, az = a[i, 0], a[i, 1], a[i, 2]
            for j in range(b.shape[0]):
                dx = ax - b[j, 0]
                dy = ay - b[j, 1]
                dz = az - b[j, 2]
                s = dx * dx + dy * dy + dz * dz
                if s < best:
                    best = s
            out[i] = best
        return out

    def spfh_histograms(points, normals, neigh_idx, neigh_start):
        return _spfh_histograms_numba(
            np.ascontiguousarray(points, dtype=np.float64),
            np.ascontiguousarray(normals, dtype=np.float64),
            np.ascontiguousarray(neigh_idx, dtype=np.int64),
            np.ascontiguousarray(neigh_start, dtype=np.int64))

    def fpfh_from_spfh(spfh, neigh_idx, neigh_start, dists):
        return _fpfh_from_spfh_numba(
            np.ascontiguousarray(spfh, dtype=np.float64),
            np.ascontiguousarray(neigh_idx, dtype=np.int64),
            np.ascontiguousarray(neigh_start, dtype=np.int64),
            np.ascontiguousarray(dists, dtype=np.float64))

    def min_sqdist(a, b):
        return _min_sqdist_numba(np.ascontiguousarray(a, dtype=np.float64),
                                 np.ascontiguousarray(b, dtype=np.float64))

else:
    spfh_histograms = spfh_histograms_numpy
    fpfh_from_spfh = fpfh_from_spfh_numpy
    min_sqdist = min_sqdist_numpy
