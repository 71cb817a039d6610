from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepkit.errors import EmptyCloudError
from stepkit.geometry import PointCloud, chamfer, chamfer_bruteforce
from stepkit.geometry import _kernels


def cloud(arr):
    return PointCloud(np.asarray(arr, dtype=float))


class TestChamfer:
    def test_identity_is_zero(self):
        rng = np.random.default_rng(0)
        p = cloud(rng.normal(size=(64, 3)))
        assert chamfer(p, p) == 0.0

    def test_singleton_pair(self):
        p = cloud([[0.0, 0.0, 0.0]])
        q = cloud([[1.0, 0.0, 0.0]])
        assert chamfer(p, q) == pytest.approx(2.0, abs=1e-15)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        p = cloud(rng.normal(size=(40, 3)))
        q = cloud(rng.normal(size=(55, 3)))
        assert chamfer(p, q) == pytest.approx(chamfer(q, p), abs=0)

    def test_empty_rejected(self):
        with pytest.raises(EmptyCloudError):
            chamfer(np.zeros((0, 3)), np.ones((4, 3)))

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            p = cloud(rng.normal(size=(rng.integers(1, 200), 3)))
            q = cloud(rng.normal(size=(rng.integers(1, 200), 3)))
            assert chamfer(p, q) == pytest.approx(chamfer_bruteforce(p, q), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_nonnegative_and_symmetric_property(self, seed):
        rng = np.random.default_rng(seed)
        p = cloud(rng.normal(size=(rng.integers(1, 30), 3)))
        q = cloud(rng.normal(size=(rng.integers(1, 30), 3)))
        d = chamfer(p, q)
        assert d >= 0.0
        assert d == chamfer(q, p)


class TestKernels:
    def test_min_sqdist_paths_agree(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(50, 3))
        b = rng.normal(size=(70, 3))
        got = _kernels.min_sqdist(a, b)
        want = _kernels.min_sqdist_numpy(a, b)
        assert np.allclose(got, want, atol=1e-12)

    def test_spfh_paths_agree(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(30, 3))
        normals = rng.normal(size=(30, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        # dense CSR neighborhood: everyone pairs with everyone else
        idx = []
        start = [0]
        for i in range(30):
            idx.extend(j for j in range(30) if j != i)
            start.append(len(idx))
        idx = np.array(idx, dtype=np.int64)
        start = np.array(start, dtype=np.int64)
        got = _kernels.spfh_histograms(pts, normals, idx, start)
        want = _kernels.spfh_histograms_numpy(pts, normals, idx, start)
        assert np.allclose(got, want, atol=1e-9)
        dists = np.linalg.norm(pts[np.repeat(np.arange(30), 29)] - pts[idx], axis=1)
        got_f = _kernels.fpfh_from_spfh(got, idx, start, dists)
        want_f = _kernels.fpfh_from_spfh_numpy(want, idx, start, dists)
        assert np.allclose(got_f, want_f, atol=1e-9)
