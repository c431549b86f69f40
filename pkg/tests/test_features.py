import math

import numpy as np
import pytest

from patchrestore.features import (
    KernelModel,
    bandwidth_from_features,
    dct_feature_matrix,
    dct_features,
    image_patch_features,
    kernel_eval,
    kernel_matrix,
    kernel_vector,
)
from patchrestore.image import PatchGrid


def naive_dct2(patch):
    """O(d^4) orthonormal DCT-II by direct cosine summation."""
    d = patch.shape[0]
    out = np.zeros((d, d))
    for u in range(d):
        for v in range(d):
            cu = math.sqrt(1.0 / d) if u == 0 else math.sqrt(2.0 / d)
            cv = math.sqrt(1.0 / d) if v == 0 else math.sqrt(2.0 / d)
            acc = 0.0
            for i in range(d):
                for j in range(d):
                    acc += (
                        patch[i, j]
                        * math.cos(math.pi * (2 * i + 1) * u / (2 * d))
                        * math.cos(math.pi * (2 * j + 1) * v / (2 * d))
                    )
            out[u, v] = cu * cv * acc
    return out


class TestDCT:
    def test_constant_patch_has_only_dc(self):
        feats = dct_features(np.full((8, 8), 0.3))
        assert feats[0] == pytest.approx(8 * 0.3, abs=1e-12)
        assert np.max(np.abs(feats[1:])) <= 1e-12

    def test_parseval(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            patch = rng.standard_normal((6, 6))
            assert np.linalg.norm(dct_features(patch)) == pytest.approx(
                np.linalg.norm(patch), abs=1e-10
            )

    def test_against_direct_cosine_summation(self):
        patch = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert np.allclose(dct_features(patch), naive_dct2(patch).ravel(), atol=1e-12)
        rng = np.random.default_rng(1)
        patch = rng.random((3, 3))
        assert np.allclose(dct_features(patch), naive_dct2(patch).ravel(), atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        p, q = rng.random((5, 5)), rng.random((5, 5))
        a, b = 1.7, -0.4
        lhs = dct_features(a * p + b * q)
        rhs = a * dct_features(p) + b * dct_features(q)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12

    def test_batched_matches_single(self):
        rng = np.random.default_rng(3)
        stack = rng.random((7, 4, 4))
        batch = dct_feature_matrix(stack)
        for i in range(7):
            assert np.allclose(batch[i], dct_features(stack[i]), atol=1e-14)

    def test_drop_dc(self):
        patch = np.random.default_rng(4).random((4, 4))
        assert dct_features(patch, drop_dc=True).shape == (15,)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            dct_features(np.zeros((2, 3)))

    def test_image_patch_features_rows(self):
        rng = np.random.default_rng(5)
        img = rng.random((9, 9))
        grid = PatchGrid(4, 9, 9)
        feats = image_patch_features(img, grid)
        assert feats.shape == (grid.num_patches, 16)
        assert np.allclose(feats[0], dct_features(img[:4, :4]), atol=1e-14)


class TestBandwidth:
    def test_two_points_population_std(self):
        assert bandwidth_from_features(np.array([[0.0], [2.0]]), scale=1.0) == (
            pytest.approx(1.0, abs=1e-15)
        )

    def test_identical_features_degenerate(self):
        with pytest.raises(ValueError):
            bandwidth_from_features(np.ones((5, 3)))

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            bandwidth_from_features(np.ones((1, 3)))

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(6)
        feats = rng.random((100, 64))
        expected = 0.0
        for j in range(64):
            col = feats[:, j]
            mean = col.sum() / 100
            expected += ((col - mean) ** 2).sum() / 100
        expected = 0.2 * math.sqrt(expected)
        assert bandwidth_from_features(feats, 0.2) == pytest.approx(expected, abs=1e-10)


class TestKernel:
    model = KernelModel(bandwidth=0.5)

    def test_diagonal_is_one(self):
        f = np.random.default_rng(7).random(16)
        assert kernel_eval(f, f, self.model) == 1.0
        assert self.model.r_squared == 1.0

    def test_unit_exponent(self):
        f1 = np.zeros(4)
        f2 = np.array([0.5, 0.5, 0.0, 0.0])  # distance 0.5*sqrt(2) = bw*sqrt(2)
        model = KernelModel(bandwidth=0.5)
        assert kernel_eval(f1, f2, model) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            a, b = rng.random(9), rng.random(9)
            assert kernel_eval(a, b, self.model) == kernel_eval(b, a, self.model)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            kernel_eval(np.zeros(3), np.zeros(4), self.model)

    def test_positive_bandwidth_required(self):
        with pytest.raises(ValueError):
            KernelModel(bandwidth=0.0)


class TestKernelVector:
    model = KernelModel(bandwidth=0.7)

    def test_member_query_hits_one(self):
        rng = np.random.default_rng(9)
        feats = rng.random((8, 5))
        v = kernel_vector(feats[3], feats, self.model)
        assert v[3] == 1.0

    def test_empty_dataset(self):
        assert kernel_vector(np.zeros(4), np.zeros((0, 4)), self.model).size == 0

    def test_matches_elementwise_loop(self):
        rng = np.random.default_rng(10)
        feats = rng.random((50, 6))
        query = rng.random(6)
        v = kernel_vector(query, feats, self.model)
        for i in range(50):
            assert v[i] == pytest.approx(
                kernel_eval(query, feats[i], self.model), abs=1e-12
            )


def power_iteration_max_eig(mat, iters=500, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mat.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v = w / norm
    return float(v @ (mat @ v))


class TestKernelMatrix:
    model = KernelModel(bandwidth=0.4)

    def test_singleton(self):
        k = kernel_matrix(np.zeros((1, 4)), self.model)
        assert np.array_equal(k, [[1.0]])

    def test_duplicate_rows(self):
        rng = np.random.default_rng(11)
        feats = rng.random((5, 3))
        feats[4] = feats[2]
        k = kernel_matrix(feats, self.model)
        assert np.array_equal(k[2], k[4])

    def test_symmetric_unit_diagonal(self):
        feats = np.random.default_rng(12).random((12, 6))
        k = kernel_matrix(feats, self.model)
        assert np.array_equal(k, k.T)
        assert np.all(np.diag(k) == 1.0)

    def test_psd_via_shifted_power_iteration(self):
        feats = np.random.default_rng(13).random((20, 8))
        k = kernel_matrix(feats, self.model)
        m = k.shape[0]
        # lambda_min(K) = m - lambda_max(m I - K); the shift m dominates ||K||
        lam_max_shifted = power_iteration_max_eig(m * np.eye(m) - k)
        assert m - lam_max_shifted >= -1e-8

    def test_regularized_matrix_positive_definite(self):
        feats = np.random.default_rng(14).random((15, 8))
        k = kernel_matrix(feats, self.model)
        m, lam = 15, 0.05
        eigs = np.linalg.eigvalsh(k + m * lam * np.eye(m))
        assert eigs.min() >= m * lam - 1e-10
