import numpy as np
import pytest

from patchrestore.degrade import (
    Blur,
    Downsample,
    Identity,
    Mask,
    NoiseModel,
    builtin_kernel,
    degrade,
    gaussian_kernel,
    load_kernel,
    save_kernel,
)


def random_operators(shape, rng):
    kernel = rng.random((5, 3))
    keep = rng.random(shape) < 0.5
    return [
        Identity(shape),
        Blur(kernel, shape),
        Downsample(2, shape, antialias_sigma=0.8),
        Mask(keep),
    ]


def assert_adjoint(op, rng, tol=1e-10):
    x = rng.standard_normal(op.in_shape)
    v = rng.standard_normal(op.out_shape)
    lhs = float(np.sum(op.apply(x) * v))
    rhs = float(np.sum(x * op.adjoint(v)))
    assert abs(lhs - rhs) <= tol * max(1.0, abs(lhs), abs(rhs))


class TestApply:
    def test_identity_copies(self):
        x = np.random.default_rng(0).random((6, 6))
        out = Identity(x.shape).apply(x)
        assert np.array_equal(out, x)
        out[0, 0] = -1
        assert x[0, 0] != -1

    def test_delta_kernel_is_identity(self):
        x = np.random.default_rng(1).random((8, 8))
        assert np.allclose(Blur(np.ones((1, 1)), x.shape).apply(x), x, atol=1e-14)

    def test_downsample_preserves_constants(self):
        op = Downsample(2, (10, 10), antialias_sigma=0.8)
        out = op.apply(np.full((10, 10), 0.6))
        assert out.shape == (5, 5)
        assert np.allclose(out, 0.6, atol=1e-12)

    def test_downsample_output_dims_ceil(self):
        for shape, k, expected in [((9, 7), 2, (5, 4)), ((12, 12), 3, (4, 4))]:
            assert Downsample(k, shape).out_shape == expected

    def test_mask_zeroes_dropped_pixels(self):
        keep = np.array([[1, 0], [0, 1]])
        out = Mask(keep).apply(np.ones((2, 2)))
        assert np.array_equal(out, keep.astype(float))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            Identity((4, 4)).apply(np.zeros((3, 4)))

    def test_kernel_must_be_odd_and_normalizes(self):
        with pytest.raises(ValueError):
            Blur(np.ones((2, 3)), (8, 8))
        op = Blur(np.full((3, 3), 2.0), (8, 8))
        assert op.kernel.sum() == pytest.approx(1.0)

    def test_blur_commutes_with_constant_shift(self):
        rng = np.random.default_rng(2)
        x = rng.random((12, 12))
        op = Blur(rng.random((5, 5)), x.shape)
        assert np.allclose(op.apply(x + 0.3), op.apply(x) + 0.3, atol=1e-12)


class TestAdjoint:
    def test_identity_and_mask_self_adjoint(self):
        rng = np.random.default_rng(3)
        v = rng.standard_normal((6, 6))
        assert np.array_equal(Identity((6, 6)).adjoint(v), v)
        mask = Mask(rng.random((6, 6)) < 0.5)
        assert np.array_equal(mask.adjoint(v), mask.apply(v))

    def test_adjoint_identity_all_kinds(self):
        rng = np.random.default_rng(4)
        for op in random_operators((16, 12), rng):
            for _ in range(10):
                assert_adjoint(op, rng)

    def test_normal_operator_is_psd(self):
        rng = np.random.default_rng(5)
        for op in random_operators((10, 10), rng):
            x = rng.standard_normal((10, 10))
            assert float(np.sum(op.adjoint(op.apply(x)) * x)) >= -1e-12


class TestDegrade:
    def test_zero_noise_equals_apply(self):
        x = np.random.default_rng(6).random((8, 8))
        op = Identity(x.shape)
        assert np.array_equal(degrade(op, x, NoiseModel(0.0, 7)), op.apply(x))

    def test_fixed_seed_reproducible(self):
        x = np.random.default_rng(7).random((16, 16))
        op = Identity(x.shape)
        a = degrade(op, x, NoiseModel(0.02, 99))
        b = degrade(op, x, NoiseModel(0.02, 99))
        assert np.array_equal(a, b)

    def test_noise_level_law_of_large_numbers(self):
        x = np.random.default_rng(8).random((256, 256))
        out = degrade(Identity(x.shape), x, NoiseModel(0.01, 123))
        measured = float(np.std(out - x))
        assert 0.0095 <= measured <= 0.0105

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel(-0.1, 0)


class TestKernels:
    def test_gaussian_kernel_normalized_and_truncated(self):
        k = gaussian_kernel(0.8)
        assert k.shape == (7, 7)  # radius ceil(3*0.8) = 3
        assert k.sum() == pytest.approx(1.0)
        assert np.array_equal(gaussian_kernel(0.0), [[1.0]])

    def test_file_round_trip(self, tmp_path):
        kernel = np.random.default_rng(9).random((3, 5))
        kernel /= kernel.sum()
        path = tmp_path / "k.txt"
        save_kernel(kernel, path)
        assert np.allclose(load_kernel(path), kernel, atol=1e-12)

    def test_loader_normalizes(self, tmp_path):
        path = tmp_path / "k.txt"
        path.write_text("1 3\n2 2 2\n")
        assert np.allclose(load_kernel(path), [[1 / 3, 1 / 3, 1 / 3]])

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 3\n1 2\n")
        with pytest.raises(ValueError):
            load_kernel(path)

    def test_builtin_kernels(self):
        k1 = builtin_kernel("kernel1")
        k2 = builtin_kernel("kernel2")
        assert k1.shape == (17, 17) and k2.shape == (19, 19)
        assert k1.sum() == pytest.approx(1.0) and k2.sum() == pytest.approx(1.0)
        with pytest.raises(ValueError):
            builtin_kernel("kernel9")
