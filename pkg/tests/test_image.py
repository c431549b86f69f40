import math

import numpy as np
import pytest

from patchrestore.image import (
    PatchGrid,
    coverage_counts,
    extract_all_patches,
    extract_patch,
    load_image,
    psnr,
    save_image,
    scatter_all_patches,
    scatter_patch_add,
)


class TestPatchGrid:
    def test_count_matches_exhaustive_enumeration(self):
        h, w = 6, 5
        for d in range(1, 6):
            grid = PatchGrid(d, h, w)
            brute = sum(
                1
                for i in range(h)
                for j in range(w)
                if i + d <= h and j + d <= w
            )
            assert grid.num_patches == brute

    def test_count_256_with_8(self):
        assert PatchGrid(8, 256, 256).num_patches == 62001

    def test_patch_too_large(self):
        with pytest.raises(ValueError):
            PatchGrid(9, 8, 10)

    def test_offset_out_of_range(self):
        grid = PatchGrid(2, 4, 4)
        with pytest.raises(IndexError):
            grid.offset(grid.num_patches)
        with pytest.raises(IndexError):
            grid.offset(-1)


class TestExtract:
    def test_unit_patches_are_pixels(self):
        img = np.array([[1.0, 2.0], [3.0, 4.0]])
        grid = PatchGrid(1, 2, 2)
        assert extract_patch(img, grid, 3) == np.array([[4.0]])

    def test_constant_field(self):
        img = np.full((5, 7), 0.37)
        grid = PatchGrid(3, 5, 7)
        for p in range(grid.num_patches):
            assert np.all(extract_patch(img, grid, p) == 0.37)

    def test_topleft_block_via_index_arithmetic(self):
        rng = np.random.default_rng(7)
        img = rng.random((16, 16))
        grid = PatchGrid(8, 16, 16)
        # oracle: row-major offset computed directly
        p = 0
        i, j = p // (16 - 8 + 1), p % (16 - 8 + 1)
        assert np.array_equal(extract_patch(img, grid, p), img[i : i + 8, j : j + 8])
        p = 37
        i, j = p // 9, p % 9
        assert np.array_equal(extract_patch(img, grid, p), img[i : i + 8, j : j + 8])


class TestScatter:
    def test_single_pixel(self):
        acc = np.zeros((2, 2))
        grid = PatchGrid(1, 2, 2)
        scatter_patch_add(acc, grid, 0, np.array([[5.0]]))
        assert np.array_equal(acc, [[5.0, 0.0], [0.0, 0.0]])

    def test_overlap_accumulates(self):
        acc = np.zeros((3, 3))
        grid = PatchGrid(2, 3, 3)
        scatter_patch_add(acc, grid, 0, np.ones((2, 2)))
        scatter_patch_add(acc, grid, 1, np.ones((2, 2)))
        assert acc[0, 1] == 2.0  # covered by both windows

    def test_adjoint_identity(self):
        rng = np.random.default_rng(3)
        grid = PatchGrid(4, 9, 11)
        x = rng.standard_normal((9, 11))
        for p in rng.integers(0, grid.num_patches, size=25):
            z = rng.standard_normal((4, 4))
            lhs = float(np.sum(extract_patch(x, grid, int(p)) * z))
            back = scatter_patch_add(np.zeros((9, 11)), grid, int(p), z)
            rhs = float(np.sum(x * back))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    def test_shape_mismatch(self):
        grid = PatchGrid(2, 3, 3)
        with pytest.raises(ValueError):
            scatter_patch_add(np.zeros((3, 3)), grid, 0, np.ones((3, 3)))


class TestCoverage:
    def test_single_patch(self):
        assert np.all(coverage_counts(PatchGrid(8, 8, 8)) == 1.0)

    def test_3x3_with_2(self):
        counts = coverage_counts(PatchGrid(2, 3, 3))
        assert counts[1, 1] == 4.0
        assert counts[0, 0] == counts[0, 2] == counts[2, 0] == counts[2, 2] == 1.0

    def test_total_count_identity(self):
        grid = PatchGrid(8, 16, 16)
        assert coverage_counts(grid).sum() == grid.num_patches * 64

    def test_partition_property(self):
        rng = np.random.default_rng(11)
        grid = PatchGrid(3, 7, 8)
        x = rng.standard_normal((7, 8))
        scattered = scatter_all_patches(np.array(extract_all_patches(x, grid)), grid)
        assert np.max(np.abs(scattered - coverage_counts(grid) * x)) <= 1e-12


class TestPSNR:
    def test_identical_is_infinite(self):
        a = np.random.default_rng(0).random((8, 8))
        assert math.isinf(psnr(a, a.copy()))

    def test_constant_offset(self):
        a = np.random.default_rng(1).random((16, 16))
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_against_double_loop_mse(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((9, 7)), rng.random((9, 7))
        mse = 0.0
        for i in range(9):
            for j in range(7):
                mse += (a[i, j] - b[i, j]) ** 2
        mse /= 63
        assert psnr(a, b) == pytest.approx(10 * math.log10(1 / mse), abs=1e-10)

    def test_symmetry_and_shift_invariance(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((6, 6)), rng.random((6, 6))
        assert psnr(a, b) == psnr(b, a)
        assert psnr(a + 0.2, b + 0.2) == pytest.approx(psnr(a, b), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))


class TestImageFiles:
    def test_pgm_round_trip_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(5)
        img = rng.random((13, 9))
        path = tmp_path / "img.pgm"
        save_image(img, path)
        back = load_image(path)
        assert np.max(np.abs(back - img)) <= 1.0 / 510 + 1e-12

    def test_ascii_and_binary_pgm_load_identically(self, tmp_path):
        img = np.random.default_rng(6).random((5, 8))
        p5, p2 = tmp_path / "a.pgm", tmp_path / "b.pgm"
        save_image(img, p5)
        save_image(img, p2, ascii_pgm=True)
        assert np.array_equal(load_image(p5), load_image(p2))

    def test_extremes_round_trip_exact(self, tmp_path):
        for value in (0.0, 1.0):
            path = tmp_path / "x.pgm"
            save_image(np.full((4, 4), value), path)
            assert np.all(load_image(path) == value)

    def test_png_round_trip(self, tmp_path):
        img = np.random.default_rng(8).random((11, 6))
        path = tmp_path / "img.png"
        save_image(img, path)
        assert np.max(np.abs(load_image(path) - img)) <= 1.0 / 510 + 1e-12

    def test_pgm_with_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_text("P2\n# a comment\n2 2\n255\n0 128\n# another\n255 64\n")
        img = load_image(path)
        assert img.shape == (2, 2)
        assert img[1, 0] == 1.0

    def test_malformed_and_unsupported(self, tmp_path):
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"P5\n4 4\n255\nxx")  # truncated raster
        with pytest.raises(ValueError):
            load_image(bad)
        other = tmp_path / "other.pgm"
        other.write_bytes(b"GIF89a....")
        with pytest.raises(ValueError):
            load_image(other)
        with pytest.raises(ValueError):
            save_image(np.zeros((2, 2)), tmp_path / "img.tiff")

    def test_save_clamps_out_of_range(self, tmp_path):
        path = tmp_path / "clamp.pgm"
        save_image(np.array([[-0.5, 1.5]] * 2), path)
        back = load_image(path)
        assert back[0, 0] == 0.0 and back[0, 1] == 1.0
