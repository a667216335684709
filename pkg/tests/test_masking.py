import numpy as np
import pytest

from owenexplain import Coalition, MaskerSpec, apply_mask, blur_reference, build_atom_grid, make_rng
from owenexplain.masking import BoundMasker, fill_reference


def grid_2x2():
    return build_atom_grid((2, 2), (1, 1))


class TestApplyMask:
    def test_full_coalition_is_identity(self):
        grid = grid_2x2()
        x = np.array([1.0, 2.0, 3.0, 4.0])
        spec = MaskerSpec(grid=grid, fill="mean")
        out = apply_mask(x, Coalition.full(4), spec)
        assert np.array_equal(out, x)

    def test_empty_coalition_baseline(self):
        grid = grid_2x2()
        base = np.array([9.0, 8.0, 7.0, 6.0])
        spec = MaskerSpec(grid=grid, fill="baseline", baseline=base)
        out = apply_mask(np.ones(4), Coalition.empty(4), spec)
        assert np.array_equal(out, base)

    def test_empty_coalition_mean(self):
        grid = build_atom_grid((2,), (1,))
        spec = MaskerSpec(grid=grid, fill="mean")
        out = apply_mask(np.array([1.0, 3.0]), Coalition.empty(2), spec)
        assert np.array_equal(out, [2.0, 2.0])

    def test_width_mismatch(self):
        spec = MaskerSpec(grid=grid_2x2(), fill="mean")
        with pytest.raises(ValueError):
            apply_mask(np.ones(4), Coalition.empty(3), spec)

    def test_partial_coalition_mixes(self):
        grid = build_atom_grid((4,), (2,))
        spec = MaskerSpec(grid=grid, fill="baseline", baseline=np.zeros(4))
        out = apply_mask(np.array([1.0, 2.0, 3.0, 4.0]), Coalition.from_indices([0], 2), spec)
        assert np.array_equal(out, [1.0, 2.0, 0.0, 0.0])

    def test_idempotent_with_cached_reference(self):
        grid = build_atom_grid((4, 4), (2, 2))
        x = make_rng(0).uniform(0, 1, 16)
        spec = MaskerSpec(grid=grid, fill="blur")
        bound = BoundMasker(x, spec)
        bits = 0b0110
        once = bound.masked(bits)
        # re-mask the masked tensor with the same cached fill reference
        twice = np.where(bound.active_rows([bits])[0][grid.cell_atom].astype(bool), once, bound.fill)
        assert np.array_equal(once, twice)

    def test_refinement_touches_only_changed_atoms(self):
        grid = build_atom_grid((6,), (2,))
        x = make_rng(1).uniform(0, 1, 6)
        bound = BoundMasker(x, MaskerSpec(grid=grid, fill="mean"))
        a = bound.masked(0b001)
        b = bound.masked(0b011)  # atom 1 flipped on
        changed = np.flatnonzero(a != b)
        assert set(changed).issubset({2, 3})

    def test_pure_function_of_inputs(self):
        grid = build_atom_grid((3, 3), (2, 2))
        x = make_rng(2).uniform(0, 1, 9)
        spec = MaskerSpec(grid=grid, fill="blur", sigma=1.5)
        c = Coalition.from_indices([0, 3], 4)
        assert np.array_equal(apply_mask(x, c, spec), apply_mask(x, c, spec))


class TestBlur:
    def test_constant_tensor_unchanged(self):
        out = blur_reference(np.full(12, 3.5), (3, 4), sigma=2.0)
        assert np.allclose(out, 3.5, atol=1e-12)

    def test_sigma_to_zero_limit(self):
        x = make_rng(3).uniform(0, 1, 25)
        out = blur_reference(x, (5, 5), sigma=1e-6)
        assert np.max(np.abs(out - x)) < 1e-6

    def test_matches_dense_convolution_interior(self):
        # independent oracle: dense 2-D convolution with the outer-product
        # kernel, compared on interior cells where clamping is inactive
        sigma = 0.3  # radius 1
        x = make_rng(4).uniform(0, 1, 25).reshape(5, 5)
        out = blur_reference(x.reshape(-1), (5, 5), sigma=sigma).reshape(5, 5)
        from owenexplain._kernels import gaussian_kernel
        k1 = gaussian_kernel(sigma)
        dense = np.outer(k1, k1)
        for i in range(1, 4):
            for j in range(1, 4):
                window = x[i - 1 : i + 2, j - 1 : j + 2]
                assert abs(out[i, j] - float((window * dense).sum())) < 1e-12

    def test_kernel_normalized(self):
        from owenexplain._kernels import gaussian_kernel
        for sigma in (0.5, 1.0, 3.0, 7.7):
            assert abs(gaussian_kernel(sigma).sum() - 1.0) < 1e-12

    def test_default_sigma_is_block_extent(self):
        grid = build_atom_grid((9, 9), (3, 3))
        spec = MaskerSpec(grid=grid, fill="blur")
        assert spec.sigma == 3.0

    def test_fill_reference_kinds(self):
        grid = build_atom_grid((4,), (2,))
        x = np.array([0.0, 1.0, 2.0, 5.0])
        assert np.array_equal(
            fill_reference(x, MaskerSpec(grid=grid, fill="mean")), np.full(4, 2.0)
        )
        base = np.array([1.0, 1.0, 1.0, 1.0])
        assert np.array_equal(
            fill_reference(x, MaskerSpec(grid=grid, fill="baseline", baseline=base)), base
        )
