from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmop.errors import InputError, InsufficientMomentTable, TruncationTooSmall
from mmop.fixtures import angelesco_grid, legendre_grid, monomial_grid, shifted_identity_pencil
from mmop.matpoly import MatrixPolynomial
from mmop.measures import (
    Jacobi,
    Lebesgue,
    MomentMatrix,
    MomentTable,
    PolynomialDensity,
    WeightGrid,
    assemble,
    bilinear_form,
    hankel_residual,
    left_multiply,
    moment_matrix,
    moments,
    perturbed_moments,
    right_multiply,
    weight_from_json,
    weight_to_json,
)

from strategies import admissible


class TestMoments:
    def test_legendre(self):
        np.testing.assert_allclose(moments(legendre_grid(), 2)[0, 0], [2, 0, 2 / 3], atol=1e-15)

    def test_monomial_grid(self):
        mu = moments(monomial_grid(), 6)
        n = np.arange(7)
        for a in range(3):
            np.testing.assert_allclose(mu[0, a], 1.0 / (n + a + 1), rtol=1e-15)

    def test_signed_density(self):
        grid = WeightGrid(((PolynomialDensity((-2.0, 1.0)),),), (-1.0, 1.0))
        np.testing.assert_allclose(moments(grid, 2)[0, 0], [-4, 2 / 3, -4 / 3], atol=1e-15)

    def test_jacobi_against_quadrature(self):
        grid = WeightGrid(((Jacobi(2, 3),),), (0.0, 1.0))
        np.testing.assert_allclose(moments(grid, 10), moments(grid, 10, "quadrature"), rtol=1e-13)
        # B(3, 4) = 2! 3! / 6! = 1/60
        assert moments(grid, 0)[0, 0, 0] == pytest.approx(1 / 60, rel=1e-15)

    def test_moment_table_too_short(self):
        grid = WeightGrid(((MomentTable((1.0, 0.0)),),), (-1.0, 1.0))
        with pytest.raises(InsufficientMomentTable):
            moments(grid, 4)

    def test_quadrature_matches_exact(self):
        grid = WeightGrid(((PolynomialDensity((1.0, -0.5, 0.25)), Lebesgue((-0.5, 0.5))),), (-1.0, 1.0))
        ex, qu = moments(grid, 20), moments(grid, 20, "quadrature")
        assert np.max(np.abs(ex - qu) / np.maximum(np.abs(ex), 1e-300)) < 1e-13 or np.max(np.abs(ex - qu)) < 1e-15

    def test_extended_precision_agrees(self):
        grid = angelesco_grid(3)
        np.testing.assert_allclose(moments(grid, 12, precision="extended").astype(float), moments(grid, 12), rtol=1e-14, atol=1e-16)

    def test_negative_order(self):
        with pytest.raises(InputError):
            moments(legendre_grid(), -1)

    def test_support_outside_interval(self):
        with pytest.raises(InputError):
            WeightGrid(((Lebesgue((-2.0, 0.0)),),), (-1.0, 1.0))

    @pytest.mark.parametrize("spec", [PolynomialDensity((1.0, 2.0)), MomentTable((1.0, 0.5)), Lebesgue((0.0, 1.0)), Jacobi(1, 0)])
    def test_weight_json_round_trip(self, spec):
        assert weight_from_json(weight_to_json(spec)) == spec


class TestAssemble:
    def test_legendre(self):
        M = moment_matrix(legendre_grid(), 3)
        np.testing.assert_allclose(M.entries, [[2, 0, 2 / 3], [0, 2 / 3, 0], [2 / 3, 0, 2 / 5]], atol=1e-15)

    def test_monomial_rows(self):
        M = moment_matrix(monomial_grid(), 3)
        np.testing.assert_allclose(M.entries[0], [1, 1 / 2, 1 / 3])
        np.testing.assert_allclose(M.entries[1], [1 / 2, 1 / 3, 1 / 4])

    def test_column_grid_interleaving(self):
        c = (1.0, 3.0)
        grid = WeightGrid(tuple((PolynomialDensity((cb,)),) for cb in c), (0.0, 1.0))
        M = moment_matrix(grid, 6)
        for j in range(6):
            l, b = divmod(j, 2)
            for k in range(6):
                assert M.entries[j, k] == pytest.approx(c[b] / (l + k + 1), rel=1e-15)

    @pytest.mark.parametrize("grid", [legendre_grid(), monomial_grid(), angelesco_grid(3), angelesco_grid(2, "column")])
    def test_hankel_exact(self, grid):
        assert hankel_residual(moment_matrix(grid, 12)) == 0.0

    def test_hankel_quadrature(self):
        M = moment_matrix(angelesco_grid(3), 40, method="quadrature")
        assert hankel_residual(M, relative=True) < 1e-12

    def test_hankel_detects_bump(self):
        M = moment_matrix(legendre_grid(), 4)
        E = M.entries.copy()
        E[1, 0] += 1.0
        assert hankel_residual(MomentMatrix(E, 1, 1)) == pytest.approx(1.0)

    def test_csv(self, tmp_path):
        M = moment_matrix(legendre_grid(), 4)
        M.to_csv(tmp_path / "M.csv")
        np.testing.assert_array_equal(np.loadtxt(tmp_path / "M.csv", delimiter=","), M.entries)


class TestPerturbedMatrices:
    def test_scalar_right(self):
        Mh = right_multiply(moment_matrix(legendre_grid(), 3), MatrixPolynomial.scalar([-2.0, 1.0]))
        np.testing.assert_allclose(Mh.entries, [[-4, 2 / 3], [2 / 3, -4 / 3]], atol=1e-15)

    def test_scalar_left(self):
        Mh = left_multiply(moment_matrix(legendre_grid(), 3), MatrixPolynomial.scalar([-2.0, 1.0]))
        np.testing.assert_allclose(Mh.entries, [[-4, 2 / 3], [2 / 3, -4 / 3]], atol=1e-15)

    def test_identity_unchanged(self):
        M = moment_matrix(angelesco_grid(3), 9)
        assert np.array_equal(right_multiply(M, MatrixPolynomial.identity(3)).entries, M.entries)
        Mc = moment_matrix(angelesco_grid(2, "column"), 8)
        assert np.array_equal(left_multiply(Mc, MatrixPolynomial.identity(2)).entries, Mc.entries)

    def test_truncation_too_small(self):
        with pytest.raises(TruncationTooSmall):
            right_multiply(moment_matrix(monomial_grid(), 4), shifted_identity_pencil(2.0))

    @pytest.mark.parametrize("grid", [monomial_grid(), angelesco_grid(3)])
    def test_right_matches_quadrature_of_perturbed_densities(self, grid):
        R = shifted_identity_pencil(2.0)
        Mh = right_multiply(moment_matrix(grid, 15), R)
        T = Mh.trunc
        direct = assemble(perturbed_moments(grid, R, 2 * T), T)
        np.testing.assert_allclose(Mh.entries, direct.entries, atol=1e-14 * np.abs(direct.entries).max())
        assert hankel_residual(Mh, relative=True) < 1e-12

    def test_left_matches_quadrature(self):
        grid = angelesco_grid(2, "column")
        L = MatrixPolynomial(np.stack([[[1.0, 1.0], [0.0, 2.0]], [[0.0, 0.0], [1.0, 0.0]]]))
        Mh = left_multiply(moment_matrix(grid, 12), L)
        T = Mh.trunc
        direct = assemble(perturbed_moments(grid, L, 2 * T, "left"), T)
        np.testing.assert_allclose(Mh.entries, direct.entries, atol=1e-14)

    def test_left_is_transposed_right(self):
        grid = WeightGrid(((Lebesgue(), PolynomialDensity((0.0, 1.0))), (PolynomialDensity((1.0, 1.0)), Lebesgue((0.0, 1.0)))), (-1.0, 1.0))
        L = MatrixPolynomial(np.stack([[[1.0, 2.0], [0.5, 1.0]], [[0.0, 1.0], [0.0, 0.0]]]))
        M = moment_matrix(grid, 10)
        np.testing.assert_array_equal(left_multiply(M, L).entries, right_multiply(M.T, L.T).T.entries)

    @given(admissible(max_p=3, max_N=2))
    @settings(max_examples=20, deadline=None)
    def test_right_multiply_is_moment_type(self, case):
        R, p, N, r = case
        grid = angelesco_grid(p) if p > 1 else legendre_grid()
        Mh = right_multiply(moment_matrix(grid, p * (N + 6)), R)
        assert hankel_residual(Mh, relative=True) < 1e-12
        direct = assemble(perturbed_moments(grid, R, 2 * Mh.trunc), Mh.trunc)
        np.testing.assert_allclose(Mh.entries, direct.entries, atol=1e-13 * max(1.0, np.abs(direct.entries).max()))

    def test_upper_entries_of_constant_block(self):
        # entries of R_0 above the diagonal land above the scalar diagonal of R(Lambda^T)
        grid = angelesco_grid(3)
        R = MatrixPolynomial(np.stack([[[2.0, 1.0, 0.0], [0.0, 3.0, 1.0], [1.0, 0.0, -4.0]], np.eye(3)]))
        Mh = right_multiply(moment_matrix(grid, 12), R)
        direct = assemble(perturbed_moments(grid, R, 2 * Mh.trunc), Mh.trunc)
        np.testing.assert_allclose(Mh.entries, direct.entries, atol=1e-14)


class TestBilinearForm:
    def test_monomials_reproduce_moments(self):
        spec = PolynomialDensity((1.0, 1.0))
        G = bilinear_form(spec, (-1.0, 1.0), np.eye(4), np.eye(4))
        mu = moments(WeightGrid(((spec,),), (-1.0, 1.0)), 6)[0, 0]
        i, j = np.indices((4, 4))
        np.testing.assert_allclose(G, mu[i + j], atol=1e-15)

    @given(st.lists(st.floats(-2, 2), min_size=1, max_size=5), st.lists(st.floats(-2, 2), min_size=1, max_size=5))
    @settings(max_examples=30, deadline=None)
    def test_moment_table_matches_density(self, f, g):
        spec = Lebesgue((-1.0, 1.0))
        mu = moments(WeightGrid(((spec,),), (-1.0, 1.0)), 12)[0, 0]
        a = bilinear_form(spec, (-1.0, 1.0), np.array(f), np.array(g))
        b = bilinear_form(MomentTable(tuple(mu)), (-1.0, 1.0), np.array(f), np.array(g))
        np.testing.assert_allclose(a, b, atol=1e-12)
