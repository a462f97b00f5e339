import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings

from neural_field_spectrum.charfun import (
    EVEN,
    ODD,
    ClassCoefficients,
    RootClass,
    apply_delta,
    apply_k,
    apply_l_fd,
    assemble_class_field,
    b_operator_product,
    boundary_residual,
    c_operator_product,
    canonical_sign,
    char_poly,
    char_poly_scale,
    class_polynomial,
    cross_matrix,
    equiv_roots,
    level_function,
    q_reduced,
    resonance_check,
    s_matrices,
    separable_profile,
    square_n2_search,
    term_arrays,
    term_data,
)
from neural_field_spectrum.config import DATA_DIR, as_complex
from neural_field_spectrum.errors import (
    DegenerateClass,
    NonConvergence,
    RankConditionFailed,
    ResonantParameter,
)
from neural_field_spectrum.model import ModelParams
from neural_field_spectrum.numerics import QuadGrid

from .conftest import complex_numbers, make_params


class TestTermData:
    def test_at_zero(self, ref_params):
        td = term_data(0j, 0, ref_params)
        assert td.k == 2.0
        assert td.c == pytest.approx(-3.27)

    def test_k_vanishes_at_minus_xi(self, ref_params):
        assert term_data(-2.0, 0, ref_params).k == 0

    def test_imaginary_shift_keeps_modulus(self, ref_params):
        assert abs(term_data(1.7j, 0, ref_params).c) == pytest.approx(3.27)

    def test_index_checked(self, ref_params):
        with pytest.raises(IndexError):
            term_data(0j, 1, ref_params)


class TestCharPoly:
    @given(complex_numbers(), complex_numbers(), complex_numbers())
    @settings(max_examples=40, deadline=None)
    def test_symmetries(self, z, rho, nu):
        p = make_params()
        ref = char_poly(z, rho, nu, p)
        tol = 1e-12 * char_poly_scale(z, rho, nu, p)
        assert abs(char_poly(z, nu, rho, p) - ref) <= tol
        assert abs(char_poly(z, -rho, nu, p) - ref) <= tol
        assert abs(char_poly(z, rho, -nu, p) - ref) <= tol

    def test_zero_amplitude(self):
        p = make_params(c_hat=0.0)
        z, rho, nu = 0.3 + 0.2j, 0.5 - 0.1j, 1.1 + 0.4j
        k = z + 2.0
        expected = (z + 1.0) * (k ** 2 - rho ** 2) * (k ** 2 - nu ** 2)
        assert char_poly(z, rho, nu, p) == pytest.approx(expected)
        assert q_reduced(z, rho, nu, p) == pytest.approx(z + 1.0)

    def test_broadcasts(self, ref_params):
        rhos = np.array([0.1, 0.2 + 1j, 1.5j])
        out = char_poly(0.4j, rhos, 0.3, ref_params)
        assert out.shape == (3,)
        assert out[1] == pytest.approx(char_poly(0.4j, rhos[1], 0.3, ref_params))

    @given(complex_numbers(), complex_numbers(), complex_numbers())
    @settings(max_examples=40, deadline=None)
    def test_reduced_form_identities(self, z, rho, nu):
        p = ModelParams(alpha=1.0, tau0=1.0, gamma=4.0, a=1.0, b=1.0,
                        terms=((-4.0, 1.0), (2.0, 3.0)))
        k = z + p.xis
        F = (k ** 2 - rho ** 2) * (k ** 2 - nu ** 2)
        assume(np.min(np.abs(F)) > 1e-3 and abs(rho ** 2 - nu ** 2) > 1e-3)
        Q = q_reduced(z, rho, nu, p)
        P = char_poly(z, rho, nu, p)
        assert abs(Q * np.prod(F) - P) <= 1e-10 * char_poly_scale(z, rho, nu, p)
        lhs = (rho ** 2 - nu ** 2) * Q
        rhs = level_function(z, rho, p) - level_function(z, nu, p)
        _, c = term_arrays(z, p)
        terms = np.abs(4 * c * k ** 2)
        scale = (abs(rho ** 2 - nu ** 2) * (abs(z + 1.0) + np.sum(terms / np.abs(F)))
                 + np.sum(terms / np.abs(k ** 2 - rho ** 2)) + np.sum(terms / np.abs(k ** 2 - nu ** 2))
                 + abs(z + 1.0) * (abs(rho) ** 2 + abs(nu) ** 2))
        assert abs(lhs - rhs) <= 1e-10 * scale

    def test_reduced_form_resonant(self, ref_params):
        with pytest.raises(ResonantParameter):
            q_reduced(0j, 2.0, 0.5, ref_params)

    def test_hopf_triple(self, ref_pair, ref_params):
        z, rho, nu = ref_pair.z, ref_pair.rho, ref_pair.nu
        assert abs(char_poly(z, rho, nu, ref_params)) <= 1e-6 * char_poly_scale(z, rho, nu, ref_params)


class TestResonance:
    def test_single_term(self, ref_params):
        assert resonance_check(-2.0, ref_params)
        assert not resonance_check(-1.0, ref_params)

    def test_coinciding_squares(self, two_term_params):
        assert resonance_check(-2.0, two_term_params)
        assert not resonance_check(0.5, two_term_params)


class TestEquivRoots:
    def test_single_term_closed_form(self, ref_params):
        z, nu = 0.3 + 0.5j, 0.7 + 0.2j
        td = term_data(z, 0, ref_params)
        k2 = td.k ** 2
        expected = k2 - 4 * td.c * k2 / ((z + 1.0) * (k2 - nu ** 2))
        rc = equiv_roots(z, nu, ref_params)
        assert len(rc.roots) == 2
        assert rc.roots[-1] == nu
        assert rc.roots[0] ** 2 == pytest.approx(expected)
        assert abs(char_poly(z, rc.roots[0], nu, ref_params)) <= 1e-10 * char_poly_scale(z, rc.roots[0], nu, ref_params)

    def test_two_term_class_is_closed(self, two_term_params):
        z, nu = 0.2 + 0.9j, -0.3 + 1.4j
        rc = equiv_roots(z, nu, two_term_params)
        assert len(rc.roots) == 3
        for i in range(3):
            for j in range(i + 1, 3):
                ri, rj = rc.roots[i], rc.roots[j]
                assert abs(char_poly(z, ri, rj, two_term_params)) <= 1e-8 * char_poly_scale(z, ri, rj, two_term_params)

    def test_class_polynomial_roots(self, two_term_params):
        z, nu = 0.2 + 0.9j, -0.3 + 1.4j
        for s in np.polynomial.polynomial.polyroots(class_polynomial(z, nu, two_term_params)):
            rho = np.sqrt(s)
            assert abs(char_poly(z, rho, nu, two_term_params)) <= 1e-9 * char_poly_scale(z, rho, nu, two_term_params)

    def test_zero_amplitude_is_degenerate(self):
        with pytest.raises(DegenerateClass):
            equiv_roots(0.3 + 0.5j, 0.7 + 0.2j, make_params(c_hat=0.0))

    def test_resonant_z(self, ref_params):
        with pytest.raises(ResonantParameter):
            equiv_roots(-2.0, 0.5, ref_params)

    def test_canonical_sign(self):
        assert canonical_sign(1 - 2j) == -1 + 2j
        assert canonical_sign(-3.0) == 3.0
        assert canonical_sign(0.5j) == 0.5j


class TestSMatrices:
    def _class(self, params):
        return equiv_roots(0.2 + 0.9j, -0.3 + 1.4j, params)

    def test_shape_and_parity(self, two_term_params):
        rc = self._class(two_term_params)
        S_e, S_o = s_matrices(1.0, rc, two_term_params)
        assert S_e.shape == (2, 3) and S_o.shape == (2, 3)
        flipped = RootClass(rc.z, rc.nu_seed, tuple(-r for r in rc.roots))
        F_e, F_o = s_matrices(1.0, flipped, two_term_params)
        np.testing.assert_allclose(F_e, S_e, rtol=1e-12)
        np.testing.assert_allclose(F_o, -S_o, rtol=1e-12)

    def test_at_origin(self, two_term_params):
        rc = self._class(two_term_params)
        S_e, S_o = s_matrices(0.0, rc, two_term_params)
        k = rc.z + two_term_params.xis
        rho = np.array(rc.roots)
        denom = k[:, None] ** 2 - rho[None, :] ** 2
        np.testing.assert_allclose(S_e, k[:, None] / denom)
        np.testing.assert_allclose(S_o, rho[None, :] / denom)

    def test_vanishes_at_eigenpair(self, ref_pair, ref_params):
        rc = RootClass(ref_pair.z, ref_pair.nu, (ref_pair.rho, ref_pair.nu))
        S_e, _ = s_matrices(1.0, rc, ref_params)
        assert abs(S_e[0, 0]) <= 1e-8


class TestBoundaryResidual:
    def test_zero_coefficients(self, two_term_params):
        rc = equiv_roots(0.2 + 0.9j, -0.3 + 1.4j, two_term_params)
        assert boundary_residual(rc.z, rc, ClassCoefficients(), two_term_params) == 0.0

    def test_hopf_eigenvector(self, ref_pair, ref_params):
        rc = RootClass(ref_pair.z, ref_pair.nu, (ref_pair.rho, ref_pair.nu))
        D = np.array([[0, 1], [0, 0]], dtype=complex)
        assert boundary_residual(rc.z, rc, ClassCoefficients(d_ee=D), ref_params) <= 1e-6

    def test_random_coefficients(self, two_term_params, rng):
        rc = equiv_roots(0.2 + 0.9j, -0.3 + 1.4j, two_term_params)
        D = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        np.fill_diagonal(D, 0)
        assert boundary_residual(rc.z, rc, ClassCoefficients(d_oo=D), two_term_params) > 1e-3

    def test_blocks_validated(self):
        with pytest.raises(ValueError, match="zero diagonal"):
            ClassCoefficients(d_ee=np.eye(2)).blocks(2)
        with pytest.raises(ValueError, match="must be 3x3"):
            ClassCoefficients(d_ee=np.zeros((2, 2))).blocks(3)

    def test_assembled_field(self, ref_pair, grid32):
        rc = RootClass(ref_pair.z, ref_pair.nu, (ref_pair.rho, ref_pair.nu))
        D = np.array([[0, 1], [0, 0]], dtype=complex)
        q = assemble_class_field(rc, ClassCoefficients(d_ee=D), grid32)
        expected = np.outer(np.cosh(ref_pair.rho * grid32.nodes_x), np.cosh(ref_pair.nu * grid32.nodes_y))
        np.testing.assert_allclose(q, expected)


class TestOperators:
    def test_delta_of_zero(self, ref_params, grid32):
        np.testing.assert_array_equal(apply_delta(0.5j, np.zeros(grid32.shape), ref_params, grid32), 0)

    def test_delta_of_constant_at_minus_xi(self, ref_params, grid32):
        out = apply_delta(-2.0, np.ones(grid32.shape), ref_params, grid32)
        c = term_data(-2.0, 0, ref_params).c
        np.testing.assert_allclose(out, (-2.0 + 1.0) - 4.0 * c, rtol=1e-10)

    def test_delta_linear(self, ref_params, grid32, rng):
        q1 = rng.normal(size=grid32.shape) + 0j
        q2 = rng.normal(size=grid32.shape) * 1j
        lhs = apply_delta(0.3 + 0.4j, 2.0 * q1 - 3j * q2, ref_params, grid32)
        rhs = 2.0 * apply_delta(0.3 + 0.4j, q1, ref_params, grid32) - 3j * apply_delta(0.3 + 0.4j, q2, ref_params, grid32)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_delta_at_hopf_eigenvector(self, ref_pair, ref_params, grid32):
        q = np.outer(np.cosh(ref_pair.rho * grid32.nodes_x), np.cosh(ref_pair.nu * grid32.nodes_y))
        res = apply_delta(ref_pair.z, q, ref_params, grid32)
        assert grid32.norm(res) / grid32.norm(q) <= 1e-3

    def test_key_property(self, ref_params, grid32):
        z = 0.3 + 0.2j
        h = 0.01
        xs = np.arange(41) * h + 0.4
        ys = np.arange(41) * h - 0.3
        X, Y = grid32.mesh()
        q = np.cos(X) * (1 + Y ** 2)
        Kq = apply_k(z, 0, q, ref_params, grid32, points=(xs, ys))
        LKq = apply_l_fd(z, 0, Kq, h, ref_params)
        td = term_data(z, 0, ref_params)
        Xi, Yi = np.meshgrid(xs[1:-1], ys[1:-1], indexing="ij")
        expected = 4 * td.c * td.k ** 2 * np.cos(Xi) * (1 + Yi ** 2)
        assert np.max(np.abs(LKq - expected)) <= 1e-3 * np.max(np.abs(expected))

    def test_fd_operator_on_separable_product(self, ref_params):
        z, rho, nu, h = 0.1 + 0.5j, 0.4 + 1.2j, 0.9j, 0.01
        x = np.arange(-50, 51) * h
        u = np.outer(np.cosh(rho * x), np.sinh(nu * x))
        k2 = term_data(z, 0, ref_params).k ** 2
        expected = (k2 - rho ** 2) * (k2 - nu ** 2) * u[1:-1, 1:-1]
        got = apply_l_fd(z, 0, u, h, ref_params)
        assert np.max(np.abs(got - expected)) <= 1e-3 * np.max(np.abs(expected))

    @pytest.mark.parametrize("op", [b_operator_product, c_operator_product])
    def test_boundary_operators_vanish_at_eigenpair(self, op, ref_pair, ref_params):
        xs = np.linspace(-1, 1, 7)
        out = op(ref_pair.z, 0, ref_pair.rho, ref_pair.nu, EVEN, EVEN, ref_params, xs, xs)
        assert np.max(np.abs(out)) <= 1e-7

    def test_boundary_operator_nonzero_off_root(self, ref_params):
        xs = np.linspace(-1, 1, 7)
        out = b_operator_product(0.5j, 0, 0.3 + 0.8j, 1.1j, ODD, EVEN, ref_params, xs, xs)
        assert np.max(np.abs(out)) > 1e-3

    def test_profiles(self):
        v, d = separable_profile(0.5j, ODD, [0.0, 1.0])
        assert v[0] == 0
        assert d[0] == pytest.approx(0.5j)
        with pytest.raises(ValueError):
            separable_profile(1.0, "neither", 0.0)


class TestSquareSearch:
    def test_cross_matrix_annihilates_row(self, rng):
        row = rng.normal(size=3) + 1j * rng.normal(size=3)
        D = cross_matrix(row)
        np.testing.assert_allclose(row @ D, 0, atol=1e-14)
        np.testing.assert_allclose(D, -D.T)

    def test_needs_two_terms_on_a_square(self, ref_params, two_term_params):
        with pytest.raises(ValueError, match="two connectivity terms"):
            square_n2_search(ref_params, (1j, 1j))
        rect = ModelParams(alpha=1.0, tau0=1.0, gamma=4.0, a=1.0, b=2.0, terms=two_term_params.terms)
        with pytest.raises(ValueError, match="a = b"):
            square_n2_search(rect, (1j, 1j))

    @pytest.mark.slow
    def test_bundled_seeds(self):
        doc = json.loads((DATA_DIR / "square_n2.json").read_text())["square"]
        params = ModelParams.from_dict(doc["model"])
        grid = QuadGrid.build(1.0, 1.0, 32)
        converged = 0
        for seed in doc["seeds"]:
            try:
                out = square_n2_search(params, (as_complex(seed["nu"]), as_complex(seed["z"])), EVEN)
            except (NonConvergence, RankConditionFailed):
                continue
            converged += 1
            assert out.residuals["boundary"] <= 1e-8
            assert out.residuals["minors"] <= 1e-8
            q = assemble_class_field(out.root_class, out.coefficients(), grid)
            res = apply_delta(out.z, q, params, grid)
            assert grid.norm(res) / grid.norm(q) <= 1e-3
            break
        assert converged > 0, "no bundled seed converged"
