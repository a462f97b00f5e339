import math

import numpy as np
import pytest
from hypothesis import assume, given, settings

from neural_field_spectrum.charfun import EVEN, ODD, apply_delta, apply_l_fd, q_reduced
from neural_field_spectrum.errors import ResonantTruncation
from neural_field_spectrum.numerics import gauss_legendre
from neural_field_spectrum.slp import (
    basis_build,
    chi,
    eigenfunction_derivative,
    eigenfunction_eval,
    fg_eval,
    is_root,
    robin_residual,
    slp_root_box,
    slp_roots,
)

from .conftest import complex_numbers

ROBIN_K = 1.4 - 1.4j


class TestCharacteristicFunction:
    @pytest.mark.parametrize("n", [1, 2, 3, 7])
    def test_neumann_roots_at_integers(self, n):
        assert abs(chi(float(n), 0.0, 1.0)) <= 1e-12

    @given(complex_numbers(bound=5.0), complex_numbers())
    @settings(max_examples=40, deadline=None)
    def test_even_in_mu(self, mu, k):
        assume(abs(mu) > 1e-3)
        assert chi(-mu, k, 1.3) == pytest.approx(chi(mu, k, 1.3), rel=1e-10, abs=1e-10)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            chi(0.0, 1.0, 1.0)

    def test_vectorized(self):
        out = chi(np.array([1.0, 2.0]), 0.5, 1.0)
        assert out.shape == (2,)


class TestFactorFunctions:
    @given(complex_numbers(), complex_numbers())
    @settings(max_examples=100, deadline=None)
    def test_product_identity(self, rho, k):
        assume(abs(rho) > 1e-2)
        a = 0.8
        f, g = fg_eval(rho, k, a)
        rhs = 2 * k * np.cosh(2 * a * rho) + (k ** 2 / rho + rho) * np.sinh(2 * a * rho)
        scale = (abs(k) + abs(k) ** 2 / abs(rho) + abs(rho)) * math.cosh(2 * a * rho.real)
        assert abs(2 * rho * f * g - rhs) <= 1e-12 * scale

    def test_without_k(self):
        f, g = fg_eval(0.3 + 0.7j, 0.0, 1.0)
        assert f == pytest.approx(np.cosh(0.3 + 0.7j))
        assert g == pytest.approx(np.sinh(0.3 + 0.7j))

    def test_parity(self):
        f1, g1 = fg_eval(0.3 + 0.7j, 1.2, 1.0)
        f2, g2 = fg_eval(-0.3 - 0.7j, 1.2, 1.0)
        assert f2 == pytest.approx(f1)
        assert g2 == pytest.approx(-g1)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            fg_eval(0j, 1.0, 1.0)


class TestRoots:
    def test_neumann_case(self):
        roots = slp_roots(0.0, 1.0, 6)
        assert roots[0].rho == 0 and roots[0].parity == EVEN
        for n, root in enumerate(roots):
            assert root.index == n
            assert root.rho == pytest.approx(1j * math.pi * n / 2, abs=1e-9)
            assert root.parity == (EVEN if n % 2 == 0 else ODD)
            assert root.mu == pytest.approx(n, abs=1e-10)

    def test_neumann_eigenfunctions_have_flat_ends(self):
        for root in slp_roots(0.0, 1.0, 5):
            d = eigenfunction_derivative(root, 0.0, 1.0, np.array([-1.0, 1.0]))
            np.testing.assert_allclose(d, 0, atol=1e-12)

    def test_linear_mode_at_minus_inverse_width(self):
        roots = slp_roots(-0.5, 2.0, 3)
        assert any(r.rho == 0 and r.parity == ODD for r in roots)

    def test_index_follows_parity_localization(self):
        roots = slp_roots(-0.5, 2.0, 6)
        linear = next(r for r in roots if r.rho == 0 and r.parity == ODD)
        assert linear.index == 1
        assert [r.index for r in roots if r.parity == ODD] == [1, 3, 5]
        assert [r.index for r in roots if r.parity == EVEN] == [0, 2, 4]
        assert [r.index for r in roots] == sorted(r.index for r in roots)

    def test_complex_k_residuals(self):
        a = math.pi
        roots = slp_roots(ROBIN_K, a, 12)
        assert len(roots) == 12
        for root in roots:
            assert is_root(root, ROBIN_K)
            assert robin_residual(root, ROBIN_K) <= 1e-7 * (abs(ROBIN_K) + abs(root.rho))
        assert max(abs(r.mu.imag) for r in roots) < 5.0
        mus = [r.mu for r in roots]
        assert all(m.real >= 0 for m in mus)

    def test_squares_distinct(self):
        roots = slp_roots(ROBIN_K, math.pi, 12)
        squares = np.array([r.rho ** 2 for r in roots])
        for i in range(len(squares)):
            for j in range(i + 1, len(squares)):
                assert abs(squares[i] - squares[j]) > 1e-8 * (1 + abs(squares[i]))

    def test_box(self):
        inside = slp_root_box(ROBIN_K, math.pi, 6.0, 2.0)
        assert inside
        for root in inside:
            assert 0 <= root.mu.real <= 6.0 + 1e-9
            assert abs(root.mu.imag) <= 2.0 + 1e-9
            assert is_root(root, ROBIN_K)

    def test_near_integers_for_large_index(self):
        roots = slp_roots(1.5, 1.0, 40)
        gaps = [abs(r.mu - round(r.mu.real)) * max(round(r.mu.real), 1) for r in roots[10:]]
        assert max(gaps) < 5.0

    def test_distance_to_index_decays_like_inverse_index(self):
        roots = slp_roots(1.5, 1.0, 51)
        assert [r.index for r in roots] == list(range(51))
        gaps = {r.index: abs(r.mu - r.index) for r in roots if r.index > 0}
        bound = 1.05 * max(n * gaps[n] for n in range(1, 11))
        for n, gap in gaps.items():
            assert gap <= bound / n

    def test_count_checked(self):
        with pytest.raises(ValueError):
            slp_roots(1.0, 1.0, 0)

    def test_even_eigenfunction_symmetric(self):
        root = next(r for r in slp_roots(ROBIN_K, math.pi, 6) if r.parity == EVEN and r.rho != 0)
        x = np.linspace(0, math.pi, 5)
        np.testing.assert_allclose(eigenfunction_eval(root, ROBIN_K, math.pi, x),
                                   eigenfunction_eval(root, ROBIN_K, math.pi, -x))

    def test_eigenfunction_unit_norm(self):
        xs, ws = gauss_legendre(64, -1.0, 1.0)
        for root in slp_roots(1.0 + 0.5j, 1.0, 4):
            v = eigenfunction_eval(root, 1.0 + 0.5j, 1.0, xs)
            assert np.sum(ws * np.abs(v) ** 2) == pytest.approx(1.0)

    def test_halfwidth_mismatch(self):
        root = slp_roots(1.0, 1.0, 2)[1]
        with pytest.raises(ValueError):
            eigenfunction_eval(root, 1.0, 2.0, 0.0)


class TestBasis:
    Z = 1.34j + 0.01

    def test_gram_identity(self, ref_params, grid32):
        basis = basis_build(self.Z, ref_params, 3, 3, grid32)
        assert len(basis.entries) == 9
        np.testing.assert_allclose(basis.gram(), np.eye(9), atol=1e-8)

    def test_products_satisfy_robin_conditions(self, ref_params, grid32):
        basis = basis_build(self.Z, ref_params, 3, 3, grid32)
        for root in basis.x_roots + basis.y_roots:
            assert robin_residual(root, basis.k) <= 1e-8 * (abs(basis.k) + abs(root.rho) + 1)

    def test_reconstruction(self, ref_params, grid32):
        basis = basis_build(self.Z, ref_params, 3, 3, grid32)
        for j, raw in enumerate(basis.raw_fields):
            coeffs = basis.project(raw)
            expected = np.zeros(9)
            expected[j] = 1
            np.testing.assert_allclose(coeffs, expected, atol=1e-8)
            np.testing.assert_allclose(basis.synthesize(coeffs), raw, atol=1e-8)

    def test_separable_operator_eigenrelation(self, ref_params, grid32):
        basis = basis_build(self.Z, ref_params, 3, 3, grid32)
        h = 0.01
        x = np.arange(-100, 101) * h
        k2 = basis.k ** 2
        for rx in basis.x_roots:
            for ry in basis.y_roots:
                u = np.outer(eigenfunction_eval(rx, basis.k, 1.0, x), eigenfunction_eval(ry, basis.k, 1.0, x))
                got = apply_l_fd(self.Z, 0, u, h, ref_params)
                expected = (k2 - rx.rho ** 2) * (k2 - ry.rho ** 2) * u[1:-1, 1:-1]
                assert np.max(np.abs(got - expected)) <= 1e-3 * np.max(np.abs(expected))

    def test_delta_on_products(self, ref_params, grid32):
        basis = basis_build(self.Z, ref_params, 2, 2, grid32)
        for entry, raw in zip(basis.entries, basis.raw_fields):
            Q = q_reduced(self.Z, entry.raw_rho, entry.raw_nu, ref_params)
            out = apply_delta(self.Z, raw, ref_params, grid32)
            assert grid32.norm(out - Q * raw) <= 1e-7 * grid32.norm(raw)

    def test_resonant_truncation(self, ref_params, grid32):
        with pytest.raises(ResonantTruncation):
            basis_build(-2.0, ref_params, 1, 1, grid32)

    def test_essential_point_rejected(self, ref_params, grid32):
        with pytest.raises(ValueError):
            basis_build(-1.0, ref_params, 1, 1, grid32)

    def test_single_term_only(self, two_term_params, grid32):
        with pytest.raises(ValueError):
            basis_build(0.5, two_term_params, 1, 1, grid32)

