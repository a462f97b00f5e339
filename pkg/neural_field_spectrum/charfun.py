"""
Characteristic machinery of the linearized field for any number of terms.

Covers k_i(z), c_i(z), the operator Delta(z) by product integration, the
characteristic polynomial P_z and its reduced form Q_z, the resonance set,
equivalence classes of separation constants, the S-matrices and boundary
residuals, and the rank-one eigenvector search on a square with two terms.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    DegenerateClass,
    NeuralFieldError,
    NonConvergence,
    RankConditionFailed,
    ResonantParameter,
)
from .model import ModelParams
from .numerics import ComplexField, NewtonSettings, QuadGrid, complex_newton
from .solver_log import make_tagged_printer, solver_log

_log = make_tagged_printer("Charfun", level=2)

EVEN = "even"
ODD = "odd"
PARITIES = (EVEN, ODD)

RESONANCE_TOL = 1e-9
DENOM_TOL = 1e-12
CLASS_SEPARATION_TOL = 1e-8


@dataclass(frozen=True)
class TermData:
    k: complex
    c: complex


@dataclass(frozen=True)
class RootClass:
    """
    Representatives of one equivalence class [nu]_z.

    `roots` holds one member per +/- pair; its last entry is nu itself.
    """
    z: complex
    nu_seed: complex
    roots: Tuple[complex, ...]

    @property
    def squares(self) -> np.ndarray:
        return np.array(self.roots, dtype=complex) ** 2


@dataclass
class ClassCoefficients:
    """Coefficient matrices of q_E; missing blocks are zero."""
    d_ee: Optional[np.ndarray] = None
    d_eo: Optional[np.ndarray] = None
    d_oe: Optional[np.ndarray] = None
    d_oo: Optional[np.ndarray] = None

    def blocks(self, size: int) -> Dict[str, np.ndarray]:
        out = {}
        for name in ("d_ee", "d_eo", "d_oe", "d_oo"):
            D = getattr(self, name)
            D = np.zeros((size, size), dtype=complex) if D is None else np.asarray(D, dtype=complex)
            if D.shape != (size, size):
                raise ValueError(f"{name} must be {size}x{size}, got {D.shape}")
            if np.any(np.diag(D) != 0):
                raise ValueError(f"{name} must have a zero diagonal")
            out[name] = D
        return out


def canonical_sign(rho: complex) -> complex:
    """Pick the member of {rho, -rho} with Im >= 0 (Re >= 0 on the real axis)."""
    rho = complex(rho)
    if rho.imag < 0 or (rho.imag == 0 and rho.real < 0):
        return -rho
    return rho


def separable_profile(rho: complex, parity: str, x) -> Tuple[np.ndarray, np.ndarray]:
    """(value, derivative) of cosh(rho x) for even parity, sinh(rho x) for odd."""
    x = np.asarray(x, dtype=float)
    if parity == EVEN:
        return np.cosh(rho * x), rho * np.sinh(rho * x)
    if parity == ODD:
        return np.sinh(rho * x), rho * np.cosh(rho * x)
    raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")


# =============================================================================
# Term data and the operator Delta(z)
# =============================================================================

def term_data(z: complex, i: int, params: ModelParams) -> TermData:
    """k_i = z + xi_i and c_i = c_hat_i S'(0) exp(-tau0 z); i is 0-based."""
    if not 0 <= i < params.n_terms:
        raise IndexError(f"term index {i} out of range for {params.n_terms} term(s)")
    term = params.terms[i]
    return TermData(k=z + term.xi, c=term.c_hat * params.s1 * np.exp(-params.tau0 * z))


def term_arrays(z: complex, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    k = z + params.xis
    c = params.c_hats * params.s1 * np.exp(-params.tau0 * z)
    return k, c


def apply_k(z: complex, i: int, q: ComplexField, params: ModelParams, grid: QuadGrid,
            points: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
    """
    K_i(z) q = c_i int exp(-k_i |r - r'|_1) q(r') dr'.

    Evaluated at the grid nodes, or on the tensor product `points = (xs, ys)`.
    """
    td = term_data(z, i, params)
    if points is None:
        return td.c * grid.apply_exp_kernel(td.k, q)
    xs, ys = points
    return td.c * grid.apply_exp_kernel_at(td.k, q, xs, ys)


def apply_delta(z: complex, q: ComplexField, params: ModelParams, grid: QuadGrid) -> ComplexField:
    """Delta(z) q = (z + alpha) q - sum_i K_i(z) q."""
    q = np.asarray(q, dtype=complex)
    out = (z + params.alpha) * q
    for i in range(params.n_terms):
        out = out - apply_k(z, i, q, params, grid)
    return out


def apply_l_fd(z: complex, i: int, values: np.ndarray, h: float, params: ModelParams) -> np.ndarray:
    """
    L_i(z) = (k_i^2 - d_xx)(k_i^2 - d_yy) by centred differences.

    `values` lives on a uniform grid of spacing h in both directions; the
    result covers the interior nodes only, shape (n - 2, m - 2).
    """
    k2 = term_data(z, i, params).k ** 2
    u = np.asarray(values, dtype=complex)
    c = u[1:-1, 1:-1]
    dxx = (u[2:, 1:-1] - 2 * c + u[:-2, 1:-1]) / h ** 2
    dyy = (u[1:-1, 2:] - 2 * c + u[1:-1, :-2]) / h ** 2
    dxxyy = (
        u[2:, 2:] + u[2:, :-2] + u[:-2, 2:] + u[:-2, :-2]
        - 2 * (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2])
        + 4 * c
    ) / h ** 4
    return k2 * k2 * c - k2 * (dxx + dyy) + dxxyy


# =============================================================================
# Characteristic polynomial
# =============================================================================

def _pair_factors(k: np.ndarray, rho, nu) -> List[np.ndarray]:
    rho2 = np.asarray(rho, dtype=complex) ** 2
    nu2 = np.asarray(nu, dtype=complex) ** 2
    return [(kk ** 2 - rho2) * (kk ** 2 - nu2) for kk in k]


def char_poly(z: complex, rho, nu, params: ModelParams):
    """
    P_z(rho, nu) = (z + alpha) prod_i F_i - 4 sum_i c_i k_i^2 prod_{j != i} F_j

    with F_i = (k_i^2 - rho^2)(k_i^2 - nu^2). Broadcasts over rho and nu.
    """
    k, c = term_arrays(z, params)
    factors = _pair_factors(k, rho, nu)
    total = (z + params.alpha) * np.prod(factors, axis=0)
    for i in range(len(k)):
        others = [f for j, f in enumerate(factors) if j != i]
        rest = np.prod(others, axis=0) if others else 1.0
        total = total - 4.0 * c[i] * k[i] ** 2 * rest
    return total


def char_poly_scale(z: complex, rho, nu, params: ModelParams):
    """Sum of the moduli of the terms of P_z, the reference for |P_z| tolerances."""
    k, c = term_arrays(z, params)
    factors = [np.abs(f) for f in _pair_factors(k, rho, nu)]
    total = abs(z + params.alpha) * np.prod(factors, axis=0)
    for i in range(len(k)):
        others = [f for j, f in enumerate(factors) if j != i]
        rest = np.prod(others, axis=0) if others else 1.0
        total = total + 4.0 * abs(c[i]) * abs(k[i]) ** 2 * rest
    return total


def q_reduced(z: complex, rho, nu, params: ModelParams):
    """Q_z(rho, nu) = (z + alpha) - sum_i 4 c_i k_i^2 / F_i."""
    k, c = term_arrays(z, params)
    factors = _pair_factors(k, rho, nu)
    total = z + params.alpha
    for i, f in enumerate(factors):
        if np.any(np.abs(f) <= DENOM_TOL * (1.0 + abs(k[i]) ** 4)):
            raise ResonantParameter(f"denominator (k^2 - rho^2)(k^2 - nu^2) vanishes for term {i}")
        total = total - 4.0 * c[i] * k[i] ** 2 / f
    return total


def level_function(z: complex, rho, params: ModelParams):
    """F(rho) = (z + alpha) rho^2 - sum_i 4 c_i k_i^2 / (k_i^2 - rho^2).

    (rho^2 - nu^2) Q_z(rho, nu) = F(rho) - F(nu), so classes are level sets of F.
    """
    k, c = term_arrays(z, params)
    rho2 = np.asarray(rho, dtype=complex) ** 2
    total = (z + params.alpha) * rho2
    for i in range(len(k)):
        total = total - 4.0 * c[i] * k[i] ** 2 / (k[i] ** 2 - rho2)
    return total


def resonance_check(z: complex, params: ModelParams, tol: float = RESONANCE_TOL) -> bool:
    """True when some k_i(z) vanishes or two k_i^2 coincide."""
    k, _ = term_arrays(z, params)
    if np.any(np.abs(k) <= tol * (1.0 + abs(z))):
        return True
    k2 = k ** 2
    scale = 1.0 + np.max(np.abs(k2))
    for i in range(len(k)):
        for j in range(i + 1, len(k)):
            if abs(k2[i] - k2[j]) <= tol * scale:
                return True
    return False


# =============================================================================
# Equivalence classes
# =============================================================================

def class_polynomial(z: complex, nu: complex, params: ModelParams) -> np.ndarray:
    """Ascending coefficients of P_z(rho, nu) as a polynomial in s = rho^2."""
    k, c = term_arrays(z, params)
    nu2 = complex(nu) ** 2
    factors = [np.array([(kk ** 2 - nu2) * kk ** 2, -(kk ** 2 - nu2)]) for kk in k]

    def prod(polys):
        out = np.array([1.0 + 0j])
        for p in polys:
            out = npoly.polymul(out, p)
        return out

    poly = (z + params.alpha) * prod(factors)
    for i in range(len(k)):
        rest = prod([f for j, f in enumerate(factors) if j != i])
        poly = npoly.polysub(poly, 4.0 * c[i] * k[i] ** 2 * rest)
    return poly


def equiv_roots(z: complex, nu: complex, params: ModelParams) -> RootClass:
    """All rho ~_z nu, one per +/- pair, with nu appended last."""
    if resonance_check(z, params):
        raise ResonantParameter(f"z = {z} lies in the resonance set")
    k, _ = term_arrays(z, params)
    N = params.n_terms

    poly = class_polynomial(z, nu, params)
    scale = np.max(np.abs(poly))
    if scale == 0:
        raise DegenerateClass("P_z(., nu) vanishes identically")
    if abs(poly[-1]) <= 1e-13 * scale:
        raise DegenerateClass("P_z(., nu) drops degree in rho^2")

    squares = list(npoly.polyroots(poly)) if N > 0 else []
    squares.append(complex(nu) ** 2)
    squares = np.array(squares, dtype=complex)

    ref = 1.0 + np.max(np.abs(np.concatenate([squares, k ** 2])))
    for s in squares:
        if abs(s) <= CLASS_SEPARATION_TOL * ref:
            raise DegenerateClass("a class member is zero, so rho and -rho coincide")
        if np.any(np.abs(s - k ** 2) <= CLASS_SEPARATION_TOL * ref):
            raise DegenerateClass("a class member coincides with +/- k_i")
    for i in range(len(squares)):
        for j in range(i + 1, len(squares)):
            if abs(squares[i] - squares[j]) <= CLASS_SEPARATION_TOL * ref:
                raise DegenerateClass(f"class of nu = {nu} has repeated rho^2")

    roots = tuple(canonical_sign(np.sqrt(s)) for s in squares[:-1]) + (complex(nu),)
    return RootClass(z=complex(z), nu_seed=complex(nu), roots=roots)


# =============================================================================
# S-matrices and boundary conditions
# =============================================================================

def _s_matrices_at(z: complex, halfwidth: float, roots: Sequence[complex],
                   params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    k, _ = term_arrays(z, params)
    rho = np.asarray(roots, dtype=complex)
    denom = k[:, None] ** 2 - rho[None, :] ** 2
    if np.any(np.abs(denom) <= DENOM_TOL * (1.0 + np.abs(k[:, None]) ** 2)):
        raise ResonantParameter("k_i^2 = rho_j^2 in an S-matrix entry")
    ch = np.cosh(rho * halfwidth)[None, :]
    sh = np.sinh(rho * halfwidth)[None, :]
    S_e = (k[:, None] * ch + rho[None, :] * sh) / denom
    S_o = (k[:, None] * sh + rho[None, :] * ch) / denom
    return S_e, S_o


def s_matrices(halfwidth: float, root_class: RootClass, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """(S_e, S_o), both N x (N+1), at r = halfwidth."""
    return _s_matrices_at(root_class.z, halfwidth, root_class.roots, params)


def boundary_residual(z: complex, root_class: RootClass, coeffs: ClassCoefficients,
                      params: ModelParams) -> float:
    """Largest entry of the eight S-matrix products; zero when q_E meets the boundary condition."""
    size = len(root_class.roots)
    D = coeffs.blocks(size)
    Se_a, So_a = _s_matrices_at(z, params.a, root_class.roots, params)
    Se_b, So_b = _s_matrices_at(z, params.b, root_class.roots, params)
    products = [
        Se_a @ D["d_ee"], Se_b @ D["d_ee"].T,
        Se_a @ D["d_eo"], So_b @ D["d_eo"].T,
        So_a @ D["d_oe"], Se_b @ D["d_oe"].T,
        So_a @ D["d_oo"], So_b @ D["d_oo"].T,
    ]
    return float(max(np.max(np.abs(p)) for p in products))


def assemble_class_field(root_class: RootClass, coeffs: ClassCoefficients, grid: QuadGrid) -> ComplexField:
    """q_E(x, y) = sum_ij over the four parity blocks of d_ij X_i(x) Y_j(y)."""
    size = len(root_class.roots)
    D = coeffs.blocks(size)
    rho = np.asarray(root_class.roots, dtype=complex)
    ch_x = np.cosh(np.outer(grid.nodes_x, rho))
    sh_x = np.sinh(np.outer(grid.nodes_x, rho))
    ch_y = np.cosh(np.outer(grid.nodes_y, rho))
    sh_y = np.sinh(np.outer(grid.nodes_y, rho))
    return (
        ch_x @ D["d_ee"] @ ch_y.T
        + ch_x @ D["d_eo"] @ sh_y.T
        + sh_x @ D["d_oe"] @ ch_y.T
        + sh_x @ D["d_oo"] @ sh_y.T
    )


def b_operator_product(z: complex, i: int, rho: complex, nu: complex, parity_x: str, parity_y: str,
                       params: ModelParams, x, y) -> np.ndarray:
    """B_i(z) applied to X(x) Y(y) with X, Y the cosh/sinh profiles, on the grid x (rows) by y (cols)."""
    k = term_data(z, i, params).k
    a, b = params.a, params.b
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    X, _ = separable_profile(rho, parity_x, x)
    Y, _ = separable_profile(nu, parity_y, y)
    Xm, dXm = separable_profile(rho, parity_x, -a)
    Xp, dXp = separable_profile(rho, parity_x, a)
    Ym, dYm = separable_profile(nu, parity_y, -b)
    Yp, dYp = separable_profile(nu, parity_y, b)

    out = np.outer(np.exp(-k * (a + x)) * (k * Xm - dXm), Y)
    out += np.outer(np.exp(-k * (a - x)) * (k * Xp + dXp), Y)
    out += np.outer(X, np.exp(-k * (b + y)) * (k * Ym - dYm))
    out += np.outer(X, np.exp(-k * (b - y)) * (k * Yp + dYp))
    return out


def c_operator_product(z: complex, i: int, rho: complex, nu: complex, parity_x: str, parity_y: str,
                       params: ModelParams, x, y) -> np.ndarray:
    """C_i(z) applied to X(x) Y(y), corner terms only."""
    k = term_data(z, i, params).k
    a, b = params.a, params.b
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    Xm, dXm = separable_profile(rho, parity_x, -a)
    Xp, dXp = separable_profile(rho, parity_x, a)
    Ym, dYm = separable_profile(nu, parity_y, -b)
    Yp, dYp = separable_profile(nu, parity_y, b)

    left, right = k * Xm - dXm, k * Xp + dXp
    bottom, top = k * Ym - dYm, k * Yp + dYp
    ex_m, ex_p = np.exp(-k * x), np.exp(k * x)
    ey_m, ey_p = np.exp(-k * y), np.exp(k * y)
    return (
        left * bottom * np.outer(ex_m, ey_m)
        + left * top * np.outer(ex_m, ey_p)
        + right * bottom * np.outer(ex_p, ey_m)
        + right * top * np.outer(ex_p, ey_p)
    )


# =============================================================================
# Two terms on a square: rank-one eigenvector search
# =============================================================================

@dataclass
class SquareSearchResult:
    z: complex
    nu: complex
    eta: Tuple[complex, complex]
    root_class: RootClass
    parity: str
    d_matrix: np.ndarray
    residuals: Dict[str, float] = field(default_factory=dict)

    def coefficients(self) -> ClassCoefficients:
        if self.parity == EVEN:
            return ClassCoefficients(d_ee=self.d_matrix)
        return ClassCoefficients(d_oo=self.d_matrix)


def cross_matrix(row: np.ndarray) -> np.ndarray:
    """Antisymmetric D with row @ D = 0 for a length-3 row."""
    s1, s2, s3 = row
    return np.array([
        [0, -s3, s2],
        [s3, 0, -s1],
        [-s2, s1, 0],
    ], dtype=complex)


def _ordered_class(z: complex, nu: complex, params: ModelParams, ref: List[complex]) -> RootClass:
    """equiv_roots with the two non-nu members matched to `ref` so the columns move continuously."""
    rc = equiv_roots(z, nu, params)
    r1, r2 = rc.roots[0], rc.roots[1]
    if ref:
        straight = abs(r1 ** 2 - ref[0] ** 2) + abs(r2 ** 2 - ref[1] ** 2)
        swapped = abs(r2 ** 2 - ref[0] ** 2) + abs(r1 ** 2 - ref[1] ** 2)
        if swapped < straight:
            r1, r2 = r2, r1
    ref[:] = [r1, r2]
    return RootClass(rc.z, rc.nu_seed, (r1, r2, rc.roots[2]))


def square_n2_search(params: ModelParams, seed: Tuple[complex, complex], parity: str = EVEN,
                     settings: Optional[NewtonSettings] = None) -> SquareSearchResult:
    """
    Find (nu, z) where the 2 x 3 S-matrix at r = a has rank one.

    Unknowns (nu, z, eta1, eta2) with eta1 S[0, j] + eta2 S[1, j] = 0 for the
    three columns and eta1^2 + eta2^2 = 1.
    """
    if params.n_terms != 2:
        raise ValueError("square search needs exactly two connectivity terms")
    if abs(params.a - params.b) > 1e-14 * max(params.a, params.b):
        raise ValueError("square search needs a = b")
    if parity not in PARITIES:
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    settings = settings or NewtonSettings(max_iter=80, tol_residual=1e-11)
    pick = 0 if parity == EVEN else 1

    nu0, z0 = complex(seed[0]), complex(seed[1])
    ref: List[complex] = []
    try:
        S0 = s_matrices(params.a, _ordered_class(z0, nu0, params, ref), params)[pick]
    except NeuralFieldError as e:
        raise NonConvergence(f"seed {seed} is not admissible: {e}") from None
    u, _, _ = np.linalg.svd(S0)
    eta0 = np.conj(u[:, -1])
    eta0 = eta0 / np.sqrt(eta0[0] ** 2 + eta0[1] ** 2)

    def residual(v: np.ndarray) -> np.ndarray:
        nu, z, e1, e2 = v
        try:
            S = s_matrices(params.a, _ordered_class(z, nu, params, ref), params)[pick]
        except NeuralFieldError:
            return np.full(4, 1e150, dtype=complex)
        cols = e1 * S[0, :] + e2 * S[1, :]
        return np.concatenate([cols, [e1 ** 2 + e2 ** 2 - 1.0]])

    _log(f"square search from nu={nu0:.4g}, z={z0:.4g} ({parity})")
    try:
        result = complex_newton(residual, [nu0, z0, eta0[0], eta0[1]], settings, label="square_n2")
    except NeuralFieldError as e:
        raise NonConvergence(f"square search failed from seed {seed}: {e}") from None

    nu, z, e1, e2 = result.x
    ref.clear()
    rc = _ordered_class(z, nu, params, ref)
    S_e, S_o = s_matrices(params.a, rc, params)
    S = S_e if parity == EVEN else S_o
    D = cross_matrix(S[0, :])
    scale = max(np.max(np.abs(S)) ** 2, 1e-300)
    minors = [S[0, i] * S[1, j] - S[0, j] * S[1, i] for i, j in ((0, 1), (0, 2), (1, 2))]
    minor_res = float(max(abs(m) for m in minors) / scale)

    out = SquareSearchResult(
        z=complex(z), nu=complex(nu), eta=(complex(e1), complex(e2)),
        root_class=rc, parity=parity, d_matrix=D,
    )
    bc = boundary_residual(z, rc, out.coefficients(), params) / scale
    out.residuals = {"newton": result.residual, "boundary": bc, "minors": minor_res}
    if bc > 1e-8:
        raise RankConditionFailed(f"constructed coefficients leave boundary residual {bc:.3e}")
    solver_log.log("eigenpair_found", detail="square_n2", z=complex(z), nu=complex(nu))
    return out
