"""
Robin Sturm-Liouville problems phi'' = rho^2 phi on [-a, a] with
k phi(-a) - phi'(-a) = 0 and k phi(a) + phi'(a) = 0.

Roots are searched in the mu-plane, rho = i pi mu / (2a), where they sit near
the integers. Each root is either even (cosh, g(rho, a) = 0) or odd
(sinh, f(rho, a) = 0). Representatives are stored with Re mu >= 0.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from .charfun import EVEN, ODD, canonical_sign, separable_profile
from .errors import DuplicateCollapse, ResonantTruncation
from .model import ModelParams
from .numerics import ComplexField, OrthoResult, QuadGrid, gauss_legendre, gram_schmidt, newton_batch
from .solver_log import make_tagged_printer, solver_log

_log = make_tagged_printer("SLP")

SEED_SPACING = 0.25
ROOT_TOL = 1e-9
ZERO_MU_TOL = 1e-8
LAMBDA0_TOL = 1e-12
TRUNCATION_TOL = 1e-8
_NORM_NODES = 64


@dataclass(frozen=True)
class SlpRoot:
    """One root of the SLP; rho = 0 marks the lambda = 0 special modes."""
    rho: complex
    parity: str
    index: int
    residual: float
    halfwidth: float

    @property
    def mu(self) -> complex:
        return 2.0 * self.halfwidth * self.rho / (1j * math.pi)

    @property
    def lam(self) -> complex:
        """lambda = -(2 a rho / pi)^2 = mu^2."""
        return -(2.0 * self.halfwidth * self.rho / math.pi) ** 2


# =============================================================================
# Characteristic function and factors
# =============================================================================

def chi(mu, k: complex, halfwidth: float):
    """k (pi/a) cos(pi mu) + (k^2/mu - (pi/2a)^2 mu) sin(pi mu)."""
    mu = np.asarray(mu, dtype=complex)
    if np.any(mu == 0):
        raise ValueError("chi is not defined at mu = 0; lambda = 0 is handled separately")
    a = halfwidth
    out = k * (math.pi / a) * np.cos(math.pi * mu) + (k ** 2 / mu - (math.pi / (2 * a)) ** 2 * mu) * np.sin(math.pi * mu)
    return out[()] if out.ndim == 0 else out


def chi_scale(mu, k: complex, halfwidth: float):
    mu = np.asarray(mu, dtype=complex)
    a = halfwidth
    return (abs(k) * math.pi / a + abs(k) ** 2 / np.abs(mu) + (math.pi / (2 * a)) ** 2 * np.abs(mu)) \
        * np.cosh(math.pi * mu.imag)


def fg_eval(rho: complex, k: complex, halfwidth: float) -> Tuple[complex, complex]:
    """f = cosh(rho a) + (k/rho) sinh(rho a), g = sinh(rho a) + (k/rho) cosh(rho a)."""
    if rho == 0:
        raise ValueError("f and g are not defined at rho = 0")
    ra = rho * halfwidth
    f = np.cosh(ra) + (k / rho) * np.sinh(ra)
    g = np.sinh(ra) + (k / rho) * np.cosh(ra)
    return complex(f), complex(g)


def _even_factor(k, a):
    """k cos(pi mu/2) - (pi mu/2a) sin(pi mu/2): zero iff k cosh(rho a) + rho sinh(rho a) = 0."""
    w = math.pi / (2 * a)

    def f(mu):
        t = 0.5 * math.pi * mu
        return k * np.cos(t) - w * mu * np.sin(t)

    def fp(mu):
        t = 0.5 * math.pi * mu
        return -0.5 * math.pi * k * np.sin(t) - w * np.sin(t) - 0.5 * math.pi * w * mu * np.cos(t)

    return f, fp


def _odd_factor(k, a):
    """k sin(pi mu/2) + (pi mu/2a) cos(pi mu/2): zero iff k sinh(rho a) + rho cosh(rho a) = 0."""
    w = math.pi / (2 * a)

    def f(mu):
        t = 0.5 * math.pi * mu
        return k * np.sin(t) + w * mu * np.cos(t)

    def fp(mu):
        t = 0.5 * math.pi * mu
        return 0.5 * math.pi * k * np.cos(t) + w * np.cos(t) - 0.5 * math.pi * w * mu * np.sin(t)

    return f, fp


def _factor_scale(mu, k, a):
    mu = np.asarray(mu, dtype=complex)
    return (abs(k) + math.pi * np.abs(mu) / (2 * a)) * np.cosh(0.5 * math.pi * mu.imag)


def _canonical_mu(mu: complex, a: float) -> complex:
    rho = canonical_sign(1j * math.pi * mu / (2 * a))
    return 2 * a * rho / (1j * math.pi)


# =============================================================================
# Root search
# =============================================================================

def _solve_seeds(k: complex, a: float, seeds: np.ndarray) -> List[Tuple[complex, str, float]]:
    found = []
    for parity, (f, fp) in ((EVEN, _even_factor(k, a)), (ODD, _odd_factor(k, a))):
        res = newton_batch(f, fp, seeds)
        rel = res.residuals / _factor_scale(res.roots, k, a)
        ok = res.converged & (rel <= ROOT_TOL * 1e-1)
        n_failed = int(np.count_nonzero(~ok))
        if n_failed:
            solver_log.log("root_skipped", detail=f"{parity} factor, k={k:.4g}", skipped=n_failed)
        for mu, r in zip(res.roots[ok], rel[ok]):
            if abs(mu) <= ZERO_MU_TOL:
                continue
            found.append((_canonical_mu(complex(mu), a), parity, float(r)))
    return found


def _dedupe(found: List[Tuple[complex, str, float]], a: float) -> List[Tuple[complex, str, float]]:
    unique: List[Tuple[complex, str, float]] = []
    for mu, parity, r in sorted(found, key=lambda item: (item[0].real, item[0].imag)):
        rho2 = (1j * math.pi * mu / (2 * a)) ** 2
        duplicate = False
        for j, (mu_u, parity_u, r_u) in enumerate(unique):
            rho2_u = (1j * math.pi * mu_u / (2 * a)) ** 2
            if abs(rho2 - rho2_u) <= 1e-8 * (1.0 + abs(rho2)):
                duplicate = True
                if parity != parity_u:
                    solver_log.log("root_collapse", detail=f"root {mu:.6g} solves both factors")
                if r < r_u:
                    unique[j] = (mu_u, parity_u, r)
                break
        if not duplicate:
            unique.append((mu, parity, r))
    return unique


def _box_seeds(re_max: float, im_max: float) -> np.ndarray:
    re = np.arange(0.0, re_max + 1e-12, SEED_SPACING)
    im = np.arange(-im_max, im_max + 1e-12, SEED_SPACING)
    R, I = np.meshgrid(re, im, indexing="ij")
    return (R + 1j * I).ravel()


def _special_roots(k: complex, a: float) -> List[Tuple[complex, str, float]]:
    out = []
    if abs(k) <= LAMBDA0_TOL:
        out.append((0j, EVEN, 0.0))
    if abs(k + 1.0 / a) <= LAMBDA0_TOL * (1.0 + 1.0 / a):
        out.append((0j, ODD, 0.0))
    return out


def asymptotic_index(mu: complex, parity: str) -> int:
    """Integer n of the localization mu_n ~ n: even roots sit near even n, odd roots near odd n."""
    base = 0 if parity == EVEN else 1
    return base + 2 * max(0, round((mu.real - base) / 2))


def _to_roots(items: List[Tuple[complex, str, float]], a: float) -> List[SlpRoot]:
    keyed = [(asymptotic_index(mu, parity), mu, parity, r) for mu, parity, r in items]
    keyed.sort(key=lambda item: (item[0], round(item[1].real, 10), item[1].imag))
    return [
        SlpRoot(rho=canonical_sign(1j * math.pi * mu / (2 * a)) if mu != 0 else 0j,
                parity=parity, index=n, residual=r, halfwidth=a)
        for n, mu, parity, r in keyed
    ]


@lru_cache(maxsize=4096)
def _slp_roots_cached(k: complex, halfwidth: float, count: int) -> Tuple[SlpRoot, ...]:
    a = halfwidth
    h = 2.0 * a * k / math.pi
    n0 = 4 + math.ceil(abs(h))
    box = n0 + 0.5

    seeds = np.concatenate([
        _box_seeds(box, box),
        np.arange(1, max(count, n0) + 4, dtype=float) + 0j,
    ])
    found = _dedupe(_solve_seeds(k, a, seeds) + _special_roots(k, a), a)

    in_box = sum(1 for mu, _, _ in found if mu.real <= box)
    if in_box != n0 + 1:
        _log(f"expected {n0 + 1} roots with Re mu <= {box}, found {in_box} (k={k:.4g}, a={a:g})")
        solver_log.log("root_skipped", detail="near-origin root count mismatch", expected=n0 + 1, found=in_box)

    roots = _to_roots(found, a)
    if len(roots) < count:
        raise DuplicateCollapse(f"only {len(roots)} distinct roots found, {count} requested")
    return tuple(roots[:count])


def slp_roots(k: complex, halfwidth: float, count: int) -> List[SlpRoot]:
    """The first `count` roots ordered by asymptotic index n (mu_n ~ n)."""
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    return list(_slp_roots_cached(complex(k), float(halfwidth), int(count)))


def slp_root_box(k: complex, halfwidth: float, re_max: float, im_max: float) -> List[SlpRoot]:
    """Every root with 0 <= Re mu <= re_max and |Im mu| <= im_max."""
    a = float(halfwidth)
    seeds = _box_seeds(re_max + 0.5, im_max + 0.5)
    found = _dedupe(_solve_seeds(complex(k), a, seeds) + _special_roots(complex(k), a), a)
    inside = [item for item in found if item[0].real <= re_max + 1e-9 and abs(item[0].imag) <= im_max + 1e-9]
    return _to_roots(inside, a)


def is_root(root: SlpRoot, k: complex) -> bool:
    """Residual check in the mu-plane for a stored root."""
    if root.rho == 0:
        return True
    mu = root.mu
    return abs(chi(mu, k, root.halfwidth)) <= ROOT_TOL * chi_scale(mu, k, root.halfwidth)


# =============================================================================
# Eigenfunctions
# =============================================================================

def _raw_profile(root: SlpRoot, x) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if root.rho == 0:
        if root.parity == EVEN:
            return np.ones_like(x, dtype=complex), np.zeros_like(x, dtype=complex)
        return x.astype(complex), np.ones_like(x, dtype=complex)
    return separable_profile(root.rho, root.parity, x)


@lru_cache(maxsize=4096)
def _profile_norm(root: SlpRoot) -> float:
    xs, ws = gauss_legendre(_NORM_NODES, -root.halfwidth, root.halfwidth)
    vals, _ = _raw_profile(root, xs)
    return float(np.sqrt(np.sum(ws * np.abs(vals) ** 2)))


def eigenfunction_eval(root: SlpRoot, k: complex, halfwidth: float, x):
    """cosh(rho x) or sinh(rho x), scaled to unit L2 norm on [-halfwidth, halfwidth]."""
    if abs(halfwidth - root.halfwidth) > 1e-14 * halfwidth:
        raise ValueError("root was computed for a different halfwidth")
    vals, _ = _raw_profile(root, x)
    return vals / _profile_norm(root)


def eigenfunction_derivative(root: SlpRoot, k: complex, halfwidth: float, x):
    if abs(halfwidth - root.halfwidth) > 1e-14 * halfwidth:
        raise ValueError("root was computed for a different halfwidth")
    _, der = _raw_profile(root, x)
    return der / _profile_norm(root)


def robin_residual(root: SlpRoot, k: complex) -> float:
    """max(|k phi(-a) - phi'(-a)|, |k phi(a) + phi'(a)|) for the normalized eigenfunction."""
    a = root.halfwidth
    ends = np.array([-a, a])
    phi = eigenfunction_eval(root, k, a, ends)
    dphi = eigenfunction_derivative(root, k, a, ends)
    return float(max(abs(k * phi[0] - dphi[0]), abs(k * phi[1] + dphi[1])))


# =============================================================================
# Product basis
# =============================================================================

@dataclass(frozen=True)
class BasisEntry:
    phi_root: SlpRoot
    psi_root: SlpRoot
    field: ComplexField
    raw_rho: complex
    raw_nu: complex


@dataclass
class BasisSet:
    """Orthonormalized products phi_m(x) psi_n(y) at a fixed z (single-term model)."""
    z: complex
    k: complex
    grid: QuadGrid
    entries: List[BasisEntry]
    raw_fields: List[ComplexField]
    transform: OrthoResult
    x_roots: List[SlpRoot] = field(default_factory=list)
    y_roots: List[SlpRoot] = field(default_factory=list)

    @property
    def rhos(self) -> np.ndarray:
        return np.array([e.raw_rho for e in self.entries], dtype=complex)

    @property
    def nus(self) -> np.ndarray:
        return np.array([e.raw_nu for e in self.entries], dtype=complex)

    def gram(self) -> np.ndarray:
        n = len(self.entries)
        G = np.empty((n, n), dtype=complex)
        for i, ei in enumerate(self.entries):
            for j, ej in enumerate(self.entries):
                G[i, j] = self.grid.inner(ei.field, ej.field)
        return G

    def project(self, g: ComplexField) -> np.ndarray:
        """Coordinates of the projection of g on the raw products."""
        ortho = np.array([self.grid.inner(g, e.field) for e in self.entries], dtype=complex)
        return self.transform.raw_coefficients(ortho)

    def synthesize(self, coeffs) -> ComplexField:
        coeffs = np.asarray(coeffs, dtype=complex)
        out = np.zeros(self.grid.shape, dtype=complex)
        for c, raw in zip(coeffs, self.raw_fields):
            out = out + c * raw
        return out


def basis_build(z: complex, params: ModelParams, n_x: int, n_y: int, grid: QuadGrid) -> BasisSet:
    """n_x x-roots times n_y y-roots of the SLPs at k(z), orthonormalized on `grid`."""
    if params.n_terms != 1:
        raise ValueError("the product basis is defined for single-term connectivity")
    if abs(z + params.alpha) <= 1e-12 * (1.0 + params.alpha):
        raise ValueError("z = -alpha is the essential spectrum")
    k = complex(z + params.terms[0].xi)
    if abs(k) <= 1e-9 * (1.0 + abs(z)):
        raise ResonantTruncation(f"k(z) = {k} vanishes")

    x_roots = slp_roots(k, params.a, n_x)
    y_roots = slp_roots(k, params.b, n_y)
    k2 = k * k
    for root in x_roots + y_roots:
        if abs(k2 - root.rho ** 2) <= TRUNCATION_TOL * (abs(k2) + abs(root.rho) ** 2):
            raise ResonantTruncation(f"k^2 = rho^2 for root {root.rho:.6g} (index {root.index})")

    X, Y = grid.nodes_x, grid.nodes_y
    phis = [eigenfunction_eval(r, k, params.a, X) for r in x_roots]
    psis = [eigenfunction_eval(r, k, params.b, Y) for r in y_roots]

    pairs = [(rx, ry) for rx in x_roots for ry in y_roots]
    raw_fields = [np.outer(p, s) for p in phis for s in psis]
    ortho = gram_schmidt(raw_fields, grid)
    if ortho.dropped:
        raise ResonantTruncation(f"{len(ortho.dropped)} basis product(s) numerically dependent")

    entries = [
        BasisEntry(phi_root=rx, psi_root=ry, field=f, raw_rho=rx.rho, raw_nu=ry.rho)
        for (rx, ry), f in zip(pairs, ortho.fields)
    ]
    return BasisSet(z=complex(z), k=k, grid=grid, entries=entries, raw_fields=raw_fields,
                    transform=ortho, x_roots=x_roots, y_roots=y_roots)
