"""
Point spectrum, classification and resolvent for single-term connectivity.

An eigenvalue z comes with separation constants (rho, nu) such that
P_z(rho, nu) = 0 and the Robin conditions of both SLPs hold; the eigenfunction
is the matching cosh/sinh product. Away from the spectrum the resolvent is a
series over the SLP product basis with denominators P_z(rho_m, nu_n).
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .charfun import (
    EVEN,
    ODD,
    PARITIES,
    apply_delta,
    canonical_sign,
    char_poly,
    char_poly_scale,
    resonance_check,
    separable_profile,
    term_arrays,
)
from .errors import EigenvalueHit, NeuralFieldError, NonConvergence, ResonantSolution
from .model import ModelParams
from .numerics import ComplexField, NewtonSettings, QuadGrid, complex_newton
from .slp import BasisSet, basis_build, slp_roots
from .solver_log import make_tagged_printer, solver_log

_log = make_tagged_printer("Spectrum")

PAIR_TOL = 1e-9
DEDUPE_TOL = 1e-6
DELTA_TOL = 1e-3
ESSENTIAL_TOL = 1e-10


# =============================================================================
# Types
# =============================================================================

@dataclass
class EigenPair:
    z: complex
    rho: complex
    nu: complex
    parity_x: str
    parity_y: str
    residual_newton: float = 0.0
    residual_delta: Optional[float] = None
    residual_bc: float = 0.0

    def conjugate(self) -> "EigenPair":
        return EigenPair(
            z=self.z.conjugate(),
            rho=canonical_sign(self.rho.conjugate()),
            nu=canonical_sign(self.nu.conjugate()),
            parity_x=self.parity_x,
            parity_y=self.parity_y,
            residual_newton=self.residual_newton,
            residual_delta=self.residual_delta,
            residual_bc=self.residual_bc,
        )

    def to_record(self) -> Dict[str, Any]:
        return {
            "z": [self.z.real, self.z.imag],
            "rho": [self.rho.real, self.rho.imag],
            "nu": [self.nu.real, self.nu.imag],
            "parity_x": self.parity_x,
            "parity_y": self.parity_y,
            "residuals": {
                "newton": self.residual_newton,
                "boundary": self.residual_bc,
                "delta": self.residual_delta,
            },
        }


@dataclass
class SpectrumReport:
    eigenpairs: List[EigenPair]
    essential_point: complex
    special_points: Dict[str, Any]
    window: Tuple[float, float, float, float]
    seeds_used: int = 0
    converged: int = 0
    failed: int = 0

    def to_records(self) -> List[Dict[str, Any]]:
        pairs = sorted(self.eigenpairs, key=lambda p: (-p.z.real, p.z.imag))
        return [p.to_record() for p in pairs]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "window": list(self.window),
            "essential_point": [self.essential_point.real, self.essential_point.imag],
            "special_points": self.special_points,
            "eigenpairs": self.to_records(),
            "seeds_used": self.seeds_used,
            "converged": self.converged,
            "failed": self.failed,
        }


@dataclass
class Classification:
    kind: str
    z: complex
    eigenpair: Optional[EigenPair] = None
    margin: float = math.inf

    def to_dict(self) -> Dict[str, Any]:
        out = {"kind": self.kind, "z": [self.z.real, self.z.imag], "margin": self.margin}
        if self.eigenpair is not None:
            out["eigenpair"] = self.eigenpair.to_record()
        return out


# =============================================================================
# Eigenpairs
# =============================================================================

def boundary_factor(z: complex, rho: complex, halfwidth: float, parity: str, params: ModelParams) -> complex:
    """k cosh(rho r) + rho sinh(rho r) for even parity, k sinh + rho cosh for odd."""
    k = z + params.terms[0].xi
    ch, sh = np.cosh(rho * halfwidth), np.sinh(rho * halfwidth)
    if parity == EVEN:
        return k * ch + rho * sh
    return k * sh + rho * ch


def _boundary_scale(z: complex, rho: complex, halfwidth: float, params: ModelParams) -> float:
    k = z + params.terms[0].xi
    return (abs(k) + abs(rho)) * math.cosh(rho.real * halfwidth) + 1e-300


def _single_term(params: ModelParams) -> None:
    if params.n_terms != 1:
        raise ValueError("this operation is defined for single-term connectivity")


def assemble_eigenfunction(pair: EigenPair, params: ModelParams, grid: QuadGrid) -> ComplexField:
    """X(rho x) Y(nu y) with cosh for even and sinh for odd factors; q(0, 0) = 1 for even/even."""
    X, _ = separable_profile(pair.rho, pair.parity_x, grid.nodes_x)
    Y, _ = separable_profile(pair.nu, pair.parity_y, grid.nodes_y)
    return np.outer(X, Y)


def constant_mode_residual(params: ModelParams) -> complex:
    """xi - alpha + 4ab c(-xi); zero iff z = -xi is an eigenvalue with constant eigenfunction."""
    _single_term(params)
    xi = params.terms[0].xi
    _, c = term_arrays(-xi, params)
    return xi - params.alpha + 4.0 * params.a * params.b * c[0]


def delta_residual(pair: EigenPair, params: ModelParams, grid: QuadGrid) -> float:
    q = assemble_eigenfunction(pair, params, grid)
    return grid.norm(apply_delta(pair.z, q, params, grid)) / grid.norm(q)


def eigen_solve(
    params: ModelParams,
    parity_x: str,
    parity_y: str,
    seed: Tuple[complex, complex, complex],
    settings: Optional[NewtonSettings] = None,
    grid: Optional[QuadGrid] = None,
    check_delta: bool = True,
) -> EigenPair:
    """Newton on [P_z(rho, nu); bc_x(rho, z); bc_y(nu, z)] from seed (z, rho, nu)."""
    _single_term(params)
    for p in (parity_x, parity_y):
        if p not in PARITIES:
            raise ValueError(f"parity must be 'even' or 'odd', got {p!r}")
    settings = settings or NewtonSettings(max_iter=60, tol_residual=1e-12)
    z0, rho0, nu0 = (complex(s) for s in seed)

    # Fixed scales keep the residual holomorphic
    sp = float(char_poly_scale(z0, rho0, nu0, params)) + 1e-300
    sx = _boundary_scale(z0, rho0, params.a, params)
    sy = _boundary_scale(z0, nu0, params.b, params)

    def residual(v: np.ndarray) -> np.ndarray:
        z, rho, nu = v
        return np.array([
            char_poly(z, rho, nu, params) / sp,
            boundary_factor(z, rho, params.a, parity_x, params) / sx,
            boundary_factor(z, nu, params.b, parity_y, params) / sy,
        ], dtype=complex)

    result = complex_newton(residual, [z0, rho0, nu0], settings, label=f"eigen {parity_x}/{parity_y}")
    z, rho, nu = (complex(v) for v in result.x)
    rho, nu = canonical_sign(rho), canonical_sign(nu)

    k = z + params.terms[0].xi
    if resonance_check(z, params) or min(abs(k * k - rho * rho), abs(k * k - nu * nu)) <= 1e-9 * (1 + abs(k) ** 2):
        raise ResonantSolution(f"Newton converged to the resonance set at z = {z}")
    for r, parity in ((rho, parity_x), (nu, parity_y)):
        if parity == ODD and abs(r) <= 1e-9:
            raise NonConvergence("converged to the trivial odd mode rho = 0", result.iterations, result.residual)

    p_rel = abs(char_poly(z, rho, nu, params)) / float(char_poly_scale(z, rho, nu, params))
    bc = max(
        abs(boundary_factor(z, rho, params.a, parity_x, params)) / _boundary_scale(z, rho, params.a, params),
        abs(boundary_factor(z, nu, params.b, parity_y, params)) / _boundary_scale(z, nu, params.b, params),
    )
    if p_rel > PAIR_TOL or bc > PAIR_TOL:
        raise NonConvergence("eigenpair residuals above tolerance", result.iterations, max(p_rel, bc))

    pair = EigenPair(z, rho, nu, parity_x, parity_y, residual_newton=result.residual, residual_bc=bc)
    if check_delta:
        pair.residual_delta = delta_residual(pair, params, grid or QuadGrid.build(params.a, params.b, 32))
    solver_log.log("eigenpair_found", z=z, rho=rho, nu=nu, parity=f"{parity_x}/{parity_y}")
    return pair


# =============================================================================
# Scan
# =============================================================================

def _in_window(z: complex, window: Tuple[float, float, float, float]) -> bool:
    re_lo, re_hi, im_lo, im_hi = window
    return re_lo <= z.real <= re_hi and im_lo <= z.imag <= im_hi


def scan_seeds(params: ModelParams, window: Tuple[float, float, float, float], n_seeds: Tuple[int, int],
               mode_range: Tuple[int, int]) -> List[Tuple[str, str, Tuple[complex, complex, complex]]]:
    """(parity_x, parity_y, (z, rho, nu)) seeds from SLP roots at k of each grid z."""
    re_lo, re_hi, im_lo, im_hi = window
    lo, hi = mode_range
    xi = params.terms[0].xi
    seeds = []
    for zr in np.linspace(re_lo, re_hi, n_seeds[0]):
        for zi in np.linspace(im_lo, im_hi, n_seeds[1]):
            z = complex(zr, zi)
            k = z + xi
            if abs(k) < 1e-6:
                continue
            try:
                xr = [r for r in slp_roots(k, params.a, hi + 1) if lo <= r.index <= hi and r.rho != 0]
                yr = [r for r in slp_roots(k, params.b, hi + 1) if lo <= r.index <= hi and r.rho != 0]
            except NeuralFieldError:
                continue
            for rx in xr:
                for ry in yr:
                    seeds.append((rx.parity, ry.parity, (z, rx.rho, ry.rho)))
    return seeds


def spectrum_scan(
    params: ModelParams,
    window: Tuple[float, float, float, float] = (-2.0, 0.5, -4.0, 4.0),
    n_seeds: Tuple[int, int] = (12, 12),
    mode_range: Tuple[int, int] = (0, 3),
    extra_seeds: Sequence[Tuple[str, str, Tuple[complex, complex, complex]]] = (),
    grid: Optional[QuadGrid] = None,
    threads: int = 1,
    dedupe_tol: float = DEDUPE_TOL,
    delta_tol: float = DELTA_TOL,
) -> SpectrumReport:
    """
    Multi-start eigen_solve over the window for all parity combinations.

    Pairs whose end-to-end residual exceeds `delta_tol` are dropped; the
    result is closed under conjugation within the window.
    """
    _single_term(params)
    grid = grid or QuadGrid.build(params.a, params.b, 32)
    seeds = scan_seeds(params, window, n_seeds, mode_range) + list(extra_seeds)
    _log(f"scanning {len(seeds)} seeds in window {window}")

    def solve(item):
        px, py, seed = item
        try:
            return eigen_solve(params, px, py, seed, check_delta=False)
        except NeuralFieldError as e:
            solver_log.log("seed_failed", detail=str(e)[:200])
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve, seeds))
    else:
        results = [solve(s) for s in seeds]

    converged = [p for p in results if p is not None]
    unique: List[EigenPair] = []
    for pair in sorted(converged, key=lambda p: (p.z.real, p.z.imag)):
        if not _in_window(pair.z, window):
            continue
        if any(abs(pair.z - u.z) <= dedupe_tol for u in unique):
            continue
        unique.append(pair)
    for pair in unique:
        pair.residual_delta = delta_residual(pair, params, grid)
    for pair in [p for p in unique if p.residual_delta > delta_tol]:
        solver_log.log("root_skipped", detail="end-to-end residual too large", z=pair.z,
                       residual=pair.residual_delta)
    unique = [p for p in unique if p.residual_delta <= delta_tol]

    # conjugate closure: all parameters are real
    for pair in list(unique):
        mirror = pair.conjugate()
        if _in_window(mirror.z, window) and not any(abs(mirror.z - u.z) <= dedupe_tol for u in unique):
            unique.append(mirror)
    unique.sort(key=lambda p: (p.z.real, p.z.imag))

    xi = params.terms[0].xi
    cm = constant_mode_residual(params)
    cm_scale = abs(xi) + params.alpha + abs(4.0 * params.a * params.b * term_arrays(-xi, params)[1][0])
    is_eig = abs(cm) <= PAIR_TOL * cm_scale
    special = {"z": [-xi.real, -xi.imag], "residual": [cm.real, cm.imag], "is_eigenvalue": bool(is_eig)}
    if is_eig and _in_window(-xi, window):
        unique.append(EigenPair(-xi, 0j, 0j, EVEN, EVEN, residual_delta=0.0))

    report = SpectrumReport(
        eigenpairs=unique,
        essential_point=complex(-params.alpha),
        special_points=special,
        window=tuple(window),
        seeds_used=len(seeds),
        converged=len(converged),
        failed=len(seeds) - len(converged),
    )
    _log(f"{len(unique)} eigenvalue(s) in window, {report.failed} seed(s) failed")
    return report


# =============================================================================
# Classification and resolvent
# =============================================================================

def _basis_margins(z: complex, basis: BasisSet, params: ModelParams) -> np.ndarray:
    P = char_poly(z, basis.rhos, basis.nus, params)
    return np.abs(P) / char_poly_scale(z, basis.rhos, basis.nus, params)


def classify(
    z: complex,
    params: ModelParams,
    n_x: int = 3,
    n_y: int = 3,
    grid: Optional[QuadGrid] = None,
    screen_tol: float = 0.05,
    refine_radius: Optional[float] = None,
) -> Classification:
    """
    Essential, Resonant, Eigenvalue or Resolvent for the point z.

    Basis entries whose relative |P_z| falls below `screen_tol` seed an
    eigen_solve; z is an eigenvalue when the refined eigenvalue lies within
    `refine_radius` of it. Only the truncated modes are tested.
    """
    _single_term(params)
    z = complex(z)
    grid = grid or QuadGrid.build(params.a, params.b, 32)
    if abs(z + params.alpha) <= ESSENTIAL_TOL * (1.0 + params.alpha):
        return Classification("Essential", z, margin=0.0)

    xi = params.terms[0].xi
    if abs(z + xi) <= 1e-9 * (1.0 + abs(z)):
        cm = abs(constant_mode_residual(params))
        if cm <= PAIR_TOL * (abs(xi) + params.alpha + 1.0):
            return Classification("Eigenvalue", z, EigenPair(-xi, 0j, 0j, EVEN, EVEN, residual_delta=0.0), cm)
        return Classification("Resonant", z, margin=cm)

    radius = refine_radius if refine_radius is not None else 0.01 * (1.0 + abs(z))
    basis = basis_build(z, params, n_x, n_y, grid)
    margins = _basis_margins(z, basis, params)
    margin = float(np.min(margins))

    for idx in np.argsort(margins):
        if margins[idx] > screen_tol:
            break
        entry = basis.entries[idx]
        try:
            pair = eigen_solve(params, entry.phi_root.parity, entry.psi_root.parity,
                               (z, entry.raw_rho, entry.raw_nu), grid=grid)
        except NeuralFieldError:
            continue
        if abs(pair.z - z) <= radius:
            return Classification("Eigenvalue", z, pair, margin)
    return Classification("Resolvent", z, margin=margin)


def resolve(
    z: complex,
    g: ComplexField,
    params: ModelParams,
    n_x: int = 3,
    n_y: int = 3,
    grid: Optional[QuadGrid] = None,
    basis: Optional[BasisSet] = None,
    hit_tol: float = 1e-10,
) -> ComplexField:
    """q = g/(z+alpha) + 4 c k^2/(z+alpha) sum_mn xi_mn / P_z(rho_m, nu_n) phi_m psi_n."""
    _single_term(params)
    z = complex(z)
    grid = grid or (basis.grid if basis is not None else QuadGrid.build(params.a, params.b, 32))
    basis = basis or basis_build(z, params, n_x, n_y, grid)

    P = char_poly(z, basis.rhos, basis.nus, params)
    rel = np.abs(P) / char_poly_scale(z, basis.rhos, basis.nus, params)
    worst = int(np.argmin(rel))
    if rel[worst] <= hit_tol:
        raise EigenvalueHit(
            f"z = {z} is numerically an eigenvalue (|P_z| = {rel[worst]:.3e})",
            rho=basis.rhos[worst], nu=basis.nus[worst], p_value=float(rel[worst]),
        )

    k, c = term_arrays(z, params)
    g = np.asarray(g, dtype=complex)
    coeffs = basis.project(g)
    zpa = z + params.alpha
    return g / zpa + (4.0 * c[0] * k[0] ** 2 / zpa) * basis.synthesize(coeffs / P)
