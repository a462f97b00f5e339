"""
Hopf bifurcations in the amplitude c_hat and the first Lyapunov coefficient.

g21 comes from the residue of the resolvent at the critical eigenvalue,
evaluated as a contour integral on a small circle around it and divided
pointwise by the eigenfunction. l1 = Re(g21) / |Im(z)|.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .charfun import EVEN
from .errors import (
    ContourHitsEigenvalue,
    DegenerateEigenfunction,
    EigenvalueHit,
    LostTracking,
    NeuralFieldError,
    NoCrossing,
    ResonantTruncation,
)
from .model import ModelParams
from .numerics import ComplexField, QuadGrid, periodic_trapezoid
from .solver_log import make_tagged_printer, solver_log
from .spectrum import EigenPair, assemble_eigenfunction, classify, delta_residual, eigen_solve, resolve

_log = make_tagged_printer("Hopf")

INTERIOR_FRACTION = 0.8
NEAR_ZERO_FRACTION = 0.1
CROSSING_TOL = 1e-8
CONTOUR_CHECKS = 8


@dataclass
class HopfResult:
    c_hat_critical: float
    omega: float
    eigenpair: EigenPair
    bracket: Tuple[float, float]
    tolerance: float = CROSSING_TOL
    track: List[Tuple[float, complex]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c_hat_critical": self.c_hat_critical,
            "omega": self.omega,
            "eigenpair": self.eigenpair.to_record(),
            "bracket": list(self.bracket),
            "tolerance": self.tolerance,
            "track": [[c, [z.real, z.imag]] for c, z in self.track],
        }


@dataclass
class LyapunovResult:
    g21: complex
    l1: float
    constancy_rel_std: float
    settings: Dict[str, Any]
    z: complex = 0j
    grid: Optional[QuadGrid] = None
    numerator: Optional[ComplexField] = None
    eigenfunction: Optional[ComplexField] = None
    n_interior: int = 0

    @property
    def field(self) -> ComplexField:
        return self.numerator / self.eigenfunction

    def to_dict(self) -> Dict[str, Any]:
        return {
            "g21": [self.g21.real, self.g21.imag],
            "l1": self.l1,
            "constancy_rel_std": self.constancy_rel_std,
            "n_interior": self.n_interior,
            "z": [self.z.real, self.z.imag],
            "settings": self.settings,
        }


# =============================================================================
# Third derivative of the nonlinearity
# =============================================================================

def d3g_apply(q: ComplexField, z: complex, params: ModelParams, grid: QuadGrid) -> ComplexField:
    """
    S'''(0) int J(r, r') exp(-(2z + conj z) tau(r, r')) q(r')^2 conj(q(r')) dr'.

    S''(0) = 0 for the centred sigmoid, so no second-order term enters.
    """
    q = np.asarray(q, dtype=complex)
    cubic = q * q * np.conj(q)
    shift = 2.0 * z + np.conj(z)
    out = np.zeros(grid.shape, dtype=complex)
    for term in params.terms:
        amp = term.c_hat * np.exp(-shift * params.tau0)
        out += amp * grid.apply_exp_kernel(term.xi + shift, cubic)
    return params.s3 * out


# =============================================================================
# Lyapunov coefficient
# =============================================================================

def _check_contour(pair: EigenPair, params: ModelParams, epsilon: float, n_x: int, n_y: int,
                   grid: QuadGrid) -> None:
    for j in range(CONTOUR_CHECKS):
        w = pair.z + epsilon * np.exp(2j * math.pi * j / CONTOUR_CHECKS)
        try:
            found = classify(w, params, n_x, n_y, grid, refine_radius=0.5 * epsilon)
        except NeuralFieldError as e:
            raise ContourHitsEigenvalue(f"contour point {w:.6g} not admissible: {e}") from None
        if found.kind != "Resolvent":
            raise ContourHitsEigenvalue(f"contour point {w:.6g} classified {found.kind}")


def g21_compute(
    eigenpair: EigenPair,
    params: ModelParams,
    epsilon: float = 0.01,
    n_z: int = 32,
    n_x: int = 3,
    n_y: int = 3,
    grid: Optional[QuadGrid] = None,
    check_contour: bool = True,
    threads: int = 1,
) -> LyapunovResult:
    """g21 and l1 at a Hopf eigenpair by the contour integral of the resolvent."""
    grid = grid or QuadGrid.build(params.a, params.b, 32)
    z = eigenpair.z
    if check_contour:
        _check_contour(eigenpair, params, epsilon, n_x, n_y, grid)

    q = assemble_eigenfunction(eigenpair, params, grid)
    h = d3g_apply(q, z, params, grid)

    def contour_value(theta: float) -> ComplexField:
        phase = np.exp(2j * math.pi * theta)
        w = z + epsilon * phase
        try:
            value = epsilon * phase * resolve(w, h, params, n_x, n_y, grid)
        except (EigenvalueHit, ResonantTruncation) as e:
            raise ContourHitsEigenvalue(f"resolvent failed at contour point {w:.6g}: {e}") from None
        solver_log.log("contour_point", w=complex(w))
        return value

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            numerator = sum(pool.map(contour_value, np.arange(n_z) / n_z)) / n_z
    else:
        numerator = periodic_trapezoid(contour_value, n_z)

    X, Y = grid.mesh()
    absq = np.abs(q)
    mask = (
        (np.abs(X) <= INTERIOR_FRACTION * params.a)
        & (np.abs(Y) <= INTERIOR_FRACTION * params.b)
        & (absq >= NEAR_ZERO_FRACTION * absq.max())
    )
    if not mask.any():
        raise DegenerateEigenfunction("no interior sample point with |q| above the cutoff")

    ratio = numerator[mask] / q[mask]
    g21 = complex(np.mean(ratio))
    spread = float(np.sqrt(np.mean(np.abs(ratio - g21) ** 2)))
    rel_std = spread / abs(g21) if g21 != 0 else math.inf
    # same l1 from either member of the conjugate pair
    l1 = g21.real / abs(z.imag)

    _log(f"g21 = {g21:.6g}, l1 = {l1:.6g} (rel std {rel_std:.2e})")
    return LyapunovResult(
        g21=g21,
        l1=l1,
        constancy_rel_std=rel_std,
        settings={"epsilon": epsilon, "n_z": n_z, "n_x": n_x, "n_y": n_y, "n_grid": grid.shape[0]},
        z=z,
        grid=grid,
        numerator=numerator,
        eigenfunction=q,
        n_interior=int(mask.sum()),
    )


def g21_field_line(result: LyapunovResult, n: int = 101, y: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """(x, g21 field) along the horizontal line at height y."""
    grid = result.grid
    xs = np.linspace(-grid.a, grid.a, n)
    num = grid.interpolate(result.numerator, xs, [y])[:, 0]
    den = grid.interpolate(result.eigenfunction, xs, [y])[:, 0]
    return xs, num / den


# =============================================================================
# Hopf continuation
# =============================================================================

def _track_from(params: ModelParams, parities: Tuple[str, str], start: EigenPair,
                values: np.ndarray, index: int) -> List[Tuple[float, EigenPair]]:
    out = []
    pair = start
    for c in values:
        try:
            pair = eigen_solve(params.with_c_hat(c, index), parities[0], parities[1],
                               (pair.z, pair.rho, pair.nu), check_delta=False)
        except NeuralFieldError as e:
            raise LostTracking(f"continuation lost the eigenvalue at c_hat = {c:.6g}: {e}") from None
        out.append((float(c), pair))
    return out


def hopf_find(
    params: ModelParams,
    c_hat_range: Tuple[float, float],
    parities: Tuple[str, str] = (EVEN, EVEN),
    seed: Tuple[complex, complex, complex] = (1.3j, -0.2 + 1.1j, -0.2 + 1.1j),
    steps: int = 12,
    tol: float = CROSSING_TOL,
    term_index: int = 0,
    grid: Optional[QuadGrid] = None,
    max_bisections: int = 80,
) -> HopfResult:
    """
    Continue an eigenvalue in c_hat from the middle of the range outward,
    bracket the sign change of Re z and bisect to |Re z| <= tol.
    """
    lo, hi = sorted(float(v) for v in c_hat_range)
    mid = 0.5 * (lo + hi)
    try:
        start = eigen_solve(params.with_c_hat(mid, term_index), parities[0], parities[1], seed, check_delta=False)
    except NeuralFieldError as e:
        raise LostTracking(f"no eigenvalue from the seed at c_hat = {mid:.6g}: {e}") from None
    if start.z.imag < 0:
        start = start.conjugate()

    half = max(steps // 2, 1)
    down = _track_from(params, parities, start, np.linspace(mid, lo, half + 1)[1:], term_index)
    up = _track_from(params, parities, start, np.linspace(mid, hi, half + 1)[1:], term_index)
    track = list(reversed(down)) + [(mid, start)] + up
    _log(f"tracked {len(track)} points on [{lo:g}, {hi:g}]")

    bracket = None
    for (c0, p0), (c1, p1) in zip(track, track[1:]):
        if p0.z.real == 0:
            bracket = (c0, p0, c0, p0)
            break
        if (p0.z.real < 0) != (p1.z.real < 0):
            bracket = (c0, p0, c1, p1)
            break
    if bracket is None:
        raise NoCrossing(f"Re z keeps its sign for c_hat in [{lo:g}, {hi:g}]")

    c_a, p_a, c_b, p_b = bracket
    for it in range(max_bisections):
        if abs(p_a.z.real) <= tol:
            c_b, p_b = c_a, p_a
            break
        if abs(p_b.z.real) <= tol:
            c_a, p_a = c_b, p_b
            break
        c_m = 0.5 * (c_a + c_b)
        near = p_a if abs(c_m - c_a) <= abs(c_b - c_m) else p_b
        try:
            p_m = eigen_solve(params.with_c_hat(c_m, term_index), parities[0], parities[1],
                              (near.z, near.rho, near.nu), check_delta=False)
        except NeuralFieldError as e:
            raise LostTracking(f"bisection lost the eigenvalue at c_hat = {c_m:.6g}: {e}") from None
        solver_log.log("bisection_step", c_hat=c_m, re_z=p_m.z.real, width=abs(c_b - c_a))
        if (p_m.z.real < 0) == (p_a.z.real < 0):
            c_a, p_a = c_m, p_m
        else:
            c_b, p_b = c_m, p_m
    else:
        _log(f"bisection stopped after {max_bisections} steps")

    c_star, pair = (c_a, p_a) if abs(p_a.z.real) <= abs(p_b.z.real) else (c_b, p_b)
    if pair.z.imag < 0:
        pair = pair.conjugate()
    crit = params.with_c_hat(c_star, term_index)
    pair.residual_delta = delta_residual(pair, crit, grid or QuadGrid.build(params.a, params.b, 32))

    _log(f"Hopf at c_hat = {c_star:.6f}, omega = {pair.z.imag:.6f}")
    return HopfResult(
        c_hat_critical=float(c_star),
        omega=float(pair.z.imag),
        eigenpair=pair,
        bracket=(min(c_a, c_b), max(c_a, c_b)),
        tolerance=tol,
        track=[(c, p.z) for c, p in track],
    )
