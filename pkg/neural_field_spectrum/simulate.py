"""
Direct time integration of the delayed neural field

    dV/dt = -alpha V + int J(r, r') S(V(t - tau(r, r'), r')) dr'

on the Gauss-Legendre grid of the rectangle. Classical RK4 in time; the
delayed values come from a ring of stored (V, dV/dt) pairs through cubic
Hermite interpolation. Every delay is at least tau0 >= dt, so all four RK
stages only read history that is already stored.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks

from .errors import BlowUp, ConfigError, NoOscillation
from .model import ModelParams, Point2, delay_matrix, firing_rate, kernel_matrix
from .numerics import QuadGrid
from .solver_log import make_tagged_printer, solver_log
from .spectrum import EigenPair, assemble_eigenfunction

_log = make_tagged_printer("Simulate")

HISTORY_KINDS = ("constant", "eigenmode", "custom")

# RK4 stage offsets in units of dt
_STAGES = (0.0, 0.5, 1.0)


@dataclass
class HistorySpec:
    """Initial history on [-tau_max, 0]."""
    kind: str = "constant"
    value: float = 0.0
    amplitude: float = 0.01
    eigenpair: Optional[EigenPair] = None
    func: Optional[Callable[[float, np.ndarray, np.ndarray], np.ndarray]] = None

    def describe(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind}
        if self.kind == "constant":
            out["value"] = self.value
        elif self.kind == "eigenmode":
            out["amplitude"] = self.amplitude
            out["profile"] = "amplitude * Re(q) / max|q|, constant in time"
            if self.eigenpair is not None:
                out["eigenpair"] = self.eigenpair.to_record()
        return out


@dataclass
class SimConfig:
    n_grid: int = 12
    dt: float = 0.05
    t_end: float = 150.0
    history: HistorySpec = field(default_factory=HistorySpec)
    probes: Sequence[Point2] = (Point2(0.0, 0.0),)
    snapshot_stride: int = 0
    max_abs: Optional[float] = None

    def validate(self, params: ModelParams) -> None:
        if not self.dt > 0:
            raise ConfigError(f"simulate.dt must be positive, got {self.dt}")
        if self.dt > params.tau0:
            raise ConfigError(f"simulate.dt = {self.dt} exceeds tau0 = {params.tau0}")
        if self.n_grid < 8:
            raise ConfigError(f"simulate.n_grid must be >= 8, got {self.n_grid}")
        if not self.t_end > 0:
            raise ConfigError(f"simulate.t_end must be positive, got {self.t_end}")
        if self.history.kind not in HISTORY_KINDS:
            raise ConfigError(f"unknown history kind {self.history.kind!r}")
        if self.history.kind == "eigenmode" and self.history.eigenpair is None:
            raise ConfigError("eigenmode history needs an eigenpair")
        if self.history.kind == "custom" and self.history.func is None:
            raise ConfigError("custom history needs a callable")
        for p in self.probes:
            if abs(p[0]) > params.a or abs(p[1]) > params.b:
                raise ConfigError(f"probe {tuple(p)} lies outside the rectangle")


@dataclass
class Trajectory:
    times: np.ndarray
    probe_series: np.ndarray
    probes: List[Point2]
    snapshots: List[Tuple[float, np.ndarray]]
    history_buffer: Dict[str, np.ndarray]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def max_abs(self) -> float:
        """sup |V| over the stored probe series and snapshots."""
        values = [np.max(np.abs(self.probe_series))] if self.probe_series.size else []
        values += [float(np.max(np.abs(s))) for _, s in self.snapshots]
        return float(max(values)) if values else 0.0

    def series(self, index: int = 0) -> np.ndarray:
        return self.probe_series[index]


@dataclass
class PeriodEstimate:
    period: float
    error: float
    crossings: int


# =============================================================================
# History
# =============================================================================

def _history_field(spec: HistorySpec, params: ModelParams, grid: QuadGrid) -> Optional[np.ndarray]:
    """Time-independent profile, or None for a custom callable."""
    if spec.kind == "constant":
        return np.full(grid.shape, float(spec.value))
    if spec.kind == "eigenmode":
        q = assemble_eigenfunction(spec.eigenpair, params, grid)
        return spec.amplitude * q.real / np.max(np.abs(q))
    return None


def _fill_history(spec: HistorySpec, params: ModelParams, grid: QuadGrid, dt: float,
                  ring: int) -> Tuple[np.ndarray, np.ndarray]:
    """V and dV/dt at t = -j dt stored in slot (-j) mod ring."""
    m = grid.shape[0] * grid.shape[1]
    V = np.zeros((ring, m))
    F = np.zeros((ring, m))
    profile = _history_field(spec, params, grid)
    times = -dt * np.arange(ring)
    if profile is not None:
        V[:] = profile.ravel()
    else:
        X, Y = grid.mesh()
        samples = np.array([np.asarray(spec.func(t, X, Y), dtype=float).ravel() for t in times])
        V[(-np.arange(ring)) % ring] = samples
        F[(-np.arange(ring)) % ring] = np.gradient(samples, times, axis=0)
    return V, F


# =============================================================================
# Stepper
# =============================================================================

def _hermite(theta: np.ndarray) -> Tuple[np.ndarray, ...]:
    t2 = theta * theta
    t3 = t2 * theta
    return (2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + theta, -2 * t3 + 3 * t2, t3 - t2)


def _stage_lookup(tau: np.ndarray, dt: float, offset: float):
    """Interval start (relative step index) and Hermite weights for t_n + offset dt - tau."""
    rel = offset - tau / dt
    start = np.floor(rel)
    theta = rel - start
    # exact hit on the newest node: use the interval ending there
    newest = start >= 0
    start[newest] = -1
    theta[newest] = 1.0
    return start.astype(int), _hermite(theta)


def simulate(params: ModelParams, config: SimConfig) -> Trajectory:
    """Integrate the nonlinear delayed field from the configured history up to t_end."""
    config.validate(params)
    grid = QuadGrid.build(params.a, params.b, config.n_grid)
    X, Y = grid.mesh()
    xs, ys = X.ravel(), Y.ravel()
    m = xs.size
    dt = config.dt

    J = kernel_matrix(xs, ys, params).real
    A = J * grid.weights2d().ravel()[None, :]
    tau = delay_matrix(xs, ys, params)
    ring = int(math.ceil(params.tau_max / dt)) + 3
    lookups = {c: _stage_lookup(tau, dt, c) for c in _STAGES}
    cols = np.broadcast_to(np.arange(m), (m, m))

    Vbuf, Fbuf = _fill_history(config.history, params, grid, dt, ring)
    v0 = Vbuf[0].copy()
    ceiling = config.max_abs
    if ceiling is None:
        bound = max(params.kernel_abs_bound(), float(np.max(np.sum(np.abs(A), axis=1))))
        drive = 0.5 * bound / params.alpha
        ceiling = 1.1 * (np.max(np.abs(v0)) + drive) + 1e-12

    probes = [Point2(float(p[0]), float(p[1])) for p in config.probes]
    rows = grid.interpolation_rows(probes) if probes else np.zeros((0, m))
    n_steps = int(round(config.t_end / dt))
    times = dt * np.arange(n_steps + 1)
    series = np.zeros((len(probes), n_steps + 1))
    series[:, 0] = rows @ v0
    snapshots = []
    stride = config.snapshot_stride
    if stride > 0:
        snapshots.append((0.0, v0.reshape(grid.shape).copy()))

    def delayed_drive(n: int, offset: float) -> np.ndarray:
        start, (h00, h10, h01, h11) = lookups[offset]
        i0 = (n + start) % ring
        i1 = (n + start + 1) % ring
        vd = (h00 * Vbuf[i0, cols] + h10 * dt * Fbuf[i0, cols]
              + h01 * Vbuf[i1, cols] + h11 * dt * Fbuf[i1, cols])
        return np.sum(A * firing_rate(vd, params.gamma), axis=1)

    _log(f"{n_steps} steps, dt = {dt}, {m} grid points, history '{config.history.kind}'")
    v = v0
    for n in range(n_steps):
        slot = n % ring
        k1 = -params.alpha * v + delayed_drive(n, 0.0)
        # later stages may interpolate on [t_{n-1}, t_n] and need dV/dt at t_n
        Fbuf[slot] = k1
        drive_h = delayed_drive(n, 0.5)
        drive_1 = delayed_drive(n, 1.0)

        k2 = -params.alpha * (v + 0.5 * dt * k1) + drive_h
        k3 = -params.alpha * (v + 0.5 * dt * k2) + drive_h
        k4 = -params.alpha * (v + dt * k3) + drive_1
        v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

        peak = float(np.max(np.abs(v)))
        if not np.isfinite(peak) or peak > ceiling:
            t = times[n + 1]
            solver_log.log("blowup", time=t, value=peak, ceiling=ceiling)
            raise BlowUp(f"|V| = {peak:.3e} exceeds {ceiling:.3e} at t = {t:.4g}", time=t, value=peak)

        Vbuf[(n + 1) % ring] = v
        series[:, n + 1] = rows @ v
        if stride > 0 and (n + 1) % stride == 0:
            snapshots.append((float(times[n + 1]), v.reshape(grid.shape).copy()))

    # Derivative at the final node so the ring is complete for interpolation
    Fbuf[n_steps % ring] = -params.alpha * v + delayed_drive(n_steps, 0.0)

    metadata = {
        "history": config.history.describe(),
        "n_grid": config.n_grid,
        "dt": dt,
        "t_end": float(times[-1]),
        "integrator": "rk4 + cubic hermite history",
        "ceiling": float(ceiling),
        "model": params.to_dict(),
    }
    _log(f"done, final max|V| = {np.max(np.abs(v)):.3e}")
    return Trajectory(
        times=times,
        probe_series=series,
        probes=probes,
        snapshots=snapshots,
        history_buffer={"V": Vbuf, "F": Fbuf, "newest_slot": np.array(n_steps % ring)},
        metadata=metadata,
    )


# =============================================================================
# Series analysis
# =============================================================================

def _window(times: np.ndarray, series: np.ndarray, window: Optional[Tuple[float, float]]):
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    if window is None:
        return times, series
    t0, t1 = window
    if t0 < times[0] - 1e-12 or t1 > times[-1] + 1e-12 or t0 >= t1:
        raise ValueError(f"window {window} not inside [{times[0]}, {times[-1]}]")
    mask = (times >= t0) & (times <= t1)
    return times[mask], series[mask]


def dominant_period(times: Sequence[float], series: Sequence[float],
                    window: Optional[Tuple[float, float]] = None) -> PeriodEstimate:
    """Mean spacing of upward zero crossings of the mean-removed series."""
    t, s = _window(times, series, window)
    s = s - np.mean(s)
    up = np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]
    if up.size < 3:
        raise NoOscillation(f"only {up.size} upward zero crossing(s) in the window")
    # linear interpolation of each crossing time
    tc = t[up] - s[up] * (t[up + 1] - t[up]) / (s[up + 1] - s[up])
    gaps = np.diff(tc)
    err = float(np.std(gaps) / math.sqrt(gaps.size)) if gaps.size > 1 else 0.0
    return PeriodEstimate(period=float(np.mean(gaps)), error=err, crossings=int(up.size))


def envelope_rate(times: Sequence[float], series: Sequence[float],
                  window: Optional[Tuple[float, float]] = None) -> float:
    """Exponential rate of the peak envelope from a log-linear fit."""
    t, s = _window(times, series, window)
    peaks, _ = find_peaks(s)
    peaks = peaks[s[peaks] > 0]
    if peaks.size < 2:
        raise NoOscillation(f"only {peaks.size} positive peak(s) in the window")
    slope, _ = np.polyfit(t[peaks], np.log(s[peaks]), 1)
    return float(slope)
