"""
nf-spectrum: command-line driver for the delayed neural field solvers.

Usage:
    nf-spectrum [--config FILE] [--output-dir DIR] [--threads N] [--quiet] <command> [options]

Commands:
    slp-roots         roots of the Robin SLP as CSV
    spectrum          eigenvalues in a window of the complex plane
    classify          Essential / Resonant / Eigenvalue / Resolvent at a point
    resolvent-check   round-trip error of the resolvent on random basis products
    hopf              locate the Hopf bifurcation in c_hat
    lyapunov          g21 and l1 at the Hopf point, g21 field on y = 0
    simulate          integrate the nonlinear field from a perturbed history
    square-n2         rank-one eigenvector search for two terms on a square
    reproduce-paper   full pipeline with golden-value checks

Results go to stdout as JSON (CSV for slp-roots); files go to the output
directory. Exit status: 0 success, 1 numerical failure, 2 configuration error.
"""

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .charfun import apply_delta, square_n2_search
from .config import DATA_DIR, RunConfig, as_complex, load_run_config, thread_count
from .errors import ConfigError, NeuralFieldError, NonConvergence
from .hopf import HopfResult, g21_compute, g21_field_line, hopf_find
from .model import ModelParams, Point2
from .numerics import QuadGrid
from .simulate import HistorySpec, SimConfig, Trajectory, dominant_period, simulate
from .slp import basis_build, slp_root_box, slp_roots
from .solver_log import make_tagged_printer, solver_log
from .spectrum import classify, resolve, spectrum_scan

_log = make_tagged_printer("CLI")

# Golden values of the bundled reference model: (target, absolute tolerance)
GOLDEN = {
    "c_hat_critical": (-3.27, 0.02),
    "omega": (1.34, 0.01),
    "l1": (-1.572, 0.05 * 1.572),
}


# =============================================================================
# Helpers
# =============================================================================

def parse_complex(text: str) -> complex:
    """'re,im' or a plain real number."""
    parts = [p.strip() for p in str(text).split(",")]
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise ConfigError(f"cannot parse complex value {text!r}; expected 're,im'")


def parse_floats(text: str, count: int) -> List[float]:
    try:
        values = [float(p) for p in str(text).split(",")]
    except ValueError:
        values = []
    if len(values) != count:
        raise ConfigError(f"expected {count} comma-separated numbers, got {text!r}")
    return values


def _emit(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2))


def _output_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_series_csv(path: Path, traj: Trajectory) -> None:
    cols = [traj.times] + [traj.probe_series[i] for i in range(len(traj.probes))]
    header = "t," + ",".join(f"V({p.x:g};{p.y:g})" for p in traj.probes)
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="")


def _write_snapshots(out: Path, prefix: str, traj: Trajectory, grid: QuadGrid) -> List[str]:
    names = []
    for t, snap in traj.snapshots:
        name = f"{prefix}_t{t:08.3f}.dat"
        header = (f"t = {t:g}; rows: x = {' '.join(f'{x:.6g}' for x in grid.nodes_x)}; "
                  f"cols: y = {' '.join(f'{y:.6g}' for y in grid.nodes_y)}")
        np.savetxt(out / name, snap, header=header)
        names.append(name)
    return names


def _hopf(cfg: RunConfig, params: ModelParams, range_override: Optional[str] = None) -> HopfResult:
    h = cfg.hopf
    c_range = parse_floats(range_override, 2) if range_override else list(h.c_hat_range)
    return hopf_find(
        params, tuple(c_range), (h.parity_x, h.parity_y), h.seed.as_tuple(), steps=h.steps, tol=h.tol,
        grid=QuadGrid.build(params.a, params.b, cfg.quadrature.n_apply),
    )


def _sim_config(cfg: RunConfig, history: HistorySpec, args=None) -> SimConfig:
    s = cfg.simulate

    def pick(name, default):
        value = getattr(args, name, None)
        return default if value is None else value

    return SimConfig(
        n_grid=pick("n_grid", s.n_grid),
        dt=pick("dt", s.dt),
        t_end=pick("t_end", s.t_end),
        history=history,
        probes=[Point2(*p) for p in s.probes],
        snapshot_stride=pick("snapshot_stride", s.snapshot_stride),
        max_abs=s.max_abs,
    )


def _history(kind: str, amplitude: float, hopf: Optional[HopfResult]) -> HistorySpec:
    if kind == "constant":
        return HistorySpec(kind="constant", value=amplitude)
    return HistorySpec(kind="eigenmode", amplitude=amplitude, eigenpair=hopf.eigenpair)


# =============================================================================
# Commands
# =============================================================================

def cmd_slp_roots(args, cfg: RunConfig) -> int:
    """Print SLP roots as CSV: index, re_rho, im_rho, parity, residual."""
    params = cfg.params()
    k = parse_complex(args.k)
    halfwidth = args.halfwidth if args.halfwidth is not None else params.a
    if args.box:
        re_max, im_max = parse_floats(args.box, 2)
        roots = slp_root_box(k, halfwidth, re_max, im_max)
    else:
        roots = slp_roots(k, halfwidth, args.count)
    print("index,re_rho,im_rho,parity,residual")
    for r in roots:
        print(f"{r.index},{r.rho.real:.15g},{r.rho.imag:.15g},{r.parity},{r.residual:.3e}")
    return 0


def cmd_spectrum(args, cfg: RunConfig) -> int:
    params = cfg.params()
    sec = cfg.spectrum
    window = parse_floats(args.window, 4) if args.window else list(sec.window)
    report = spectrum_scan(
        params, tuple(window), tuple(sec.n_seeds), tuple(sec.mode_range),
        grid=QuadGrid.build(params.a, params.b, cfg.quadrature.n_apply),
        threads=thread_count(args.threads),
    )
    _emit(report.to_dict())
    return 0


def cmd_classify(args, cfg: RunConfig) -> int:
    params = cfg.params()
    z = parse_complex(args.z)
    grid = QuadGrid.build(params.a, params.b, cfg.quadrature.n_apply)
    _emit(classify(z, params, args.n_x, args.n_y, grid).to_dict())
    return 0


def cmd_resolvent_check(args, cfg: RunConfig) -> int:
    """|Delta(z) resolve(z, g) - g| / |g| for g a random combination of raw basis products."""
    params = cfg.params()
    z = parse_complex(args.z)
    grid = QuadGrid.build(params.a, params.b, args.n_grid or cfg.quadrature.n_check)
    basis = basis_build(z, params, args.n_x, args.n_y, grid)
    rng = np.random.default_rng(args.seed)
    picks = rng.choice(len(basis.raw_fields), size=min(args.terms, len(basis.raw_fields)), replace=False)
    weights = rng.normal(size=picks.size) + 1j * rng.normal(size=picks.size)
    g = sum(w * basis.raw_fields[i] for w, i in zip(weights, picks))
    q = resolve(z, g, params, grid=grid, basis=basis)
    error = grid.norm(apply_delta(z, q, params, grid) - g) / grid.norm(g)
    _emit({
        "z": [z.real, z.imag],
        "n_x": args.n_x,
        "n_y": args.n_y,
        "n_grid": grid.shape[0],
        "products": [int(i) for i in picks],
        "error": error,
    })
    return 0


def cmd_hopf(args, cfg: RunConfig) -> int:
    params = cfg.params()
    _emit(_hopf(cfg, params, args.range).to_dict())
    return 0


def cmd_lyapunov(args, cfg: RunConfig) -> int:
    params = cfg.params()
    hopf = _hopf(cfg, params, args.range)
    lp = cfg.lyapunov
    crit = params.with_c_hat(hopf.c_hat_critical)
    result = g21_compute(
        hopf.eigenpair, crit,
        epsilon=args.epsilon or lp.epsilon, n_z=args.n_z or lp.n_z, n_x=lp.n_x, n_y=lp.n_y,
        grid=QuadGrid.build(crit.a, crit.b, cfg.quadrature.n_apply),
        threads=thread_count(args.threads),
    )
    out = _output_dir(args, cfg)
    xs, g_line = g21_field_line(result)
    np.savetxt(out / "g21_line.csv", np.column_stack([xs, g_line.real, g_line.imag]),
               delimiter=",", header="x,re_g21,im_g21", comments="")
    payload = result.to_dict()
    payload["hopf"] = hopf.to_dict()
    payload["files"] = [str(out / "g21_line.csv")]
    _emit(payload)
    return 0


def cmd_simulate(args, cfg: RunConfig) -> int:
    params = cfg.params()
    s = cfg.simulate
    c_hat = args.c_hat if args.c_hat is not None else s.c_hat_values[0]
    kind = args.history or s.history
    amplitude = args.amplitude if args.amplitude is not None else s.amplitude
    hopf = _hopf(cfg, params) if kind == "eigenmode" else None

    sim = _sim_config(cfg, _history(kind, amplitude, hopf), args)
    traj = simulate(params.with_c_hat(c_hat), sim)
    out = _output_dir(args, cfg)
    prefix = f"probe_chat_{c_hat:+.3f}"
    _write_series_csv(out / f"{prefix}.csv", traj)
    grid = QuadGrid.build(params.a, params.b, sim.n_grid)
    snaps = _write_snapshots(out, f"snap_chat_{c_hat:+.3f}", traj, grid)
    _emit({
        "c_hat": c_hat,
        "max_abs": traj.max_abs(),
        "final": [float(v) for v in traj.probe_series[:, -1]],
        "metadata": traj.metadata,
        "files": [f"{prefix}.csv"] + snaps,
    })
    return 0


def _load_square(cfg: RunConfig):
    if cfg.square is not None:
        return cfg.square
    return load_run_config(str(DATA_DIR / "square_n2.json")).square


def cmd_square_n2(args, cfg: RunConfig) -> int:
    sq = _load_square(cfg)
    params = sq.model.to_params()
    failures = []
    for seed in sq.seeds:
        try:
            result = square_n2_search(params, (as_complex(seed.nu), as_complex(seed.z)), sq.parity)
        except NeuralFieldError as e:
            failures.append(str(e))
            continue
        _emit({
            "z": [result.z.real, result.z.imag],
            "nu": [result.nu.real, result.nu.imag],
            "roots": [[r.real, r.imag] for r in result.root_class.roots],
            "parity": result.parity,
            "d_matrix": [[[v.real, v.imag] for v in row] for row in result.d_matrix],
            "residuals": result.residuals,
        })
        return 0
    raise NonConvergence(f"no seed converged ({len(failures)} tried): {'; '.join(failures)[:500]}")


def _check(name: str, value: float) -> Dict[str, Any]:
    target, tol = GOLDEN[name]
    return {"value": value, "target": target, "tolerance": tol, "pass": bool(abs(value - target) <= tol)}


GNUPLOT_SCRIPT = """\
set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 900,600
set output 'g21_line.png'
set xlabel 'x'
plot 'g21_line.csv' using 1:2 with lines title 'Re g21', '' using 1:3 with lines title 'Im g21'
{sim_plots}
"""


def cmd_reproduce_paper(args, cfg: RunConfig) -> int:
    """Hopf point, Lyapunov coefficient, spectrum and two simulations, checked against golden values."""
    params = cfg.params()
    out = _output_dir(args, cfg)
    threads = thread_count(args.threads)
    grid = QuadGrid.build(params.a, params.b, cfg.quadrature.n_apply)

    hopf = _hopf(cfg, params)
    crit = params.with_c_hat(hopf.c_hat_critical)
    lp = cfg.lyapunov
    lyap = g21_compute(hopf.eigenpair, crit, lp.epsilon, lp.n_z, lp.n_x, lp.n_y, grid, threads=threads)
    xs, g_line = g21_field_line(lyap)
    np.savetxt(out / "g21_line.csv", np.column_stack([xs, g_line.real, g_line.imag]),
               delimiter=",", header="x,re_g21,im_g21", comments="")

    sec = cfg.spectrum
    report = spectrum_scan(params, tuple(sec.window), tuple(sec.n_seeds), tuple(sec.mode_range),
                           grid=grid, threads=threads)
    (out / "spectrum.json").write_text(json.dumps(report.to_dict(), indent=2))

    simulations = []
    plots = []
    for c_hat in cfg.simulate.c_hat_values:
        sim = _sim_config(cfg, _history(cfg.simulate.history, cfg.simulate.amplitude, hopf))
        traj = simulate(params.with_c_hat(c_hat), sim)
        name = f"probe_chat_{c_hat:+.3f}.csv"
        _write_series_csv(out / name, traj)
        plots.append(f"set output 'probe_chat_{c_hat:+.3f}.png'\n"
                     f"plot '{name}' using 1:2 with lines title 'c_hat = {c_hat:g}'")
        series = traj.series(0)
        start = float(np.max(np.abs(series[: max(1, int(1.0 / sim.dt))])))
        entry = {"c_hat": c_hat, "file": name, "initial_abs": start, "final_abs": float(abs(series[-1]))}
        try:
            tail = (0.5 * traj.times[-1], float(traj.times[-1]))
            est = dominant_period(traj.times, series, tail)
            entry["period"] = {"value": est.period, "error": est.error,
                               "hopf_period": 2 * math.pi / hopf.omega}
        except NeuralFieldError:
            entry["period"] = None
        simulations.append(entry)
    (out / "figures.gp").write_text(GNUPLOT_SCRIPT.format(sim_plots="\n".join(plots)))

    checks = {
        "c_hat_critical": _check("c_hat_critical", hopf.c_hat_critical),
        "omega": _check("omega", hopf.omega),
        "l1": _check("l1", lyap.l1),
    }
    ok = all(c["pass"] for c in checks.values())
    summary = {
        "status": "ok" if ok else "mismatch",
        "checks": checks,
        "hopf": hopf.to_dict(),
        "lyapunov": lyap.to_dict(),
        "simulations": simulations,
        "config": cfg.dump(),
        "diagnostics": solver_log.get_diagnostics()["counts"],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    _emit({"status": summary["status"], "checks": checks, "output_dir": str(out)})
    return 0 if ok else 1


# =============================================================================
# Entry point
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nf-spectrum",
        description="Spectrum, Hopf bifurcation and simulation of a delayed neural field on a rectangle",
    )
    parser.add_argument("--config", "-c", help="Run configuration (JSON or YAML)")
    parser.add_argument("--output-dir", "-o", help="Directory for result files")
    parser.add_argument("--threads", type=int, help="Worker threads (default: NF_SPECTRUM_THREADS or min(8, cpus))")
    parser.add_argument("--quiet", "-q", action="store_true", help="No progress lines on stderr")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    # slp-roots
    slp_parser = subparsers.add_parser("slp-roots", help="Roots of the Robin SLP as CSV")
    slp_parser.add_argument("--k", required=True, help="Robin coefficient k as 're,im'")
    slp_parser.add_argument("--halfwidth", type=float, help="Interval half-width (default: model a)")
    slp_parser.add_argument("--count", type=int, default=6, help="Number of roots (default: 6)")
    slp_parser.add_argument("--box", help="All roots with Re mu <= re_max, |Im mu| <= im_max: 're_max,im_max'")
    slp_parser.set_defaults(func=cmd_slp_roots)

    # spectrum
    spec_parser = subparsers.add_parser("spectrum", help="Eigenvalues in a window")
    spec_parser.add_argument("--window", help="'re_lo,re_hi,im_lo,im_hi'")
    spec_parser.set_defaults(func=cmd_spectrum)

    # classify
    cls_parser = subparsers.add_parser("classify", help="Classify a point of the complex plane")
    cls_parser.add_argument("--z", required=True, help="Point as 're,im'")
    cls_parser.add_argument("--n-x", type=int, default=3)
    cls_parser.add_argument("--n-y", type=int, default=3)
    cls_parser.set_defaults(func=cmd_classify)

    # resolvent-check
    res_parser = subparsers.add_parser("resolvent-check", help="Round-trip error of the resolvent")
    res_parser.add_argument("--z", default="0.5", help="Point as 're,im' (default: 0.5)")
    res_parser.add_argument("--n-x", type=int, default=3)
    res_parser.add_argument("--n-y", type=int, default=3)
    res_parser.add_argument("--terms", type=int, default=4, help="Raw products in g (default: 4)")
    res_parser.add_argument("--seed", type=int, default=0, help="Random seed")
    res_parser.add_argument("--n-grid", type=int, help="Quadrature nodes per axis (default: quadrature.n_check)")
    res_parser.set_defaults(func=cmd_resolvent_check)

    # hopf
    hopf_parser = subparsers.add_parser("hopf", help="Locate the Hopf bifurcation in c_hat")
    hopf_parser.add_argument("--range", help="c_hat range 'lo,hi'")
    hopf_parser.set_defaults(func=cmd_hopf)

    # lyapunov
    lyap_parser = subparsers.add_parser("lyapunov", help="First Lyapunov coefficient at the Hopf point")
    lyap_parser.add_argument("--range", help="c_hat range 'lo,hi'")
    lyap_parser.add_argument("--epsilon", type=float, help="Contour radius")
    lyap_parser.add_argument("--n-z", type=int, help="Contour points")
    lyap_parser.set_defaults(func=cmd_lyapunov)

    # simulate
    sim_parser = subparsers.add_parser("simulate", help="Integrate the nonlinear field")
    sim_parser.add_argument("--c-hat", type=float, help="Kernel amplitude (default: first simulate.c_hat_values)")
    sim_parser.add_argument("--history", choices=("constant", "eigenmode"))
    sim_parser.add_argument("--amplitude", type=float)
    sim_parser.add_argument("--n-grid", type=int)
    sim_parser.add_argument("--dt", type=float)
    sim_parser.add_argument("--t-end", type=float)
    sim_parser.add_argument("--snapshot-stride", type=int)
    sim_parser.set_defaults(func=cmd_simulate)

    # square-n2
    sq_parser = subparsers.add_parser("square-n2", help="Two-term square-domain eigenvector search")
    sq_parser.set_defaults(func=cmd_square_n2)

    # reproduce-paper
    rep_parser = subparsers.add_parser("reproduce-paper", help="Full pipeline with golden-value checks")
    rep_parser.set_defaults(func=cmd_reproduce_paper)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2
    if args.quiet:
        os.environ["NF_SPECTRUM_LOG_LEVEL"] = "quiet"

    try:
        cfg = load_run_config(args.config)
        _log(f"config: {cfg.source}")
        return args.func(args, cfg)
    except ConfigError as e:
        _emit({"status": "error", "error": str(e)})
        return 2
    except NeuralFieldError as e:
        _emit({"status": "error", "error": str(e), "type": type(e).__name__})
        return 1
    except ValueError as e:
        # invalid arguments to a numerical primitive
        _emit({"status": "error", "error": str(e)})
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
