"""Scenario runner: ``photonbath <scenario> [--config PATH] [--out DIR] [--seed N] [--threads N]``.

Configs are JSON objects.  A physical input is either a bare number (natural
units, eV powers) or ``{"value": v, "unit": tag}``.  Bulk data go to CSV files
in the output directory; stdout carries one JSON summary that embeds the
resolved natural-unit parameters.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from typing import Any, Callable, Dict

import numpy as np

from . import __version__
from . import gauss_law, ir_kernel, kinetics, twoslit, wavepacket
from .parallel import threads
from .units import ALPHA, ELECTRON_MASS_EV, LabQuantity, PhysicalParams, from_natural, stage_coefficient, to_natural, unit_factor

SCENARIOS = ("wavepacket", "twoslit", "kinetics", "irkernel", "gausslaw", "units-check")
EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 2, 3, 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config helpers


def quantity(cfg: Dict[str, Any], key: str, default=None, required: bool = False) -> float:
    """Natural-unit value of ``cfg[key]`` (bare number or {"value", "unit"})."""
    if key not in cfg or cfg[key] is None:
        if required:
            raise ConfigError(f"missing required input {key!r}")
        return default
    v = cfg[key]
    if isinstance(v, dict):
        if "value" not in v or "unit" not in v:
            raise ConfigError(f"{key!r}: tagged quantities need 'value' and 'unit'")
        return to_natural(LabQuantity(float(v["value"]), str(v["unit"])))
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key!r} must be a number or a tagged quantity")
    if not math.isfinite(v):
        raise ConfigError(f"{key!r} must be finite")
    return float(v)


def vector(cfg, key, default):
    v = cfg.get(key, default)
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{key!r} must be a finite 3-vector")
    return arr


def positive(name, v):
    if not (v is not None and v > 0 and math.isfinite(v)):
        raise ConfigError(f"{name} must be positive and finite")
    return v


def integer(cfg, key, default, minimum=1):
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{key!r} must be an integer >= {minimum}")
    return v


def params_from(cfg, defaults) -> PhysicalParams:
    sec = dict(defaults)
    sec.update(cfg.get("params", {}) or {})
    return PhysicalParams(
        m=quantity(sec, "m", required=True), T=quantity(sec, "T", required=True),
        alpha=quantity(sec, "alpha", required=True), Lambda=quantity(sec, "Lambda", required=True),
    )


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{float(v):.17g}" for v in row])


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


# ---------------------------------------------------------------------------
# scenarios


def run_wavepacket(cfg, out, seed):
    params = params_from(cfg, {"m": 1.0, "T": 0.1, "alpha": 0.5, "Lambda": 0.5})
    l = positive("l", quantity(cfg, "l", 1e4))
    law = wavepacket.SpreadLaw.from_params(l, params)
    t_max = positive("t_max", quantity(cfg, "t_max", 0.5 * params.m * l * l))
    n_t = integer(cfg, "n_t", 11, minimum=2)
    n_x = integer(cfg, "n_x", 41, minimum=2)
    times = np.linspace(0.0, t_max, n_t)
    widths = [wavepacket.spread_width(law, t) for t in times]
    write_csv(os.path.join(out, "widths.csv"), ["t", "l_t"], zip(times, widths))
    lt = widths[-1]
    xs = np.linspace(-3 * lt, 3 * lt, n_x)
    pts = np.stack([xs, np.zeros_like(xs), np.zeros_like(xs)], axis=1)
    dens = wavepacket.gaussian_density(law, pts, t_max)
    write_csv(os.path.join(out, "density.csv"), ["x1", "x2", "x3", "t", "J0"],
              ([*p, t_max, j] for p, j in zip(pts, dens)))
    l_opt, lt_min = wavepacket.optimal_initial_width(params.m, t_max, law.Theta)
    return {
        "Theta": law.Theta, "l": l, "t_max": t_max, "l_t_final": lt,
        "optimal_initial_width": l_opt, "minimal_width_at_t_max": lt_min,
        "focused_width_at_t_max": math.sqrt(wavepacket.focused_width2(l, law.Theta, t_max)),
        "irreducible_width": math.sqrt(4 * law.Theta * t_max),
    }, params


def run_twoslit(cfg, out, seed):
    m = quantity(cfg.get("params", {}) or {}, "m", ELECTRON_MASS_EV)
    alpha = quantity(cfg.get("params", {}) or {}, "alpha", ALPHA)
    T = quantity(cfg, "T", 0.0)
    if T < 0:
        raise ConfigError("T must be non-negative")
    d = positive("d", quantity(cfg, "d", required=True))
    L = positive("L", quantity(cfg, "L", required=True))
    if "k" in cfg:
        k = positive("k", quantity(cfg, "k"))
        eps = k * k / (2 * m)
    else:
        eps = positive("eps", quantity(cfg, "eps", required=True))
        k = math.sqrt(2 * m * eps)
    Lam = quantity(cfg.get("params", {}) or {}, "Lambda", math.sqrt(T * m) if T > 0 else 1e-3 * m)
    params = PhysicalParams(m=m, T=T, alpha=alpha, Lambda=Lam)
    geom = twoslit.TwoSlitGeometry(d, L, k)
    V = twoslit.visibility(geom, params)
    n_x = integer(cfg, "n_x", 1024, minimum=2)
    xs = np.arange(2 * n_x) * (2 * math.pi / geom.kappa / n_x) - 2 * math.pi / geom.kappa
    xs = xs[np.abs(xs) <= twoslit.PARAXIAL_FRACTION * L]
    write_csv(os.path.join(out, "pattern.csv"), ["x", "intensity"], zip(xs, twoslit.pattern(geom, params, xs)))
    r_cm = from_natural(1.0 / geom.kappa, "cm").value
    T_K = T / unit_factor("kelvin")
    L_cm = from_natural(L, "cm").value
    X = T_K * L_cm / (math.sqrt(eps) * r_cm ** 2)
    return {
        "visibility": V, "exponent": twoslit.visibility_exponent(geom, params), "X": X,
        "kappa": geom.kappa, "flight_time": geom.flight_time(m), "k": k, "eps": eps,
        "fringe_spacing_cm": r_cm,
    }, params


def run_kinetics(cfg, out, seed):
    params = params_from(cfg, {"m": 1.0, "T": 0.02, "alpha": ALPHA, "Lambda": 0.5})
    if params.T <= 0:
        raise ConfigError("kinetics needs T > 0")
    grid_cfg = cfg.get("grid", {}) or {}
    q_max = positive("grid.q_max", quantity(grid_cfg, "q_max", 75 * params.T))
    n = integer(grid_cfg, "n", 120, minimum=4)
    g, w = kinetics.radial_grid(q_max, n)
    init = cfg.get("initial", {"boltzmann": {"T_e": 2 * params.T}})
    if not isinstance(init, dict) or len(init) != 1:
        raise ConfigError("initial must be {'boltzmann': {...}} or {'shell': {...}}")
    kind, spec = next(iter(init.items()))
    if kind == "boltzmann":
        T_e = positive("T_e", quantity(spec, "T_e", required=True))
        rho = kinetics.MomentumDistribution.boltzmann(g, T_e, params.m, w)
    elif kind == "shell":
        rho = kinetics.MomentumDistribution.shell(g, quantity(spec, "q0", required=True),
                                                  quantity(spec, "width", required=True), w)
    else:
        raise ConfigError(f"unknown initial distribution {kind!r}")
    scale = params.alpha ** 2 * params.T ** 3 / params.m ** 2
    t_end = positive("t_end", quantity(cfg, "t_end", 10.0 / scale))
    fraction = float(cfg.get("dt_fraction", 1.0))
    if not 0 < fraction <= 1:
        raise ConfigError("dt_fraction must lie in (0, 1]")
    op = kinetics.collision_operator(g, w, params)
    dt = fraction * 0.01 / op.max_rate()
    record_every = integer(cfg, "record_every", max(1, int(t_end / dt) // 100))
    rel = kinetics.relax(rho, params, t_end, dt=dt, record_every=record_every)
    write_csv(os.path.join(out, "history.csv"), ["t", "mean_energy", "residual"],
              zip(rel.times, rel.mean_energy, rel.residual))
    write_csv(os.path.join(out, "distribution.csv"), ["t", "q", "rho"],
              [(rho.t, q, v) for q, v in zip(g, rho.values)] + [(rel.final.t, q, v) for q, v in zip(g, rel.final.values)])
    eq = kinetics.MomentumDistribution.boltzmann(g, params.T, params.m, w)
    e_eq = eq.mean_energy(params.m)
    summary = {
        "dt": dt, "steps": int(math.ceil(t_end / dt)), "trace_drift": rel.final.trace() - rho.trace(),
        "initial_residual": rel.residual[0], "final_residual": rel.residual[-1],
        "equilibrium_residual": kinetics.equilibrium_residual(eq, params),
        "initial_mean_energy": rel.mean_energy[0], "final_mean_energy": rel.mean_energy[-1],
        "equilibrium_mean_energy": e_eq,
        "mean_energy_monotone": bool(np.all(np.diff(rel.mean_energy) <= 1e-15 * e_eq)) if rel.mean_energy[0] > e_eq else None,
        "rate_scale_alpha2_T3_over_m2": scale,
    }
    if rel.mean_energy[0] > e_eq:
        try:
            rate = kinetics.relaxation_rate(rel.times, rel.mean_energy, e_eq, (0.3, 1.0))
            summary.update(relaxation_rate=rate, rate_ratio=rate / scale)
        except ValueError:
            summary.update(relaxation_rate=None, rate_ratio=None)
    n_mc = integer(cfg, "mc_samples", 0, minimum=0)
    if n_mc:
        grid_rate = float(op.measure @ (op.rhs(rho.values) * np.sqrt(params.m ** 2 + g * g)))
        mc, err = kinetics.mc_mean_energy_rate(rho, params, n_mc, seed)
        summary.update(energy_rate_grid=grid_rate, energy_rate_mc=mc, energy_rate_mc_error=err)
    return summary, params


def run_irkernel(cfg, out, seed):
    params = params_from(cfg, {"m": 1.0, "T": 1e-4, "alpha": ALPHA, "Lambda": 0.1})
    q = vector(cfg, "q", [0.0, 0.0, 0.0])
    p = vector(cfg, "p", [0.0, 0.0, 1e-3 * params.m])
    branch = cfg.get("branch", "full")
    if branch not in ("full", "vacuum", "thermal"):
        raise ConfigError("branch must be full, vacuum or thermal")
    tol = positive("tol", float(cfg.get("tol", 1e-6)))
    if "times" in cfg:
        times = np.asarray(cfg["times"], dtype=float)
    else:
        if params.T <= 0:
            raise ConfigError("give explicit times for T = 0")
        lo, hi = cfg.get("Tt_range", [10.0, 100.0])
        times = np.linspace(lo, hi, integer(cfg, "n_t", 12, minimum=3)) / params.T
    if np.any(times <= 0):
        raise ConfigError("times must be positive")
    inp = ir_kernel.KernelInput(q, p, float(times[0]), params)
    results = ir_kernel.exponent_series(inp, times, tol=tol, branch=branch)
    write_csv(os.path.join(out, "series.csv"), ["t", "Re_g", "Im_g", "error"],
              ((t, r.g.real, r.g.imag, r.error) for t, r in zip(times, results)))
    fit = ir_kernel.asymptotic_fit(times, [r.g.real for r in results])
    summary = {"fit": {"linear_coeff": fit.linear_coeff, "log_coeff": fit.log_coeff, "const": fit.const,
                       "residual": fit.residual},
               "max_error": max(r.error for r in results), "branch": branch}
    if branch != "vacuum" and params.T > 0:
        target = ir_kernel.thermal_slope_target(p, params)
        summary.update(thermal_slope_target=target, slope_ratio=fit.linear_coeff / target)
    return summary, params


def run_gausslaw(cfg, out, seed):
    sigma = positive("sigma", quantity(cfg, "sigma", 0.02))
    charge = quantity(cfg, "charge", 1.0)
    src = gauss_law.SourceProfile("gaussian", sigma, charge)
    radii = [positive("radius", float(r)) for r in cfg.get("radii", [1.0])]
    times = [positive("time", float(t)) for t in cfg.get("times", list(np.linspace(0.1, 2.0, 20)))]
    noncov = bool(cfg.get("include_noncov", False))
    rows = gauss_law.field_table(src, radii, times, include_noncov=noncov)
    write_csv(os.path.join(out, "field.csv"), ["r", "t", "A0", "residual"], rows)
    worst = max(abs(a0 - gauss_law.scalar_potential_closed(r, t, sigma, charge)) * 4 * math.pi * r / abs(charge)
                for r, t, a0, _ in rows)
    fit_t = np.linspace(2 * sigma, 5 * sigma, 8)
    slope = gauss_law.decay_exponent(sigma, fit_t, charge) if not noncov else None
    return {"include_noncov": noncov, "max_A0_deviation_from_closed_form_relative_to_coulomb": worst,
            "decay_exponent": slope, "decay_exponent_target": -1 / (2 * sigma ** 2),
            "sigma": sigma, "charge": charge}, {"sigma": sigma, "charge": charge}


def run_units(cfg, out, seed):
    write_csv(os.path.join(out, "units.csv"), ["kelvin_eV", "cm_inv_eV", "meter_inv_eV", "second_inv_eV"],
              [(unit_factor("kelvin"), unit_factor("cm"), unit_factor("meter"), unit_factor("second"))])
    c = stage_coefficient()
    return {"kelvin_eV": unit_factor("kelvin"), "cm_inv_eV": unit_factor("cm"),
            "stage_coefficient": c, "relative_to_4_36": c / 4.36 - 1}, {"kelvin_eV": unit_factor("kelvin"), "cm_inv_eV": unit_factor("cm")}


RUNNERS: Dict[str, Callable] = {
    "wavepacket": run_wavepacket, "twoslit": run_twoslit, "kinetics": run_kinetics,
    "irkernel": run_irkernel, "gausslaw": run_gausslaw, "units-check": run_units,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="photonbath", description="Electron in a thermal photon bath: scenario runner.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", default=".", help="output directory for CSV files")
        sp.add_argument("--seed", type=int, help="64-bit seed (overrides config)")
        sp.add_argument("--threads", type=int, help="worker threads (overrides config)")
    return ap


def _fail(code, kind, exc):
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def run(scenario: str, cfg: Dict[str, Any], out: str, seed: int, n_threads: int) -> dict:
    """Execute one scenario and return the summary dictionary."""
    if cfg.get("scenario", scenario) != scenario:
        raise ConfigError(f"config is for scenario {cfg.get('scenario')!r}, not {scenario!r}")
    if not (0 <= seed < 2 ** 64):
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if n_threads < 1:
        raise ConfigError("threads must be positive")
    with threads(n_threads):
        summary, params = RUNNERS[scenario](cfg, out, seed)
    return {
        "scenario": scenario, "seed": seed,
        "params": params.as_dict() if isinstance(params, PhysicalParams) else params,
        "results": summary,
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = {}
        if args.config:
            with open(args.config) as fh:
                cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        n_threads = args.threads if args.threads is not None else cfg.get("threads", 1)
        if isinstance(seed, bool) or not isinstance(seed, int) or isinstance(n_threads, bool) or not isinstance(n_threads, int):
            raise ConfigError("seed and threads must be integers")
        os.makedirs(args.out, exist_ok=True)
    except json.JSONDecodeError as exc:
        return _fail(EXIT_VALIDATION, "validation", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    except (ConfigError, ValueError, TypeError) as exc:
        return _fail(EXIT_VALIDATION, "validation", exc)
    try:
        summary = run(args.scenario, cfg, args.out, seed, n_threads)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    except (ArithmeticError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, "numeric", exc)
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        return _fail(EXIT_VALIDATION, "validation", exc)
    sys.stdout.write(json.dumps(_clean(summary), sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
