"""Command-line entry point: ``shadowflow <command> --config <path> [--out <dir>]``.

Commands: simulate, oracle, sweep, spectrum, fig1.  Exit status is 0 on
success, 1 on configuration errors and 2 on numerical failure (partial
outputs plus an ``error.json`` report are still written).
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from ._accel import NUMBA_ENABLED
from .config import parse_config, resolve, with_section
from .dynamics import (ExtendedState, IntegratorConfig, integrate_extended, write_trajectory_csv)
from .errors import NumericalError, ParseError, ShadowflowError, ValidationError
from .geometry import MetricField, SymplecticStructure
from .guiding_center import run_sweep
from .oscillator import (Regime, bound_period, exact_r_squared, fig1_initial_state,
                         integrals_of_motion, oscillator_initial_state, phase_from_state)
from .quantum import (GridSpec, band_compare, is_constant_field, landau_degeneracy,
                      magnetic_spectrum)

COMMANDS = ("simulate", "oracle", "sweep", "spectrum", "fig1")
CONVENTION = ("omega = [[0,-I],[I,0]] in xi = (q, p); omega_ik omegabar^jk = delta_i^j; "
              "{xi^i, xi^j} = omegabar^ji")


class RunFailed(Exception):
    """Numerical failure after partial outputs were written."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


def version_and_provenance(config=None):
    """Header lines stamped into every output file."""
    lines = [
        f"shadowflow {__version__}",
        f"config_hash {config.config_hash if config is not None else 'none'}",
        f"convention {CONVENTION}",
        f"backend {'numba' if NUMBA_ENABLED else 'python'}",
    ]
    return "\n".join(lines)


def _provenance_dict(config):
    return {
        "version": __version__,
        "config_hash": config.config_hash,
        "convention": CONVENTION,
        "backend": "numba" if NUMBA_ENABLED else "python",
    }


def _fmt(x):
    return format(float(x), ".17g")


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _json_clean(obj.tolist())
    return obj


def _write_json(path, config, payload):
    doc = {"provenance": _provenance_dict(config), "config": config.to_dict()}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(_json_clean(doc), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_csv(path, config, columns, rows):
    with open(path, "w") as fh:
        for line in version_and_provenance(config).splitlines():
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _header_lines(config):
    return version_and_provenance(config).splitlines()


# command implementations -------------------------------------------------------

def _integrator_config(config, mu=None, horizon=None):
    d = config.section("dynamics")
    if d is None:
        raise ValidationError("dynamics", "missing required section")
    mu = d["mu"] if mu is None else mu
    if mu is None:
        raise ValidationError("dynamics.mu", "missing required key")
    return IntegratorConfig(
        mu=mu, horizon=d["horizon"] if horizon is None else horizon, rel_tol=d["rel_tol"],
        abs_tol=d["abs_tol"], max_step=d["max_step"] if d["max_step"] is not None else math.inf,
        sample_interval=d["sample_interval"], max_steps=d["max_steps"])


def _metric(config):
    sys_cfg = config.section("system")
    return MetricField(config.scalar_field(), gamma=sys_cfg.get("gamma"), h_min=sys_cfg["h_min"])


def _initial_state(config, mu):
    ini = config.section("initial")
    if "v" in ini:
        return ExtendedState(np.array(ini["x"]), np.array(ini["v"]))
    return oscillator_initial_state(mu, ini["E"], ini["l"], ini["x"], ini["radial_sign"])


def cmd_simulate(config, out_dir):
    config = with_section(config, "initial")
    m = _metric(config)
    s = SymplecticStructure(m.n)
    cfg = _integrator_config(config)
    init = _initial_state(config, cfg.mu)
    traj = integrate_extended(m, s, cfg, init)
    write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), traj, _header_lines(config))
    e = traj.guiding.E_ext
    summary = {
        "command": "simulate",
        "termination": traj.termination,
        "t_final": traj.t[-1],
        "samples": traj.n_samples,
        "stats": traj.stats,
        "energy_relative_drift": float(np.max(np.abs(e / e[0] - 1.0))),
    }
    _write_json(os.path.join(out_dir, "simulate.json"), config, summary)
    if not traj.completed:
        raise RunFailed(f"integration stopped early: {traj.termination}", summary)
    return summary


def _require_oscillator(config):
    sys_cfg = config.section("system")
    if sys_cfg["kind"] != "harmonic" or sys_cfg["n"] != 1 or "gamma" in sys_cfg:
        raise ValidationError("system.kind", "the oracle needs kind = 'harmonic' with n = 1 and gamma = I")


def cmd_oracle(config, out_dir):
    _require_oscillator(config)
    config = with_section(with_section(config, "initial"), "oracle")
    m = _metric(config)
    s = SymplecticStructure(1)
    base = _integrator_config(config)
    init = _initial_state(config, base.mu)
    params = phase_from_state(base.mu, init)
    horizon = base.horizon
    if params.regime is Regime.BOUND:
        horizon = config.section("oracle")["periods"] * bound_period(params)
    cfg = _integrator_config(config, horizon=horizon)
    traj = integrate_extended(m, s, cfg, init)
    r2 = np.sum(traj.x ** 2, axis=1)
    r2_exact = np.asarray(exact_r_squared(params, traj.t))
    rel = np.abs(r2 / r2_exact - 1.0)
    l0, e0 = integrals_of_motion(base.mu, init)
    drift_l = drift_e = 0.0
    for i in range(traj.n_samples):
        li, ei = integrals_of_motion(base.mu, traj.state(i))
        drift_l = max(drift_l, abs(li / l0 - 1.0))
        drift_e = max(drift_e, abs(ei / e0 - 1.0))
    _write_csv(os.path.join(out_dir, "oracle.csv"), config, ["t", "q", "p", "r2", "r2_exact", "rel_err"],
               zip(traj.t, traj.x[:, 0], traj.x[:, 1], r2, r2_exact, rel))
    summary = {
        "command": "oracle",
        "params": {"mu": params.mu, "E": params.E, "l": params.l, "t0": params.t0, "sign": params.sign,
                   "p_param": params.p_param},
        "regime": params.regime.value,
        "horizon": horizon,
        "termination": traj.termination,
        "max_relative_error": float(rel.max()),
        "l_relative_drift": drift_l,
        "E_relative_drift": drift_e,
    }
    _write_json(os.path.join(out_dir, "oracle.json"), config, summary)
    if not traj.completed:
        raise RunFailed(f"integration stopped early: {traj.termination}", summary)
    return summary


def cmd_sweep(config, out_dir):
    config = with_section(config, "sweep")
    sw = config.section("sweep")
    h = config.scalar_field()

    def initial(mu):
        return oscillator_initial_state(mu, sw["E"], sw["l"], sw["x0"])

    try:
        report = run_sweep(h, sw["mu"], initial, sw["horizon"], sw["rel_tol"], sw["abs_tol"])
    except NumericalError as exc:
        raise RunFailed(f"sweep point failed: {exc}") from exc
    payload = {"command": "sweep"}
    payload.update(report.to_json_dict())
    _write_json(os.path.join(out_dir, "sweep.json"), config, payload)
    return payload


def cmd_spectrum(config, out_dir):
    config = with_section(config, "spectrum")
    sp = config.section("spectrum")
    B = config.scalar_field()
    grid = GridSpec(L=sp["L"], N=sp["N"], hbar=sp["hbar"])
    sigma = None if (is_constant_field(B) and sp["sigma"] == 0.0) else sp["sigma"]
    report = magnetic_spectrum(B, grid, sp["k"], gauge=sp["gauge"], sigma=sigma, wall_check=sp["wall_check"])
    payload = {"command": "spectrum", "requested_k": sp["k"]}
    if is_constant_field(B):
        b = float(B.coefficients.sum())
        band_compare(report, B, sp["hbar"])
        payload["landau"] = {
            "b": b,
            "expected_degeneracy": landau_degeneracy(b, grid),
            "lowest_band_count": int(np.sum(report.eigenvalues < 1.5 * b * 0.99)),
        }
    else:
        try:
            band_compare(report, B, sp["hbar"], levels=sp["levels"])
        except ValueError as exc:
            payload["band_compare"] = f"not available: {exc}"
    payload.update(report.to_json_dict())
    _write_json(os.path.join(out_dir, "spectrum.json"), config, payload)
    return payload


def _p_label(p):
    return format(p, "g").replace(".", "p")


def cmd_fig1(config, out_dir):
    config = with_section(config, "fig1")
    f1 = config.section("fig1")
    h_field = config.scalar_field()
    if config.section("system")["kind"] != "harmonic" or h_field.n != 1:
        raise ValidationError("system.kind", "fig1 needs kind = 'harmonic' with n = 1")
    m = MetricField(h_field, h_min=config.section("system")["h_min"])
    s = SymplecticStructure(1)
    index = []
    for p in f1["p_values"]:
        mu, init = fig1_initial_state(p, f1["E"], f1["l"], f1["x0"])
        params = phase_from_state(mu, init)
        if params.regime is Regime.BOUND:
            horizon = f1["periods"] * bound_period(params)
        elif params.regime is Regime.UNBOUND_POWER_LAW:
            horizon = f1["powerlaw_horizon"]
        else:
            horizon = f1["collapse_horizon"]
        # at least ``samples`` points per run, and never coarser than the default
        dt = min(0.05, math.pi * mu / (2.0 * m.h.value(init.x)), horizon / f1["samples"])
        cfg = IntegratorConfig(mu=mu, horizon=horizon, rel_tol=f1["rel_tol"], abs_tol=f1["abs_tol"],
                               sample_interval=dt)
        traj = integrate_extended(m, s, cfg, init)
        r2 = np.sum(traj.x ** 2, axis=1)
        r2_exact = np.asarray(exact_r_squared(params, traj.t))
        name = f"fig1_p{_p_label(p)}.csv"
        _write_csv(os.path.join(out_dir, name), config, ["t", "q", "p", "r", "r2_exact"],
                   zip(traj.t, traj.x[:, 0], traj.x[:, 1], np.sqrt(r2), r2_exact))
        index.append({
            "p_param": p, "mu": mu, "regime": params.regime.value, "t0": params.t0,
            "termination": traj.termination, "t_final": traj.t[-1], "samples": traj.n_samples,
            "file": name, "max_relative_error": float(np.max(np.abs(r2 / r2_exact - 1.0))),
        })
    payload = {"command": "fig1", "runs": index}
    _write_json(os.path.join(out_dir, "fig1_index.json"), config, payload)
    return payload


HANDLERS = {"simulate": cmd_simulate, "oracle": cmd_oracle, "sweep": cmd_sweep,
            "spectrum": cmd_spectrum, "fig1": cmd_fig1}


def load_config(path):
    """TOML file, or a JSON output file whose embedded ``config`` is re-resolved."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, exc.msg) from exc
        return resolve(doc.get("config", doc))
    return parse_config(text)


def run(config, command, out_dir=None):
    """Execute ``command``; returns (exit status, summary dict)."""
    if command not in HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    if out_dir is not None:
        data = config.to_dict()
        data["output"]["dir"] = out_dir
        config = resolve(data)
    out_dir = config.section("output")["dir"]
    os.makedirs(out_dir, exist_ok=True)
    try:
        return 0, HANDLERS[command](config, out_dir)
    except RunFailed as exc:
        err = {"command": command, "error": str(exc), "kind": "numerical", "details": exc.details}
    except NumericalError as exc:
        err = {"command": command, "error": str(exc), "kind": type(exc).__name__}
    _write_json(os.path.join(out_dir, "error.json"), config, err)
    return 2, err


def main(argv=None):
    parser = argparse.ArgumentParser(prog="shadowflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"shadowflow {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="TOML config, or a JSON output to re-run")
    parser.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        status, summary = run(config, args.command, args.out)
    except (ParseError, ValidationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ShadowflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if status != 0:
        print(f"numerical failure: {summary.get('error')}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
