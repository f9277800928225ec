"""Fast/slow split of extended trajectories and adiabatic-limit diagnostics.

Pi = sqrt(mu) g xidot are the kinematical momenta, X = xi + sqrt(mu) omegabar Pi
the guiding center and J = |Pi|^2 / 2 the fast-motion action (gamma = I).
The extended energy factorizes as E_ext = h(xi) J, while the slow motion of X
follows the Hamiltonian flow of h with the clock running at rate J.  The
adiabatic action J_ad = E_ext / h(X) carries the same information without
the O(sqrt(mu)) gyration ripple of J.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import IntegratorConfig, integrate_extended, integrate_reference
from .errors import DegenerateFastMotion, EmptyOverlap, InsufficientData
from .geometry import MetricField, SymplecticStructure, as_point, metric_at

J_FLOOR = 1e-14


@dataclass(frozen=True)
class GuidingDecomposition:
    Pi: np.ndarray
    X: np.ndarray
    J: float
    J_ad: float
    E_ext: float


@dataclass(frozen=True)
class GuidingSamples:
    """Array version of GuidingDecomposition over a trajectory."""

    Pi: np.ndarray
    X: np.ndarray
    J: np.ndarray
    J_ad: np.ndarray
    E_ext: np.ndarray
    h_xi: np.ndarray
    h_X: np.ndarray


def decompose(m, s, mu, state):
    """Pi, X, J, J_ad and E_ext at one state."""
    x = as_point(state.x, m.n)
    v = np.asarray(state.v, dtype=np.float64)
    g, g_inv, _ = metric_at(m, x)
    rt = math.sqrt(mu)
    Pi = rt * (g @ v)
    X = x + rt * (s.omega_bar @ Pi)
    J = 0.5 * float(Pi @ Pi)
    E_ext = 0.5 * float(Pi @ g_inv @ Pi)
    hX = m.h.value(X)
    J_ad = E_ext / hX if hX > m.h_min else math.nan
    return GuidingDecomposition(Pi=Pi, X=X, J=J, J_ad=J_ad, E_ext=E_ext)


def decompose_samples(m, mu, x, v):
    """Vectorized decomposition over sample arrays of shape (N, 2n)."""
    n = m.n
    h_xi = np.atleast_1d(m.h.value(x))
    rt = math.sqrt(mu)
    # g v = gamma v / h
    Pi = rt * (v @ m.gamma.T) / h_xi[:, None]
    # omegabar Pi with omegabar = [[0, -I], [I, 0]]
    wPi = np.concatenate([-Pi[:, n:], Pi[:, :n]], axis=1)
    X = x + rt * wPi
    J = 0.5 * np.einsum("ij,ij->i", Pi, Pi)
    E_ext = 0.5 * h_xi * np.einsum("ij,jk,ik->i", Pi, m.gamma_inv, Pi)
    h_X = np.atleast_1d(m.h.value(X))
    with np.errstate(divide="ignore", invalid="ignore"):
        J_ad = np.where(h_X > m.h_min, E_ext / h_X, np.nan)
    return GuidingSamples(Pi=Pi, X=X, J=J, J_ad=J_ad, E_ext=E_ext, h_xi=h_xi, h_X=h_X)


def gyro_period_estimate(m, s, mu, state):
    """2 pi mu J / E_ext, i.e. 2 pi mu / h(xi) when gamma = I."""
    d = decompose(m, s, mu, state)
    if d.J < J_FLOOR:
        raise DegenerateFastMotion(f"J = {d.J:.3e} leaves no fast motion to time")
    return 2.0 * math.pi * mu * d.J / d.E_ext


def _interp_rows(t_new, t, y):
    return np.stack([np.interp(t_new, t, y[:, k]) for k in range(y.shape[1])], axis=1)


def deviation_from_reference(traj, ref):
    """Sup distances of X and xi from the reference flow, and the J variations.

    Both trajectories are linearly interpolated onto the union of their sample
    times inside the overlapping time range.
    """
    lo = max(traj.t[0], ref.t[0])
    hi = min(traj.t[-1], ref.t[-1])
    if not hi > lo:
        raise EmptyOverlap(f"no common time range ([{traj.t[0]}, {traj.t[-1]}] vs [{ref.t[0]}, {ref.t[-1]}])")
    grid = np.union1d(traj.t, ref.t)
    grid = grid[(grid >= lo) & (grid <= hi)]
    g = traj.guiding
    X = _interp_rows(grid, traj.t, g.X)
    xi = _interp_rows(grid, traj.t, traj.x)
    xr = _interp_rows(grid, ref.t, ref.x)
    inside = (traj.t >= lo) & (traj.t <= hi)
    J = g.J[inside]
    J_ad = g.J_ad[inside]
    return {
        "sup_X_error": float(np.max(np.linalg.norm(X - xr, axis=1))),
        "sup_xi_error": float(np.max(np.linalg.norm(xi - xr, axis=1))),
        "J_relative_variation": float(np.max(np.abs(J / J[0] - 1.0))) if J[0] > 0 else math.nan,
        "J_ad_relative_variation": float(np.max(np.abs(J_ad / J_ad[0] - 1.0))) if J_ad[0] > 0 else math.nan,
    }


# sweep harness ----------------------------------------------------------------

SWEEP_METRICS = (
    "sup_X_error", "sup_xi_error", "J_variation", "J_ad_variation",
    "separation_residual", "X_band_width", "mean_step",
)


@dataclass
class SweepReport:
    mu: list
    metrics: dict
    slopes: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.size > 1 and np.any(np.diff(mu) >= 0):
            raise ValueError("mu values must be strictly decreasing")
        for name, vals in self.metrics.items():
            if len(vals) != mu.size:
                raise ValueError(f"metric {name} has {len(vals)} entries for {mu.size} mu values")

    def to_json_dict(self):
        out = {"mu": [float(m) for m in self.mu]}
        for name, vals in self.metrics.items():
            out[name] = [None if not np.isfinite(v) else float(v) for v in vals]
        out["slopes"] = dict(self.slopes)
        out["residuals"] = dict(self.residuals)
        out.update(self.meta)
        return out


def fit_power_law(x, y):
    """Least-squares slope of log y against log x and the RMS log residual."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4:
        raise InsufficientData(f"need at least 4 points, got {x.size}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0) or np.any(x <= 0):
        raise InsufficientData("power-law fit needs positive finite data")
    span = math.log10(x.max() / x.min())
    if span < 1.5:
        raise InsufficientData(f"mu values span {span:.2f} decades, need 1.5")
    lx, ly = np.log(x), np.log(y)
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    return float(slope), float(np.sqrt(np.mean(resid ** 2)))


def convergence_order(report, metric="sup_X_error"):
    """(slope, residual) of log(metric) against log(mu)."""
    return fit_power_law(report.mu, report.metrics[metric])


def _worker_count(n_jobs):
    cap = os.environ.get("SHADOWFLOW_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        limit = max(1, int(cap))
    return max(1, min(limit, n_jobs))


def sweep_point(h, mu, init, horizon, rel_tol=1e-10, abs_tol=1e-14, sample_interval=None):
    """Integrate one extended run plus its reference flow and measure deviations.

    The reference flow starts at X(0) and runs with its clock scaled by
    J_ad(0), the rate at which the guiding center traverses h's level set.
    """
    m = MetricField(h)
    s = SymplecticStructure(h.n)
    cfg = IntegratorConfig(mu=mu, horizon=horizon, rel_tol=rel_tol, abs_tol=abs_tol,
                           sample_interval=sample_interval)
    traj = integrate_extended(m, s, cfg, init)
    traj.raise_for_status()
    g = traj.guiding
    ref = integrate_reference(h, s, cfg, g.X[0], t_eval=traj.t, time_scale=g.J_ad[0])
    ref.raise_for_status()
    dev = deviation_from_reference(traj, ref)
    radius = np.linalg.norm(g.X, axis=1)
    return {
        "sup_X_error": dev["sup_X_error"],
        "sup_xi_error": dev["sup_xi_error"],
        "J_variation": dev["J_relative_variation"],
        "J_ad_variation": dev["J_ad_relative_variation"],
        "separation_residual": float(np.max(np.abs(g.E_ext / (g.h_X * g.J) - 1.0))),
        "X_band_width": float(radius.max() - radius.min()),
        "mean_step": traj.stats["mean_step"],
    }


def run_sweep(h, mus, initial_state, horizon, rel_tol=1e-10, abs_tol=1e-14, fit_metrics=None):
    """Evaluate ``sweep_point`` for each mu (concurrently) and fit power laws.

    ``initial_state(mu)`` returns the ExtendedState for that mu.  Fits that
    cannot be made (too few points, nonpositive errors) are recorded as None.
    """
    mus = [float(m) for m in mus]
    order = sorted(range(len(mus)), key=lambda i: -mus[i])
    mus = [mus[i] for i in order]

    def job(mu):
        return sweep_point(h, mu, initial_state(mu), horizon, rel_tol, abs_tol)

    with ThreadPoolExecutor(max_workers=_worker_count(len(mus))) as pool:
        results = list(pool.map(job, mus))
    metrics = {name: [r[name] for r in results] for name in SWEEP_METRICS}
    report = SweepReport(mu=mus, metrics=metrics, meta={"horizon": horizon, "rel_tol": rel_tol})
    for name in fit_metrics or SWEEP_METRICS:
        try:
            slope, resid = convergence_order(report, name)
        except InsufficientData:
            slope, resid = None, None
        report.slopes[name] = slope
        report.residuals[name] = resid
    return report


def write_sweep_json(path, report, extra=None):
    payload = dict(extra or {})
    payload.update(report.to_json_dict())
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


__all__ = [
    "GuidingDecomposition", "GuidingSamples", "SweepReport", "decompose", "decompose_samples",
    "gyro_period_estimate", "deviation_from_reference", "fit_power_law", "convergence_order",
    "sweep_point", "run_sweep", "write_sweep_json",
]
