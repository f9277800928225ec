"""Extended second-order dynamics and the reference Hamiltonian flow.

The extended system lives on (xi, xidot) with Lagrangian
L = mu g_ij xidot^i xidot^j / 2 + theta_i xidot^i.  Its equations of motion
depend on theta only through d theta = omega, so no gauge enters here.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import MetricSingular, StepSizeUnderflow, NumericalError
from .geometry import as_point, metric_at

TERMINATION = {
    kernels.STATUS_OK: "completed",
    kernels.STATUS_METRIC_SINGULAR: "metric_singular",
    kernels.STATUS_STEP_UNDERFLOW: "step_underflow",
    kernels.STATUS_MAX_STEPS: "max_steps",
}


@dataclass(frozen=True)
class ExtendedState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = as_point(self.x)
        v = np.asarray(self.v, dtype=np.float64)
        if v.shape != x.shape:
            raise ValueError(f"velocity shape {v.shape} does not match position shape {x.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("velocity has non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def n(self):
        return self.x.size // 2

    def as_vector(self):
        return np.concatenate([self.x, self.v])


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings; ``sample_interval=None`` picks a gyro-resolving default."""

    mu: float
    horizon: float
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_step: float = math.inf
    sample_interval: float = None
    max_steps: int = 20_000_000

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        for name in ("rel_tol", "abs_tol"):
            val = getattr(self, name)
            if not 0 < val < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.sample_interval is not None:
            if not self.sample_interval > 0:
                raise ValueError("sample_interval must be positive")
            if self.sample_interval > self.horizon:
                raise ValueError("sample_interval must not exceed horizon")

    def resolved_sample_interval(self, h0):
        """Explicit interval, else min(0.05, pi mu / (2 h0)) with h0 the field at the start."""
        if self.sample_interval is not None:
            return self.sample_interval
        return min(0.05, math.pi * self.mu / (2.0 * h0), self.horizon)

    def sample_times(self, h0):
        dt = self.resolved_sample_interval(h0)
        n = int(math.floor(self.horizon / dt + 1e-9))
        t = dt * np.arange(n + 1)
        if self.horizon - t[-1] > 1e-9 * dt:
            t = np.append(t, self.horizon)
        return t

    def to_dict(self):
        return {
            "mu": self.mu, "horizon": self.horizon, "rel_tol": self.rel_tol, "abs_tol": self.abs_tol,
            "max_step": None if math.isinf(self.max_step) else self.max_step,
            "sample_interval": self.sample_interval, "max_steps": self.max_steps,
        }


@dataclass
class Trajectory:
    """Sampled solution.  ``v`` is None for reference-flow trajectories.

    When the run stops early the last accepted integrator state is appended
    as a final sample, so ``t`` stays strictly increasing.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    termination: str
    metric: object
    mu: float
    config: IntegratorConfig = None
    stats: dict = field(default_factory=dict)
    time_scale: float = 1.0
    _guiding: object = field(default=None, repr=False)

    @property
    def n_samples(self):
        return self.t.size

    @property
    def completed(self):
        return self.termination == "completed"

    def state(self, i):
        return ExtendedState(self.x[i], self.v[i])

    @property
    def guiding(self):
        """Per-sample (Pi, X, J, J_ad, E_ext) arrays; see guiding_center.decompose_samples."""
        if self.v is None:
            raise ValueError("reference trajectories carry no velocity")
        if self._guiding is None:
            from .guiding_center import decompose_samples

            self._guiding = decompose_samples(self.metric, self.mu, self.x, self.v)
        return self._guiding

    def raise_for_status(self):
        if self.termination == "metric_singular":
            raise MetricSingular(f"trajectory hit the metric floor at t = {self.t[-1]:.6g}",
                                 t=float(self.t[-1]), point=self.x[-1])
        if self.termination == "step_underflow":
            raise StepSizeUnderflow(f"step size underflow at t = {self.t[-1]:.6g}")
        if self.termination == "max_steps":
            raise NumericalError(f"step budget exhausted at t = {self.t[-1]:.6g}")


def extended_rhs(m, s, mu, state):
    """Acceleration xi'' of the extended system at ``state``."""
    x = as_point(state.x, m.n)
    if s.n != m.n:
        raise ValueError("symplectic structure and metric dimensions differ")
    kind, params, exps, coefs, fd = m.h.kernel_args()
    out = np.empty_like(x)
    grad = np.empty_like(x)
    status = kernels.extended_acceleration(kind, params, exps, coefs, fd, m.gamma, m.gamma_inv,
                                           float(mu), m.h_min, x, np.asarray(state.v, float), grad, out)
    if status != kernels.STATUS_OK:
        raise MetricSingular(f"h <= h_min at {x}", point=x)
    return out


def hamiltonian_flow_rhs(h, s, x):
    """Canonical vector field xi'^i = omegabar^ji d_j h = (dh/dp, -dh/dq)."""
    x = as_point(x, h.n)
    grad = h.gradient(x)
    return s.omega_bar.T @ grad


def extended_energy(m, mu, state):
    """mu g_ij v^i v^j / 2, conserved along the extended flow."""
    g, _, _ = metric_at(m, state.x)
    v = np.asarray(state.v, float)
    return 0.5 * mu * float(v @ g @ v)


def _run(system, m, mu, scale, y0, t_eval, cfg):
    kind, params, exps, coefs, fd = m.h.kernel_args()
    samples, n_filled, status, t_last, y_last, stats = kernels.dopri_integrate(
        system, kind, params, exps, coefs, fd, m.gamma, m.gamma_inv, float(mu), m.h_min, float(scale),
        np.ascontiguousarray(y0, dtype=np.float64), np.ascontiguousarray(t_eval, dtype=np.float64),
        cfg.rel_tol, cfg.abs_tol, cfg.max_step, 0.0, cfg.max_steps)
    t = np.array(t_eval[:n_filled], dtype=np.float64)
    y = np.array(samples[:n_filled])
    if status != kernels.STATUS_OK and n_filled > 0 and t_last > t[-1]:
        t = np.append(t, t_last)
        y = np.vstack([y, y_last])
    stat = {
        "accepted_steps": int(stats[0]), "rejected_steps": int(stats[1]),
        "rhs_evaluations": int(stats[2]),
        "min_step": float(stats[3]) if np.isfinite(stats[3]) else None,
        "mean_step": float(t_last - t_eval[0]) / stats[0] if stats[0] > 0 else None,
        "t_last": float(t_last),
    }
    return t, y, TERMINATION[int(status)], stat


def integrate_extended(m, s, cfg, init, t_eval=None):
    """Adaptive DOPRI5 integration of the extended system.

    A trajectory that reaches the metric floor is returned truncated with
    ``termination == "metric_singular"``; an initial point already at the
    floor raises MetricSingular.
    """
    if s.n != m.n:
        raise ValueError("symplectic structure and metric dimensions differ")
    if init.n != m.n:
        raise ValueError("initial state dimension does not match the metric")
    h0 = m.checked_h(init.x)
    if t_eval is None:
        t_eval = cfg.sample_times(h0)
    t_eval = np.asarray(t_eval, dtype=np.float64)
    if t_eval[0] != 0.0 or np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must start at 0 and be strictly increasing")
    t, y, term, stat = _run(kernels.SYSTEM_EXTENDED, m, cfg.mu, 1.0, init.as_vector(), t_eval, cfg)
    dim = 2 * m.n
    return Trajectory(t=t, x=y[:, :dim], v=y[:, dim:], termination=term, metric=m, mu=cfg.mu,
                      config=cfg, stats=stat)


def integrate_reference(h, s, cfg, x0, t_eval=None, time_scale=1.0):
    """Adaptive integration of the Hamiltonian flow, optionally with a rescaled clock.

    ``time_scale`` multiplies the vector field, so the output at time t is the
    flow evaluated at time_scale * t.
    """
    x0 = as_point(x0, h.n)
    # the reference flow needs no metric; the kernels get a flat stand-in
    metric = _FlatCarrier(h)
    if t_eval is None:
        t_eval = cfg.sample_times(max(abs(h.value(x0)), 1e-300))
    t_eval = np.asarray(t_eval, dtype=np.float64)
    t, y, term, stat = _run(kernels.SYSTEM_REFERENCE, metric, cfg.mu, time_scale, x0, t_eval, cfg)
    return Trajectory(t=t, x=y, v=None, termination=term, metric=metric, mu=cfg.mu, config=cfg,
                      stats=stat, time_scale=float(time_scale))


@dataclass(frozen=True)
class _FlatCarrier:
    """Minimal stand-in carrying h and trivial gamma into the kernels."""

    h: object

    @property
    def n(self):
        return self.h.n

    @property
    def gamma(self):
        return np.eye(self.h.dim)

    @property
    def gamma_inv(self):
        return np.eye(self.h.dim)

    h_min = 0.0


def trajectory_columns(n):
    dim = 2 * n
    cols = ["t"]
    for name in ("xi", "v", "Pi", "X"):
        cols += [f"{name}_{i + 1}" for i in range(dim)]
    return cols + ["J", "E_ext"]


def trajectory_rows(traj):
    g = traj.guiding
    for i in range(traj.n_samples):
        yield [traj.t[i], *traj.x[i], *traj.v[i], *g.Pi[i], *g.X[i], g.J[i], g.E_ext[i]]


def write_trajectory_csv(path, traj, header_lines=()):
    """CSV with ``#`` provenance lines, a header row and 17-significant-digit floats."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trajectory_columns(traj.metric.n))
        for row in trajectory_rows(traj):
            writer.writerow([format(float(val), ".17g") for val in row])

