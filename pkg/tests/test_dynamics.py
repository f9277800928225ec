import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from shadowflow.dynamics import (
    ExtendedState, IntegratorConfig, extended_energy, extended_rhs, hamiltonian_flow_rhs,
    integrate_extended, integrate_reference, trajectory_columns, write_trajectory_csv,
)
from shadowflow.errors import MetricSingular
from shadowflow.fields import ScalarField
from shadowflow.geometry import MetricField, SymplecticStructure, canonical_one_form_at, metric_at
from shadowflow.oscillator import fig1_initial_state

S1 = SymplecticStructure(1)


def euler_lagrange_residual(m, s, mu, x, v, acc, step=1e-6):
    """d/dt dL/dv - dL/dx for L = mu g(v, v)/2 + theta . v, using finite differences in x."""
    dim = x.size
    dg = np.empty((dim, dim, dim))
    dth = np.empty((dim, dim))  # dth[k, j] = d_k theta_j
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = step
        dg[k] = (metric_at(m, x + e)[0] - metric_at(m, x - e)[0]) / (2 * step)
        dth[k] = (canonical_one_form_at(s, x + e) - canonical_one_form_at(s, x - e)) / (2 * step)
    g = metric_at(m, x)[0]
    ddt = mu * np.einsum("kij,k,j->i", dg, v, v) + mu * g @ acc + dth.T @ v
    dldx = 0.5 * mu * np.einsum("kij,i,j->k", dg, v, v) + dth @ v
    return ddt - dldx


# pointwise right-hand sides ---------------------------------------------------------

@pytest.mark.parametrize("v, expected", [((1.0, 0.0), (0.0, 1.0)), ((0.0, 1.0), (-1.0, 0.0))])
def test_homogeneous_acceleration(v, expected):
    m = MetricField(ScalarField.constant(1.0))
    acc = extended_rhs(m, S1, 1.0, ExtendedState([0.3, 0.2], v))
    np.testing.assert_allclose(acc, expected, atol=1e-15)


def test_harmonic_acceleration_satisfies_euler_lagrange():
    m = MetricField(ScalarField.harmonic())
    x, v = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    acc = extended_rhs(m, S1, 0.25, ExtendedState(x, v))
    assert np.abs(euler_lagrange_residual(m, S1, 0.25, x, v, acc)).max() < 1e-6


def test_euler_lagrange_random_states(builtin_field, rng):
    gamma = np.array([[1.5, 0.3], [0.3, (1 + 0.09) / 1.5]])
    m = MetricField(builtin_field, gamma=gamma)
    for _ in range(10):
        x = rng.uniform(-1, 1, 2)
        if builtin_field.value(x) < 0.1:
            continue
        v = rng.normal(size=2)
        mu = float(rng.uniform(0.05, 1.0))
        acc = extended_rhs(m, S1, mu, ExtendedState(x, v))
        res = euler_lagrange_residual(m, S1, mu, x, v, acc)
        assert np.abs(res).max() < 1e-6 * max(1.0, np.abs(acc).max())


def test_rhs_raises_at_metric_floor():
    with pytest.raises(MetricSingular):
        extended_rhs(MetricField(ScalarField.harmonic()), S1, 0.1, ExtendedState([0.0, 0.0], [1.0, 0.0]))


@pytest.mark.parametrize("h, x, expected", [
    (ScalarField.harmonic(), (1.0, 0.0), (0.0, -1.0)),
    (ScalarField.harmonic(), (0.0, 1.0), (1.0, 0.0)),
    (ScalarField.polynomial([((2, 1), 1.0)]), (1.0, 1.0), (1.0, -2.0)),
])
def test_hamiltonian_flow_rhs(h, x, expected):
    np.testing.assert_allclose(hamiltonian_flow_rhs(h, S1, x), expected)


def test_extended_energy_examples():
    state = ExtendedState([0.0, 0.0], [1.0, 0.0])
    assert extended_energy(MetricField(ScalarField.constant(1.0)), 1.0, state) == pytest.approx(0.5)
    a, b = 0.3, -1.7
    e = extended_energy(MetricField(ScalarField.harmonic()), 1.0, ExtendedState([1.0, 0.0], [a, b]))
    assert e == pytest.approx(a * a + b * b)


# configuration and states -----------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(mu=0.0, horizon=1.0), dict(mu=1.0, horizon=-1.0), dict(mu=1.0, horizon=1.0, rel_tol=1.0),
    dict(mu=1.0, horizon=1.0, abs_tol=0.0), dict(mu=1.0, horizon=1.0, sample_interval=2.0),
])
def test_integrator_config_validation(kwargs):
    with pytest.raises(ValueError):
        IntegratorConfig(**kwargs)


def test_state_validation():
    with pytest.raises(ValueError):
        ExtendedState([1.0, 0.0], [1.0])
    with pytest.raises(ValueError):
        ExtendedState([1.0, np.nan], [1.0, 0.0])


def test_sample_times_default():
    cfg = IntegratorConfig(mu=0.01, horizon=1.0)
    t = cfg.sample_times(0.5)
    dt = math.pi * 0.01 / (2 * 0.5)
    assert t[0] == 0.0 and t[-1] == pytest.approx(1.0)
    assert np.all(np.diff(t) > 0)
    assert np.diff(t)[0] == pytest.approx(dt)


# integration -------------------------------------------------------------------------

def test_homogeneous_circle_closes():
    m = MetricField(ScalarField.constant(1.0))
    cfg = IntegratorConfig(mu=1.0, horizon=2 * math.pi, rel_tol=1e-10, abs_tol=1e-14)
    traj = integrate_extended(m, S1, cfg, ExtendedState([1.0, 0.0], [0.0, 1.0]))
    assert traj.completed
    np.testing.assert_allclose(traj.x[-1], [1.0, 0.0], atol=1e-8)
    # circle of radius 1 about the guiding center (0, 0)
    np.testing.assert_allclose(np.linalg.norm(traj.x, axis=1), 1.0, atol=1e-8)
    np.testing.assert_allclose(traj.guiding.X, 0.0, atol=1e-8)


@pytest.mark.parametrize("b, mu", [(2.0, 0.1), (0.5, 0.03)])
def test_homogeneous_guiding_center_fixed(b, mu):
    m = MetricField(ScalarField.constant(b))
    v0 = np.array([0.4, -0.9])
    period = 2 * math.pi * mu / b
    cfg = IntegratorConfig(mu=mu, horizon=5 * period)
    traj = integrate_extended(m, S1, cfg, ExtendedState([0.2, 0.3], v0))
    X = traj.guiding.X
    assert np.abs(X - X[0]).max() < 1e-6
    radius = math.sqrt(mu) * np.linalg.norm(traj.guiding.Pi[0])  # |xi - X| = sqrt(mu) |Pi|
    np.testing.assert_allclose(np.linalg.norm(traj.x - X, axis=1), radius, rtol=1e-7)
    # closure after an integer number of cyclotron periods
    np.testing.assert_allclose(traj.x[-1], traj.x[0], atol=1e-7)


ENERGY_CASES = [
    ("harmonic", ScalarField.harmonic(), (1.0, 0.0)),
    ("shifted", ScalarField.shifted_harmonic(0.5), (0.5, 0.5)),
    ("quartic", ScalarField.polynomial([((4, 0), 0.25), ((0, 4), 0.25), ((0, 0), 0.3)]), (0.8, 0.1)),
    ("pendulum", ScalarField.pendulum_offset(1.0, 1.0), (0.3, 0.2)),
    ("constant", ScalarField.constant(2.0), (0.0, 0.0)),
]


@pytest.mark.parametrize("mu", [1e-3, 0.05, 1.0])
@pytest.mark.parametrize("name, h, x0", ENERGY_CASES, ids=[c[0] for c in ENERGY_CASES])
def test_extended_energy_drift(name, h, x0, mu):
    m = MetricField(h)
    # speed chosen so the gyro radius stays well inside the region where h > 0
    v0 = 0.1 * h.value(x0) / math.sqrt(mu) * np.array([0.6, 0.8])
    # thirty gyro periods, capped at t = 1
    horizon = min(1.0, 30 * 2 * math.pi * mu / h.value(x0))
    cfg = IntegratorConfig(mu=mu, horizon=horizon)
    init = ExtendedState(x0, v0)
    traj = integrate_extended(m, S1, cfg, init)
    assert traj.completed
    e = traj.guiding.E_ext
    assert np.abs(e / e[0] - 1.0).max() < 1e-8


def test_time_reversal():
    m = MetricField(ScalarField.pendulum_offset(1.0, 1.0))
    init = ExtendedState([0.3, 0.2], [1.0, -0.5])
    cfg = IntegratorConfig(mu=0.1, horizon=2.0)
    fwd = integrate_extended(m, S1, cfg, init)
    # the magnetic term is odd in v, so reversal also needs omega -> -omega: mirror p -> -p
    mirror = np.array([1.0, -1.0])
    back_init = ExtendedState(fwd.x[-1] * mirror, -fwd.v[-1] * mirror)
    back = integrate_extended(m, S1, cfg, back_init)
    np.testing.assert_allclose(back.x[-1] * mirror, init.x, atol=1e-6)
    np.testing.assert_allclose(-back.v[-1] * mirror, init.v, atol=1e-6)


def test_collapse_stops_at_metric_floor():
    mu, init = fig1_initial_state(10.0)
    m = MetricField(ScalarField.harmonic())
    traj = integrate_extended(m, S1, IntegratorConfig(mu=mu, horizon=20.0), init)
    assert traj.termination == "metric_singular"
    assert np.all(np.diff(traj.t) > 0)
    assert traj.t[-1] < 20.0
    with pytest.raises(MetricSingular):
        traj.raise_for_status()


def test_initial_point_at_floor_raises():
    m = MetricField(ScalarField.harmonic())
    with pytest.raises(MetricSingular):
        integrate_extended(m, S1, IntegratorConfig(mu=0.1, horizon=1.0), ExtendedState([0.0, 0.0], [1.0, 0.0]))


def test_bad_t_eval_rejected():
    m = MetricField(ScalarField.constant(1.0))
    with pytest.raises(ValueError):
        integrate_extended(m, S1, IntegratorConfig(mu=1.0, horizon=1.0),
                           ExtendedState([0.0, 0.0], [1.0, 0.0]), t_eval=[0.1, 0.2])


# reference flow -----------------------------------------------------------------------

def test_reference_harmonic_circle():
    h = ScalarField.harmonic()
    cfg = IntegratorConfig(mu=1.0, horizon=2 * math.pi, rel_tol=1e-12, abs_tol=1e-14)
    ref = integrate_reference(h, S1, cfg, [1.0, 0.0])
    np.testing.assert_allclose(ref.x[-1], [1.0, 0.0], atol=1e-8)
    hv = h.value(ref.x)
    assert np.abs(hv / hv[0] - 1.0).max() < 1e-10
    # clockwise: qdot = p, pdot = -q
    assert ref.x[1, 1] < 0


def test_reference_time_scale():
    h = ScalarField.harmonic()
    cfg = IntegratorConfig(mu=1.0, horizon=math.pi)
    ref = integrate_reference(h, S1, cfg, [1.0, 0.0], time_scale=2.0)
    np.testing.assert_allclose(ref.x[-1], [1.0, 0.0], atol=1e-8)


def test_pendulum_small_amplitude_period():
    h = ScalarField.pendulum_offset(1.0, 1.0)
    cfg = IntegratorConfig(mu=1.0, horizon=15.0, sample_interval=0.001)
    ref = integrate_reference(h, S1, cfg, [0.01, 0.0])
    hv = h.value(ref.x)
    assert np.abs(hv / hv[0] - 1.0).max() < 1e-8
    q = ref.x[:, 0]
    up = np.where((q[:-1] < 0) & (q[1:] >= 0))[0]
    crossings = ref.t[up] - q[up] * (ref.t[up + 1] - ref.t[up]) / (q[up + 1] - q[up])
    period = float(np.mean(np.diff(crossings)))
    # high-precision oracle: the same flow with an independent integrator
    sol = solve_ivp(lambda t, y: [y[1], -math.sin(y[0])], (0, 15), [0.01, 0.0], method="DOP853",
                    rtol=1e-12, atol=1e-14, dense_output=True, events=lambda t, y: y[0])
    ev = sol.t_events[0]
    oracle = 2 * float(np.mean(np.diff(ev)))
    assert period == pytest.approx(oracle, rel=1e-6)
    assert period == pytest.approx(2 * math.pi, rel=0.01)


# output ------------------------------------------------------------------------------

def test_csv_writer(tmp_path):
    m = MetricField(ScalarField.constant(1.0))
    traj = integrate_extended(m, S1, IntegratorConfig(mu=1.0, horizon=0.5, sample_interval=0.1),
                              ExtendedState([1.0, 0.0], [0.0, 1.0]))
    path = tmp_path / "t.csv"
    write_trajectory_csv(path, traj, ["run: test"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# run: test"
    assert lines[1].split(",") == trajectory_columns(1)
    assert len(lines) == 2 + traj.n_samples
    row = [float(v) for v in lines[2].split(",")]
    assert row[:5] == [0.0, 1.0, 0.0, 0.0, 1.0]
