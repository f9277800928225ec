import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowflow.dynamics import ExtendedState, IntegratorConfig, Trajectory, integrate_extended
from shadowflow.errors import DegenerateFastMotion, EmptyOverlap, InsufficientData
from shadowflow.fields import ScalarField
from shadowflow.geometry import MetricField, SymplecticStructure, canonical_one_form_at, metric_at
from shadowflow.guiding_center import (
    SweepReport, _worker_count, convergence_order, decompose, decompose_samples,
    deviation_from_reference, fit_power_law, gyro_period_estimate, write_sweep_json,
)
from shadowflow.oscillator import OscillatorParams, bound_period, fig1_initial_state

S1 = SymplecticStructure(1)


def test_decompose_homogeneous_example():
    m = MetricField(ScalarField.constant(1.0))
    d = decompose(m, S1, 1.0, ExtendedState([1.0, 0.0], [0.0, 1.0]))
    np.testing.assert_allclose(d.Pi, [0.0, 1.0])
    np.testing.assert_allclose(d.X, [0.0, 0.0], atol=1e-15)
    assert d.J == pytest.approx(0.5)
    assert d.E_ext == pytest.approx(0.5)


def test_decompose_zero_velocity():
    m = MetricField(ScalarField.harmonic())
    d = decompose(m, S1, 0.3, ExtendedState([0.4, -1.2], [0.0, 0.0]))
    np.testing.assert_array_equal(d.Pi, 0.0)
    np.testing.assert_array_equal(d.X, [0.4, -1.2])
    assert d.J == 0.0


def test_energy_factorizes_on_xi(rng):
    # E_ext = h(xi) J exactly when gamma = I
    m = MetricField(ScalarField.shifted_harmonic(0.4))
    for _ in range(20):
        state = ExtendedState(rng.normal(size=2), rng.normal(size=2))
        d = decompose(m, S1, 0.05, state)
        assert d.E_ext == pytest.approx(m.h.value(state.x) * d.J, rel=1e-13)


def test_vectorized_decomposition_matches_pointwise(rng):
    m = MetricField(ScalarField.pendulum_offset(1.0, 0.5))
    x, v = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    g = decompose_samples(m, 0.02, x, v)
    for i in range(6):
        d = decompose(m, S1, 0.02, ExtendedState(x[i], v[i]))
        np.testing.assert_allclose(g.Pi[i], d.Pi, rtol=1e-13)
        np.testing.assert_allclose(g.X[i], d.X, rtol=1e-13)
        assert g.J[i] == pytest.approx(d.J, rel=1e-13)
        assert g.J_ad[i] == pytest.approx(d.J_ad, rel=1e-13)


def _xp_of_canonical(m, mu, y):
    """(xi, canonical momentum p) -> (X, Pi) through the extended velocity."""
    x, p = y[:2], y[2:]
    theta = canonical_one_form_at(S1, x)
    _, g_inv, _ = metric_at(m, x)
    v = g_inv @ (p - theta) / mu
    d = decompose(m, S1, mu, ExtendedState(x, v))
    return np.concatenate([d.X, d.Pi])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1.5, 1.5), min_size=4, max_size=4), st.floats(0.01, 1.0))
def test_bracket_structure_of_guiding_variables(y, mu):
    """{Pi_i, Pi_j} = omega_ij / mu, {Pi, X} = 0, {X^i, X^j} = omegabar^ji."""
    y = np.array(y)
    m = MetricField(ScalarField.shifted_harmonic(0.5))
    step = 1e-6
    jac = np.empty((4, 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = step
        jac[:, k] = (_xp_of_canonical(m, mu, y + e) - _xp_of_canonical(m, mu, y - e)) / (2 * step)
    canonical = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    br = jac @ canonical @ jac.T
    w, wb = S1.omega, S1.omega_bar
    scale = max(1.0, 1.0 / mu)
    np.testing.assert_allclose(br[2:, 2:], w / mu, atol=1e-6 * scale)
    np.testing.assert_allclose(br[:2, 2:], 0.0, atol=1e-6 * scale)
    np.testing.assert_allclose(br[:2, :2], wb.T, atol=1e-6 * scale)


# gyro period ----------------------------------------------------------------------------

def test_gyro_period_homogeneous():
    for b, mu in ((1.0, 1.0), (3.0, 0.02)):
        m = MetricField(ScalarField.constant(b))
        T = gyro_period_estimate(m, S1, mu, ExtendedState([0.0, 0.0], [0.3, 0.1]))
        assert T == pytest.approx(2 * math.pi * mu / b, rel=1e-14)


def test_gyro_period_without_fast_motion():
    m = MetricField(ScalarField.constant(1.0))
    with pytest.raises(DegenerateFastMotion):
        gyro_period_estimate(m, S1, 1.0, ExtendedState([0.0, 0.0], [0.0, 0.0]))


def test_radial_period_example():
    params = OscillatorParams(mu=0.03125, E=1.0, l=0.25)
    assert bound_period(params) == pytest.approx(0.5554, abs=1e-4)


@pytest.mark.parametrize("p", [0.01, 0.1])
def test_gyro_estimate_tracks_radial_period_for_small_p(p):
    mu, init = fig1_initial_state(p)
    params = OscillatorParams(mu=mu, E=1.0, l=0.25)
    est = gyro_period_estimate(MetricField(ScalarField.harmonic()), S1, mu, init)
    assert est == pytest.approx(bound_period(params), rel=0.2)


# deviation metrics ------------------------------------------------------------------------

def _homogeneous_traj(mu=0.05, b=1.0, horizon=1.0):
    m = MetricField(ScalarField.constant(b))
    cfg = IntegratorConfig(mu=mu, horizon=horizon)
    return integrate_extended(m, S1, cfg, ExtendedState([0.5, -0.2], [1.0, 2.0]))


def test_deviation_against_own_guiding_center_is_zero():
    traj = _homogeneous_traj()
    ref = Trajectory(t=traj.t.copy(), x=traj.guiding.X.copy(), v=None, termination="completed",
                     metric=None, mu=traj.mu)
    dev = deviation_from_reference(traj, ref)
    assert dev["sup_X_error"] == 0.0
    assert dev["J_relative_variation"] < 1e-8


def test_deviation_homogeneous_field():
    traj = _homogeneous_traj()
    X0 = traj.guiding.X[0]
    ref = Trajectory(t=traj.t.copy(), x=np.tile(X0, (traj.n_samples, 1)), v=None,
                     termination="completed", metric=None, mu=traj.mu)
    dev = deviation_from_reference(traj, ref)
    assert dev["sup_X_error"] < 1e-6
    gyro_radius = math.sqrt(traj.mu) * np.linalg.norm(traj.guiding.Pi[0])
    assert dev["sup_xi_error"] == pytest.approx(gyro_radius, rel=1e-6)


def test_deviation_needs_overlap():
    traj = _homogeneous_traj()
    ref = Trajectory(t=traj.t + 10.0, x=traj.x, v=None, termination="completed", metric=None, mu=traj.mu)
    with pytest.raises(EmptyOverlap):
        deviation_from_reference(traj, ref)


# power-law fits ----------------------------------------------------------------------------

MUS = np.array([0.1, 0.05, 0.02, 0.01, 0.005, 0.002])


@pytest.mark.parametrize("power", [1.0, 0.5, 2.0])
def test_fit_exact_power_law(power):
    slope, resid = fit_power_law(MUS, 3.7 * MUS ** power)
    assert slope == pytest.approx(power, abs=1e-10)
    assert resid < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(1e-3, 1e3))
def test_fit_recovers_any_exponent(power, c):
    slope, _ = fit_power_law(MUS, c * MUS ** power)
    assert slope == pytest.approx(power, abs=1e-9)


def test_fit_rejects_thin_data():
    with pytest.raises(InsufficientData):
        fit_power_law(MUS[:3], MUS[:3])
    with pytest.raises(InsufficientData):
        fit_power_law([0.1, 0.09, 0.08, 0.07], [1, 2, 3, 4])
    with pytest.raises(InsufficientData):
        fit_power_law(MUS, np.zeros(6))


def test_sweep_report_validation():
    with pytest.raises(ValueError):
        SweepReport(mu=[0.01, 0.1], metrics={})
    with pytest.raises(ValueError):
        SweepReport(mu=[0.1, 0.01], metrics={"sup_X_error": [1.0]})


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("SHADOWFLOW_THREADS", "1")
    assert _worker_count(6) == 1
    monkeypatch.delenv("SHADOWFLOW_THREADS")
    assert 1 <= _worker_count(6) <= 6


# sweep properties ----------------------------------------------------------------------------

def test_sweep_errors_nonnegative_and_monotone(oscillator_sweep):
    sup_x = np.array(oscillator_sweep.metrics["sup_X_error"])
    assert np.all(sup_x >= 0)
    assert np.all(np.diff(sup_x) < 0)


def test_sweep_adiabatic_invariant_scaling(oscillator_sweep):
    assert convergence_order(oscillator_sweep, "J_variation")[0] >= 0.8
    assert convergence_order(oscillator_sweep, "J_ad_variation")[0] >= 0.8


def test_sweep_separation_and_band_shrink(oscillator_sweep):
    assert oscillator_sweep.slopes["separation_residual"] > 0
    assert oscillator_sweep.slopes["X_band_width"] > 0


def test_sweep_step_size_proportional_to_mu(oscillator_sweep):
    assert oscillator_sweep.slopes["mean_step"] == pytest.approx(1.0, abs=0.2)


def test_sweep_json(oscillator_sweep, tmp_path):
    path = tmp_path / "sweep.json"
    write_sweep_json(path, oscillator_sweep, extra={"note": "x"})
    doc = json.loads(path.read_text())
    assert doc["mu"] == list(MUS)
    assert set(doc["slopes"]) >= {"sup_X_error", "J_variation"}
    assert len(doc["sup_X_error"]) == 6 and doc["note"] == "x"
