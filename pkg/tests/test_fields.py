import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowflow.fields import ScalarField

from conftest import BUILTIN_FIELDS

coords = st.floats(-2.0, 2.0, allow_nan=False)
points = st.tuples(coords, coords).map(np.array)


def central_gradient(h, x, step=1e-5):
    out = np.empty_like(x)
    for d in range(x.size):
        e = np.zeros_like(x)
        e[d] = step
        out[d] = (h.value(x + e) - h.value(x - e)) / (2 * step)
    return out


def central_hessian(h, x, step=1e-4):
    cols = []
    for d in range(x.size):
        e = np.zeros_like(x)
        e[d] = step
        cols.append((h.gradient(x + e) - h.gradient(x - e)) / (2 * step))
    return np.stack(cols, axis=1)


def test_harmonic_values():
    h = ScalarField.harmonic()
    assert h.value([1.0, 0.0]) == 0.5
    assert h.value([3.0, 4.0]) == 12.5
    np.testing.assert_array_equal(h.gradient(np.array([3.0, 4.0])), [3.0, 4.0])


def test_polynomial_q2p_gradient():
    # h = q^2 p: grad = (2 q p, q^2)
    h = ScalarField.polynomial([((2, 1), 1.0)])
    np.testing.assert_allclose(h.gradient(np.array([1.0, 1.0])), [2.0, 1.0])
    np.testing.assert_allclose(h.gradient(np.array([-2.0, 0.5])), [-2.0, 4.0])


def test_pendulum_value():
    h = ScalarField.pendulum_offset(1.0, 2.0)
    assert h.value([np.pi, 0.0]) == pytest.approx(1.0 + 2.0 * 2.0)
    assert h.value([0.0, 2.0]) == pytest.approx(1.0 + 2.0)


def test_vectorized_value_matches_pointwise(rng):
    h = BUILTIN_FIELDS["quartic"]
    pts = rng.uniform(-1, 1, size=(7, 2))
    np.testing.assert_allclose(h.value(pts), [h.value(p) for p in pts])


@settings(max_examples=60, deadline=None)
@given(points)
def test_gradients_match_central_differences(x):
    for h in BUILTIN_FIELDS.values():
        g = h.gradient(x)
        ref = central_gradient(h, x)
        np.testing.assert_allclose(g, ref, rtol=1e-6, atol=1e-6 * (1 + np.abs(ref).max()))


@settings(max_examples=40, deadline=None)
@given(points)
def test_hessians_match_central_differences(x):
    for h in BUILTIN_FIELDS.values():
        H = h.hessian(x)
        ref = central_hessian(h, x)
        np.testing.assert_allclose(H, ref, rtol=1e-6, atol=1e-6 * (1 + np.abs(ref).max()))
        np.testing.assert_array_equal(H, H.T)


def test_fd_gradient_option_agrees_with_analytic(rng):
    terms = [((4, 0), 0.25), ((1, 3), -0.5), ((0, 0), 1.0)]
    exact = ScalarField.polynomial(terms)
    fd = ScalarField.polynomial(terms, fd_step=1e-3)
    for x in rng.uniform(-1.5, 1.5, size=(20, 2)):
        np.testing.assert_allclose(fd.gradient(x), exact.gradient(x), rtol=1e-8, atol=1e-9)
        np.testing.assert_allclose(fd.hessian(x), exact.hessian(x), rtol=1e-6, atol=1e-6)


def test_two_degrees_of_freedom():
    h = ScalarField.harmonic(n=2)
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert h.value(x) == pytest.approx(15.0)
    assert h.laplacian(x) == pytest.approx(4.0)


@pytest.mark.parametrize("bad", [
    lambda: ScalarField("unknown"),
    lambda: ScalarField.shifted_harmonic(0.0),
    lambda: ScalarField.pendulum_offset(-1.0),
    lambda: ScalarField.polynomial([((1,), 1.0)]),
    lambda: ScalarField.polynomial([((-1, 0), 1.0)]),
])
def test_invalid_fields_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_wrong_point_dimension():
    with pytest.raises(ValueError):
        ScalarField.harmonic().value([1.0, 2.0, 3.0])
