"""Compiled right-hand sides and an adaptive Dormand-Prince 5(4) integrator.

Sign convention (frozen everywhere in the package): omega = [[0, -I], [I, 0]],
omega_ik omegabar^jk = delta_i^j, and {xi^i, xi^j} = omegabar^ji.  In these
canonical coordinates omegabar equals omega numerically.

Two systems share the integrator, selected by an integer code:

* ``SYSTEM_EXTENDED``: state (xi, xidot) of the metric-plus-symplectic
  second-order equations  xi'' + Gamma xi' xi' = (1/mu) g^-1 omega xi'.
* ``SYSTEM_REFERENCE``: state xi of the Hamiltonian flow
  xi'^i = scale * omegabar^ji d_j h, i.e. (dh/dp, -dh/dq) for scale = 1.

Status codes returned by the kernels: 0 ok, 1 metric singular,
2 step-size underflow, 3 step budget exhausted.
"""

import numpy as np

from ._accel import njit
from .fields import field_gradient

SYSTEM_EXTENDED = 0
SYSTEM_REFERENCE = 1

STATUS_OK = 0
STATUS_METRIC_SINGULAR = 1
STATUS_STEP_UNDERFLOW = 2
STATUS_MAX_STEPS = 3

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# fifth minus fourth order weights over the seven FSAL stages
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# quartic dense output, y(t + theta h) = y + h sum_i K_i sum_j P_ij theta^(j+1)
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@njit(nogil=True)
def extended_acceleration(kind, params, exps, coefs, fd, gamma, gamma_inv, mu, h_min, x, v, grad, out):
    """Write xi'' into ``out`` for g = gamma / h with constant unimodular gamma.

    With a = grad h / h the Christoffel symbols are
    Gamma^k_ij = -(delta^k_j a_i + delta^k_i a_j - (gamma^-1 a)^k gamma_ij) / 2,
    so only first derivatives of h enter.  Returns 1 if h <= h_min.
    """
    dim = x.shape[0]
    n = dim // 2
    h = field_gradient(kind, params, exps, coefs, fd, x, grad)
    if not (h > h_min):
        return STATUS_METRIC_SINGULAR
    av = 0.0
    for i in range(dim):
        av += grad[i] * v[i]
    av /= h
    vgv = 0.0
    for i in range(dim):
        s = 0.0
        for j in range(dim):
            s += gamma[i, j] * v[j]
        vgv += v[i] * s
    for k in range(dim):
        lorentz = 0.0
        ga = 0.0
        for i in range(dim):
            # (omega v)_i: first block -v_p, second block +v_q
            wv = -v[n + i] if i < n else v[i - n]
            lorentz += gamma_inv[k, i] * wv
            ga += gamma_inv[k, i] * grad[i]
        out[k] = (h / mu) * lorentz + av * v[k] - 0.5 * vgv * ga / h
    return STATUS_OK


@njit(nogil=True)
def system_rhs(system, kind, params, exps, coefs, fd, gamma, gamma_inv, mu, h_min, scale, y, dy, grad):
    if system == SYSTEM_EXTENDED:
        dim = y.shape[0] // 2
        for i in range(dim):
            dy[i] = y[dim + i]
        return extended_acceleration(kind, params, exps, coefs, fd, gamma, gamma_inv, mu, h_min,
                                     y[:dim], y[dim:], grad, dy[dim:])
    dim = y.shape[0]
    n = dim // 2
    field_gradient(kind, params, exps, coefs, fd, y, grad)
    for i in range(n):
        dy[i] = scale * grad[n + i]
        dy[n + i] = -scale * grad[i]
    return STATUS_OK


@njit(nogil=True)
def _rms_scaled(vec, y_a, y_b, rtol, atol):
    s = 0.0
    for i in range(vec.shape[0]):
        sc = atol + rtol * max(abs(y_a[i]), abs(y_b[i]))
        s += (vec[i] / sc) ** 2
    return np.sqrt(s / vec.shape[0])


@njit(nogil=True)
def dopri_integrate(system, kind, params, exps, coefs, fd, gamma, gamma_inv, mu, h_min, scale,
                    y0, t_eval, rtol, atol, max_step, first_step, max_steps):
    """Integrate from ``t_eval[0]`` to ``t_eval[-1]``, sampling at ``t_eval``.

    Returns ``(samples, n_filled, status, t_last, y_last, stats)`` where
    ``y_last`` is the last accepted state and ``stats`` holds
    (accepted, rejected, rhs evaluations, smallest accepted step).
    """
    ny = y0.shape[0]
    n_eval = t_eval.shape[0]
    samples = np.zeros((n_eval, ny))
    stats = np.zeros(4)
    stats[3] = np.inf
    dim_x = ny // 2 if system == SYSTEM_EXTENDED else ny
    grad = np.zeros(dim_x)
    K = np.zeros((7, ny))
    y = y0.copy()
    y_new = np.zeros(ny)
    y_stage = np.zeros(ny)
    err = np.zeros(ny)
    t = t_eval[0]
    t_end = t_eval[n_eval - 1]

    status = system_rhs(system, kind, params, exps, coefs, fd, gamma, gamma_inv, mu, h_min, scale, y, K[0], grad)
    stats[2] += 1
    if status != STATUS_OK:
        return samples, 0, status, t, y, stats
    samples[0] = y
    n_filled = 1
    if n_eval == 1 or t_end <= t:
        return samples, n_filled, STATUS_OK, t, y, stats

    # initial step, Hairer-Norsett-Wanner heuristic
    if first_step > 0.0:
        h = first_step
    else:
        d0 = 0.0
        d1 = 0.0
        for i in range(ny):
            sc = atol + rtol * abs(y[i])
            d0 += (y[i] / sc) ** 2
            d1 += (K[0, i] / sc) ** 2
        d0 = np.sqrt(d0 / ny)
        d1 = np.sqrt(d1 / ny)
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h0 = min(h0, max_step, t_end - t)
        for i in range(ny):
            y_stage[i] = y[i] + h0 * K[0, i]
        st = system_rhs(system, kind, params, exps, coefs, fd, gamma, gamma_inv, mu, h_min, scale,
                        y_stage, K[1], grad)
        stats[2] += 1
        if st != STATUS_OK:
            h = h0
        else:
            d2 = 0.0
            for i in range(ny):
                sc = atol + rtol * abs(y[i])
                d2 += ((K[1, i] - K[0, i]) / sc) ** 2
            d2 = np.sqrt(d2 / ny) / h0
            if max(d1, d2) <= 1e-15:
                h1 = max(1e-6, h0 * 1e-3)
            else:
                h1 = (0.01 / max(d1, d2)) ** 0.2
            h = min(100.0 * h0, h1)
    h = min(h, max_step)

    safety = 0.9
    n_steps = 0
    metric_hit = False
    k_next = 1
    while t < t_end:
        if n_steps >= max_steps:
            return samples, n_filled, STATUS_MAX_STEPS, t, y, stats
        min_h = 10.0 * np.finfo(np.float64).eps * max(abs(t), 1.0)
        if h < min_h:
            status = STATUS_METRIC_SINGULAR if metric_hit else STATUS_STEP_UNDERFLOW
            return samples, n_filled, status, t, y, stats
        h = min(h, max_step)
        if t + h > t_end:
            h = t_end - t

        # stages 2..6
        failed = False
        for s in range(1, 6):
            for i in range(ny):
                acc = 0.0
                for j in range(s):
                    acc += _A[s, j] * K[j, i]
                y_stage[i] = y[i] + h * acc
            st = system_rhs(system, kind, params, exps, coefs, fd, gamma, gamma_inv, mu, h_min, scale,
                            y_stage, K[s], grad)
            stats[2] += 1
            if st != STATUS_OK:
                failed = True
                break
        if not failed:
            for i in range(ny):
                acc = 0.0
                for j in range(6):
                    acc += _B[j] * K[j, i]
                y_new[i] = y[i] + h * acc
            st = system_rhs(system, kind, params, exps, coefs, fd, gamma, gamma_inv, mu, h_min, scale,
                            y_new, K[6], grad)
            stats[2] += 1
            if st != STATUS_OK:
                failed = True
        if failed:
            metric_hit = True
            h *= 0.5
            stats[1] += 1
            continue

        for i in range(ny):
            acc = 0.0
            for j in range(7):
                acc += _E[j] * K[j, i]
            err[i] = h * acc
        err_norm = _rms_scaled(err, y, y_new, rtol, atol)
        if err_norm > 1.0:
            h *= max(0.2, safety * err_norm ** -0.2)
            stats[1] += 1
            continue

        # accepted: fill samples inside (t, t + h]
        t_new = t + h
        while k_next < n_eval and t_eval[k_next] <= t_new:
            theta = (t_eval[k_next] - t) / h
            if t_eval[k_next] == t_new:
                for i in range(ny):
                    samples[k_next, i] = y_new[i]
            else:
                for i in range(ny):
                    acc = 0.0
                    for j in range(7):
                        pj = theta * (_P[j, 0] + theta * (_P[j, 1] + theta * (_P[j, 2] + theta * _P[j, 3])))
                        acc += K[j, i] * pj
                    samples[k_next, i] = y[i] + h * acc
            k_next += 1
            n_filled += 1
        stats[0] += 1
        stats[3] = min(stats[3], h)
        n_steps += 1
        t = t_new
        for i in range(ny):
            y[i] = y_new[i]
            K[0, i] = K[6, i]
        metric_hit = False
        if err_norm == 0.0:
            factor = 10.0
        else:
            factor = min(10.0, max(0.2, safety * err_norm ** -0.2))
        h *= factor
    return samples, n_filled, STATUS_OK, t, y, stats
