"""Closed-form ground truth for the extended harmonic oscillator.

With h = (q^2 + p^2)/2 and g = delta / h, the extended motion separates in
the cylinder coordinates q = sqrt(mu) e^-rho sin(phi), p = sqrt(mu) e^-rho cos(phi)
and has two integrals,

    l = mu phidot + r^2 / 4,      E = mu ((rdot / r)^2 + phidot^2),

with r^2 = q^2 + p^2.  The regime parameter P = mu E / l^2 decides between
exponential collapse (P > 1), power-law collapse (P = 1) and bounded
oscillation of r^2 (P < 1).  Everything below assumes l > 0.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .dynamics import ExtendedState
from .errors import BranchMismatch, DomainError, OriginSingular
from .geometry import as_point

BOUNDARY_TOL = 1e-12
POWER_LAW_BRANCH_TOL = 1e-9
FIG1_P_VALUES = (10.0, 1.0, 0.95, 0.5, 0.1, 0.01)


class Regime(enum.Enum):
    UNBOUND_EXPONENTIAL = "Unbound_Exponential"
    UNBOUND_POWER_LAW = "Unbound_PowerLaw"
    BOUND = "Bound"


@dataclass(frozen=True)
class OscillatorParams:
    mu: float
    E: float
    l: float
    t0: float = 0.0
    sign: int = 1

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.E > 0:
            raise ValueError("E must be positive")
        if self.l == 0:
            raise ValueError("l must be nonzero")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def p_param(self):
        return self.mu * self.E / self.l ** 2

    @property
    def regime(self):
        return classify(self)


def classify(params):
    p = params.p_param
    if abs(p - 1.0) <= BOUNDARY_TOL:
        return Regime.UNBOUND_POWER_LAW
    return Regime.UNBOUND_EXPONENTIAL if p > 1.0 else Regime.BOUND


def integrals_of_motion(mu, state):
    """(l, E) from the Cartesian state (q, p, qdot, pdot)."""
    q, p = state.x
    vq, vp = state.v
    r2 = q * q + p * p
    if not r2 > 0:
        raise OriginSingular("the integrals of motion are undefined at the origin")
    # phi = atan2(q, p), so r^2 phidot = p qdot - q pdot
    phidot = (p * vq - q * vp) / r2
    rdot_over_r = (q * vq + p * vp) / r2
    return float(mu * phidot + 0.25 * r2), float(mu * (rdot_over_r ** 2 + phidot ** 2))


def cylindrical_map(mu, x):
    """(rho, phi) with q = sqrt(mu) e^-rho sin(phi), p = sqrt(mu) e^-rho cos(phi)."""
    q, p = as_point(x, 1)
    r2 = q * q + p * p
    if not r2 > 0:
        raise OriginSingular("cylinder coordinates are undefined at the origin")
    return -0.5 * math.log(r2 / mu), math.atan2(q, p)


def inverse_cylindrical_map(mu, rho, phi):
    r = math.sqrt(mu) * math.exp(-rho)
    return np.array([r * math.sin(phi), r * math.cos(phi)])


def oscillator_initial_state(mu, E, l, x0=(1.0, 0.0), radial_sign=1):
    """State at x0 carrying the integrals (l, E)."""
    x0 = as_point(x0, 1)
    q, p = x0
    r2 = q * q + p * p
    if not r2 > 0:
        raise OriginSingular("cannot start at the origin")
    phidot = (l - 0.25 * r2) / mu
    rad2 = E / mu - phidot ** 2
    if rad2 < 0:
        raise DomainError(f"no real radial velocity for E={E}, l={l} at r^2={r2}")
    rr = math.copysign(math.sqrt(rad2), radial_sign)
    v = rr * np.array([q, p]) + phidot * np.array([p, -q])
    return ExtendedState(x0, v)


def fig1_initial_state(p_param, E=1.0, l=0.25, x0=(1.0, 0.0), radial_sign=1):
    """(mu, state) for a given regime parameter with mu = P l^2 / E."""
    mu = p_param * l * l / E
    return mu, oscillator_initial_state(mu, E, l, x0, radial_sign)


def _check_l(l):
    if not l > 0:
        raise DomainError("closed forms are implemented for l > 0 only")


def _branch(params, branch):
    p = params.p_param
    if branch is None:
        if abs(p - 1.0) <= POWER_LAW_BRANCH_TOL:
            return Regime.UNBOUND_POWER_LAW
        return Regime.UNBOUND_EXPONENTIAL if p > 1.0 else Regime.BOUND
    branch = Regime(branch) if not isinstance(branch, Regime) else branch
    if branch is Regime.UNBOUND_POWER_LAW and abs(p - 1.0) > POWER_LAW_BRANCH_TOL:
        raise BranchMismatch(f"power-law branch requested with P = {p!r}")
    if branch is Regime.BOUND and not p < 1.0:
        raise BranchMismatch(f"bound branch requested with P = {p!r}")
    if branch is Regime.UNBOUND_EXPONENTIAL and not p > 1.0:
        raise BranchMismatch(f"exponential branch requested with P = {p!r}")
    return branch


def exact_r_squared(params, t, branch=None):
    """Closed-form r^2(t) for the three regimes, tau = t - t0.

    P < 1:  4l(1-P) / (1 + s sqrt(P) sin(b tau)),            b = 2l sqrt(1-P)/mu
    P = 1:  8l / (1 + 4 l^2 tau^2 / mu^2)
    P > 1:  8l(P-1) / (e^{s a tau} + P e^{-s a tau} - 2),    a = 2l sqrt(P-1)/mu

    The P > 1 amplitude is the one whose maximum, 4l(1 + sqrt(P)), sits at
    the turning point zeta = sqrt(P) of the radial quadrature.
    """
    _check_l(params.l)
    reg = _branch(params, branch)
    mu, l, p, s = params.mu, params.l, params.p_param, params.sign
    tau = np.asarray(t, dtype=np.float64) - params.t0
    if reg is Regime.BOUND:
        b = 2.0 * l * math.sqrt(1.0 - p) / mu
        out = 4.0 * l * (1.0 - p) / (1.0 + s * math.sqrt(p) * np.sin(b * tau))
    elif reg is Regime.UNBOUND_POWER_LAW:
        out = 8.0 * l / (1.0 + (2.0 * l * tau / mu) ** 2)
    else:
        a = 2.0 * l * math.sqrt(p - 1.0) / mu
        arg = s * a * tau
        # e^x + P e^-x - 2, written to stay finite for large |x|
        with np.errstate(over="ignore"):
            den = np.exp(arg) + p * np.exp(-arg) - 2.0
        out = 8.0 * l * (p - 1.0) / den
    return float(out) if np.ndim(out) == 0 else out


def bound_envelope(params):
    """(min, max) of r^2 in the bound regime."""
    p, l = params.p_param, params.l
    if not p < 1.0:
        raise BranchMismatch("envelope only exists for P < 1")
    amp = 4.0 * l * (1.0 - p)
    return amp / (1.0 + math.sqrt(p)), amp / (1.0 - math.sqrt(p))


def bound_period(params):
    """Period of r^2 in the bound regime, pi mu / (l sqrt(1 - P))."""
    p = params.p_param
    if not p < 1.0:
        raise BranchMismatch("only the bound regime is periodic")
    return math.pi * params.mu / (abs(params.l) * math.sqrt(1.0 - p))


def collapse_rate(params):
    """Asymptotic decay rate of r for P > 1: l sqrt(P - 1) / mu."""
    p = params.p_param
    if not p > 1.0:
        raise BranchMismatch("exponential collapse needs P > 1")
    return params.l * math.sqrt(p - 1.0) / params.mu


def _tau_of(mu, l, p, u, udot, udot_is_sign=False):
    """tau with sign +1 such that the closed form passes through (u, udot)."""
    if abs(p - 1.0) <= POWER_LAW_BRANCH_TOL:
        c = 2.0 * l / mu
        mag = math.sqrt(max(8.0 * l / u - 1.0, 0.0)) / c
        return -math.copysign(mag, udot) if udot != 0 else 0.0
    if p < 1.0:
        b = 2.0 * l * math.sqrt(1.0 - p) / mu
        amp = 4.0 * l * (1.0 - p)
        sin_t = (amp / u - 1.0) / math.sqrt(p)
        sin_t = min(1.0, max(-1.0, sin_t))
        if udot_is_sign:
            cos_t = -math.copysign(math.sqrt(1.0 - sin_t ** 2), udot) if udot != 0 else 0.0
        else:
            # udot = -amp sqrt(P) b cos / (1 + sqrt(P) sin)^2
            cos_t = -udot * (1.0 + math.sqrt(p) * sin_t) ** 2 / (amp * math.sqrt(p) * b)
        return math.atan2(sin_t, cos_t) / b
    a = 2.0 * l * math.sqrt(p - 1.0) / mu
    big_s = 2.0 + 8.0 * l * (p - 1.0) / u
    disc = math.sqrt(max(big_s * big_s - 4.0 * p, 0.0))
    roots = ((big_s + disc) / 2.0, (big_s - disc) / 2.0)
    # udot is proportional to -(E - P/E) a
    want = -math.copysign(1.0, udot) * math.copysign(1.0, a)
    e_val = roots[0] if (roots[0] - p / roots[0]) * want >= 0 else roots[1]
    return math.log(e_val) / a


def phase_from_state(mu, state):
    """OscillatorParams whose closed form passes through ``state`` at t = 0.

    The branch sign is fixed to +1 (the other sign is a shift of t0) and t0
    is solved from r^2 and its rate at t = 0.
    """
    l, E = integrals_of_motion(mu, state)
    _check_l(l)
    q, p_ = state.x
    u0 = q * q + p_ * p_
    udot0 = 2.0 * float(state.x @ state.v)
    p = mu * E / l ** 2
    tau0 = _tau_of(mu, l, p, u0, udot0)
    return OscillatorParams(mu=float(mu), E=E, l=l, t0=float(-tau0), sign=1)


def zeta_of_r2(params, r2):
    return r2 / (4.0 * params.l) - 1.0


def time_at_zeta(params, zeta, direction):
    """A time t at which the closed form passes zeta moving in ``direction`` (+1 or -1)."""
    _check_l(params.l)
    if params.sign != 1:
        raise ValueError("time_at_zeta expects sign = +1 parameters")
    u = 4.0 * params.l * (zeta + 1.0)
    tau = _tau_of(params.mu, params.l, params.p_param, u, float(direction), udot_is_sign=True)
    return params.t0 + tau


def _check_zeta(p, zeta):
    root = math.sqrt(p)
    if not (-root < zeta < root):
        raise DomainError(f"zeta = {zeta!r} outside (-sqrt(P), sqrt(P)) = ({-root}, {root})")
    if not zeta > -1.0:
        raise DomainError(f"zeta = {zeta!r} reaches the origin (zeta + 1 <= 0)")


def quadrature_oracle(params, zeta0, zeta, direction=1):
    """Elapsed time from zeta0 to zeta along a monotone stretch of the radial motion.

    Evaluates t - t0 = (mu / 2l) int dzeta / ((zeta + 1) sqrt(P - zeta^2)) with
    adaptive quadrature after zeta = sqrt(P) sin(psi), which removes the
    endpoint singularities.  ``direction`` is the sign of dzeta/dt.
    """
    _check_l(params.l)
    p = params.p_param
    _check_zeta(p, zeta0)
    _check_zeta(p, zeta)
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if zeta == zeta0:
        return 0.0
    root = math.sqrt(p)
    psi0 = math.asin(zeta0 / root)
    psi1 = math.asin(zeta / root)
    val, _ = integrate.quad(lambda psi: 1.0 / (1.0 + root * math.sin(psi)), psi0, psi1,
                            epsabs=1e-13, epsrel=1e-10, limit=200)
    return direction * params.mu / (2.0 * params.l) * val
