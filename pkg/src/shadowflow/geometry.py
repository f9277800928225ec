"""Symplectic structure, conformal phase-space metric and derived tensors.

Index conventions are frozen once for the whole package:
omega = [[0, -I], [I, 0]] in canonical coordinates xi = (q, p),
omega_ik omegabar^jk = delta_i^j, and {xi^i, xi^j} = omegabar^ji.
With this block form omegabar is numerically equal to omega.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import MetricSingular, UnsupportedDimension
from .fields import ScalarField

DEFAULT_H_MIN = 1e-9


def as_point(x, n=None):
    """Validate a phase-space point: 2n finite coordinates."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0 or x.size % 2:
        raise ValueError(f"phase-space point needs an even number of coordinates, got shape {x.shape}")
    if n is not None and x.size != 2 * n:
        raise ValueError(f"expected {2 * n} coordinates, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("phase-space point has non-finite entries")
    return x


@dataclass(frozen=True)
class SymplecticStructure:
    """Constant canonical symplectic form on R^(2n)."""

    n: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")

    @property
    def omega(self):
        n = self.n
        eye = np.eye(n)
        zero = np.zeros((n, n))
        return np.block([[zero, -eye], [eye, zero]])

    @property
    def omega_bar(self):
        # omega_ik omegabar^jk = delta_i^j  <=>  omega @ omegabar.T = I
        return np.linalg.inv(self.omega).T

    def bracket_matrix(self):
        """Matrix of {xi^i, xi^j} = omegabar^ji."""
        return self.omega_bar.T


@dataclass(frozen=True)
class MetricField:
    """g_ij = gamma_ij / h with constant symmetric unimodular gamma."""

    h: ScalarField
    gamma: np.ndarray = field(default=None)
    h_min: float = DEFAULT_H_MIN

    def __post_init__(self):
        dim = self.h.dim
        gamma = np.eye(dim) if self.gamma is None else np.array(self.gamma, dtype=np.float64)
        if gamma.shape != (dim, dim):
            raise ValueError(f"gamma must be {dim}x{dim}")
        if not np.allclose(gamma, gamma.T, rtol=0, atol=1e-14):
            raise ValueError("gamma must be symmetric")
        gamma = 0.5 * (gamma + gamma.T)  # remove rounding asymmetry so Gamma^k_ij = Gamma^k_ji exactly
        if abs(np.linalg.det(gamma) - 1.0) > 1e-12:
            raise ValueError(f"gamma must have unit determinant, got {np.linalg.det(gamma)!r}")
        if np.any(np.linalg.eigvalsh(gamma) <= 0):
            raise ValueError("gamma must be positive definite")
        if not self.h_min >= 0:
            raise ValueError("h_min must be nonnegative")
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        gi = np.linalg.inv(gamma)
        gi.setflags(write=False)
        object.__setattr__(self, "_gamma_inv", gi)

    @property
    def n(self):
        return self.h.n

    @property
    def gamma_inv(self):
        return self._gamma_inv

    def checked_h(self, x):
        """h(x), raising MetricSingular at or below the floor."""
        hx = self.h.value(x)
        if not hx > self.h_min:
            raise MetricSingular(f"h = {hx:.3e} <= h_min = {self.h_min:.1e}", point=np.array(x))
        return hx


def metric_at(m, x):
    """Return (g, g_inv, det g) at x."""
    x = as_point(x, m.n)
    hx = m.checked_h(x)
    g = m.gamma / hx
    g_inv = m.gamma_inv * hx
    det = hx ** (-2 * m.n)  # det gamma = 1
    return g, g_inv, det


def christoffel_at(m, x):
    """Gamma^k_ij as an array indexed [k, i, j].

    For g = gamma / h with constant gamma and a = grad h / h,
    Gamma^k_ij = -(delta^k_j a_i + delta^k_i a_j - (gamma^-1 a)^k gamma_ij) / 2.
    """
    x = as_point(x, m.n)
    hx = m.checked_h(x)
    a = m.h.gradient(x) / hx
    eye = np.eye(x.size)
    ga = m.gamma_inv @ a
    gam = -0.5 * (np.einsum("kj,i->kij", eye, a) + np.einsum("ki,j->kij", eye, a)
                  - np.einsum("k,ij->kij", ga, m.gamma))
    return gam


def canonical_one_form_at(s, x, gauge="symmetric"):
    """theta with d theta = omega: standard (p, 0) or symmetric -omega xi / 2."""
    x = as_point(x, s.n)
    if gauge == "standard":
        return np.concatenate([x[s.n:], np.zeros(s.n)])
    if gauge == "symmetric":
        return -0.5 * s.omega @ x
    raise ValueError(f"unknown gauge {gauge!r}")


def scalar_invariants_at(h, x, h_min=DEFAULT_H_MIN):
    """|grad h|^2 / h^2 and lap h / h in the flat Cartesian background."""
    x = as_point(x, h.n)
    hx = h.value(x)
    if not hx > h_min:
        raise MetricSingular(f"h = {hx:.3e} <= h_min = {h_min:.1e}", point=x)
    grad = h.gradient(x)
    return {
        "grad_norm_sq_over_h_sq": float(grad @ grad) / hx ** 2,
        "laplacian_over_h": float(h.laplacian(x)) / hx,
    }


def symplectic_norm_at(m, s, x):
    """sqrt(omega_ij g^ik g^jl omega_kl / 2); equals h for n = 1."""
    if m.n != 1 or s.n != 1:
        raise UnsupportedDimension("the symplectic norm identity is only established for n = 1")
    _, g_inv, _ = metric_at(m, x)
    w = s.omega
    val = 0.5 * np.einsum("ij,ik,jl,kl->", w, g_inv, g_inv, w)
    return float(np.sqrt(val))
