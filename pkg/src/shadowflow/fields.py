"""Positive Hamiltonians h(xi) on R^(2n).

Every field exposes value / gradient / hessian / laplacian.  The value and
gradient also exist as flat kernels (``field_value``, ``field_gradient``)
that the integrators call from inside compiled loops, so a field is
described to them by plain arrays (see ``ScalarField.kernel_args``).
"""

from dataclasses import dataclass, field

import numpy as np

from ._accel import njit

KIND_HARMONIC = 0
KIND_POLYNOMIAL = 1
KIND_PENDULUM = 2

_KIND_CODES = {
    "harmonic": KIND_HARMONIC,
    "shifted-harmonic": KIND_HARMONIC,
    "polynomial": KIND_POLYNOMIAL,
    "pendulum-offset": KIND_PENDULUM,
}


@njit
def field_value(kind, params, exps, coefs, x):
    dim = x.shape[0]
    if kind == KIND_HARMONIC:
        s = 0.0
        for i in range(dim):
            s += x[i] * x[i]
        return 0.5 * s + params[0]
    if kind == KIND_PENDULUM:
        n = dim // 2
        s = params[0]
        for i in range(n):
            s += 0.5 * x[n + i] * x[n + i] + params[1] * (1.0 - np.cos(x[i]))
        return s
    s = 0.0
    for t in range(coefs.shape[0]):
        term = coefs[t]
        for d in range(dim):
            e = exps[t, d]
            if e != 0:
                term *= x[d] ** e
        s += term
    return s


@njit
def _analytic_gradient(kind, params, exps, coefs, x, out):
    dim = x.shape[0]
    if kind == KIND_HARMONIC:
        for i in range(dim):
            out[i] = x[i]
        return
    if kind == KIND_PENDULUM:
        n = dim // 2
        for i in range(n):
            out[i] = params[1] * np.sin(x[i])
            out[n + i] = x[n + i]
        return
    for d in range(dim):
        out[d] = 0.0
    for t in range(coefs.shape[0]):
        for d in range(dim):
            e = exps[t, d]
            if e == 0:
                continue
            term = coefs[t] * e * x[d] ** (e - 1)
            for k in range(dim):
                if k != d and exps[t, k] != 0:
                    term *= x[k] ** exps[t, k]
            out[d] += term


@njit
def field_gradient(kind, params, exps, coefs, fd_step, x, out):
    """Fill ``out`` with grad h and return h.

    ``fd_step > 0`` switches to fourth-order central differences with step
    ``fd_step * max(1, |x_i|)`` per coordinate.
    """
    h = field_value(kind, params, exps, coefs, x)
    if fd_step <= 0.0:
        _analytic_gradient(kind, params, exps, coefs, x, out)
        return h
    y = x.copy()
    for d in range(x.shape[0]):
        step = fd_step * max(1.0, abs(x[d]))
        y[d] = x[d] + 2.0 * step
        f2p = field_value(kind, params, exps, coefs, y)
        y[d] = x[d] + step
        f1p = field_value(kind, params, exps, coefs, y)
        y[d] = x[d] - step
        f1m = field_value(kind, params, exps, coefs, y)
        y[d] = x[d] - 2.0 * step
        f2m = field_value(kind, params, exps, coefs, y)
        y[d] = x[d]
        out[d] = (-f2p + 8.0 * f1p - 8.0 * f1m + f2m) / (12.0 * step)
    return h


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A Hamiltonian on the 2n-dimensional phase space.

    Use the constructors (``harmonic``, ``shifted_harmonic``, ``polynomial``,
    ``pendulum_offset``, ``constant``) rather than the raw fields.
    """

    kind: str
    n: int = 1
    shift: float = 0.0
    strength: float = 1.0
    exponents: np.ndarray = field(default=None, repr=False)
    coefficients: np.ndarray = field(default=None, repr=False)
    fd_step: float = 0.0

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.kind == "polynomial":
            exps = np.atleast_2d(np.asarray(self.exponents, dtype=np.int64))
            coefs = np.asarray(self.coefficients, dtype=np.float64).ravel()
            if exps.shape != (coefs.size, 2 * self.n):
                raise ValueError(
                    f"polynomial table must have {2 * self.n} exponents per term, got shape {exps.shape}"
                )
            if np.any(exps < 0):
                raise ValueError("polynomial exponents must be nonnegative")
        else:
            exps = np.zeros((0, 2 * self.n), dtype=np.int64)
            coefs = np.zeros(0)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "coefficients", coefs)

    def _key(self):
        return (self.kind, self.n, self.shift, self.strength, self.fd_step,
                self.exponents.tobytes(), self.exponents.shape, self.coefficients.tobytes())

    def __eq__(self, other):
        if not isinstance(other, ScalarField):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    # constructors -----------------------------------------------------------

    @classmethod
    def harmonic(cls, n=1):
        """h = (|q|^2 + |p|^2) / 2."""
        return cls("harmonic", n=n)

    @classmethod
    def shifted_harmonic(cls, shift, n=1):
        """h = (|q|^2 + |p|^2) / 2 + shift; shift > 0 makes the origin regular."""
        if shift <= 0:
            raise ValueError("shift must be positive")
        return cls("shifted-harmonic", n=n, shift=float(shift))

    @classmethod
    def polynomial(cls, terms, n=1, fd_step=0.0):
        """Sum of monomials; ``terms`` is a list of (exponent-tuple, coefficient)."""
        exps = [tuple(e) for e, _ in terms]
        coefs = [float(c) for _, c in terms]
        return cls("polynomial", n=n, exponents=np.array(exps, dtype=np.int64).reshape(len(terms), 2 * n),
                   coefficients=np.array(coefs), fd_step=fd_step)

    @classmethod
    def constant(cls, value, n=1):
        return cls.polynomial([((0,) * (2 * n), value)], n=n)

    @classmethod
    def pendulum_offset(cls, offset=1.0, strength=1.0, n=1):
        """h = sum_i [p_i^2 / 2 + strength (1 - cos q_i)] + offset."""
        if offset <= 0:
            raise ValueError("offset must be positive")
        return cls("pendulum-offset", n=n, shift=float(offset), strength=float(strength))

    # evaluation -------------------------------------------------------------

    @property
    def dim(self):
        return 2 * self.n

    @property
    def kind_code(self):
        return _KIND_CODES[self.kind]

    def kernel_args(self):
        """(kind, params, exponents, coefficients, fd_step) for the compiled kernels."""
        params = np.array([self.shift, self.strength], dtype=np.float64)
        return self.kind_code, params, self.exponents, self.coefficients, float(self.fd_step)

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected points with {self.dim} coordinates, got shape {x.shape}")
        return x

    def value(self, x):
        x = self._check(x)
        kind, params, exps, coefs, _ = self.kernel_args()
        if x.ndim == 1:
            return float(field_value(kind, params, exps, coefs, x))
        flat = x.reshape(-1, self.dim)
        out = np.array([field_value(kind, params, exps, coefs, row) for row in flat])
        return out.reshape(x.shape[:-1])

    def __call__(self, x):
        return self.value(x)

    def gradient(self, x):
        x = self._check(x)
        kind, params, exps, coefs, fd = self.kernel_args()
        flat = np.atleast_2d(x).reshape(-1, self.dim)
        out = np.empty_like(flat)
        for i, row in enumerate(flat):
            field_gradient(kind, params, exps, coefs, fd, np.ascontiguousarray(row), out[i])
        return out.reshape(x.shape)

    def hessian(self, x):
        x = self._check(x)
        if x.ndim != 1:
            return np.array([self.hessian(row) for row in x.reshape(-1, self.dim)]).reshape(
                x.shape + (self.dim,))
        dim, n = self.dim, self.n
        if self.fd_step > 0:
            return self._fd_hessian(x)
        if self.kind in ("harmonic", "shifted-harmonic"):
            return np.eye(dim)
        if self.kind == "pendulum-offset":
            diag = np.concatenate([self.strength * np.cos(x[:n]), np.ones(n)])
            return np.diag(diag)
        hess = np.zeros((dim, dim))
        for e, c in zip(self.exponents, self.coefficients):
            for a in range(dim):
                for b in range(dim):
                    ee = e.copy()
                    fac = c * ee[a]
                    ee[a] -= 1
                    fac *= ee[b]
                    ee[b] -= 1
                    if fac == 0.0:
                        continue
                    hess[a, b] += fac * np.prod(x ** np.maximum(ee, 0))
        return hess

    def _fd_hessian(self, x):
        dim = self.dim
        hess = np.empty((dim, dim))
        for d in range(dim):
            step = self.fd_step * max(1.0, abs(x[d]))
            e = np.zeros(dim)
            e[d] = step
            g = [self.gradient(x + k * e) for k in (2, 1, -1, -2)]
            hess[:, d] = (-g[0] + 8 * g[1] - 8 * g[2] + g[3]) / (12 * step)
        return 0.5 * (hess + hess.T)

    def laplacian(self, x):
        hess = self.hessian(x)
        return np.trace(hess, axis1=-2, axis2=-1)

    def to_table(self):
        """Plain-data description, used when echoing configs."""
        out = {"kind": self.kind, "n": self.n}
        if self.kind == "shifted-harmonic":
            out["shift"] = self.shift
        elif self.kind == "pendulum-offset":
            out.update(offset=self.shift, strength=self.strength)
        elif self.kind == "polynomial":
            out["terms"] = [[list(map(int, e)), float(c)] for e, c in zip(self.exponents, self.coefficients)]
            if self.fd_step:
                out["fd_step"] = self.fd_step
        return out
