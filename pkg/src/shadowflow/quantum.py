"""One-degree-of-freedom effective quantum Hamiltonian and a magnetic-Schroedinger check.

The scalar part evaluates the order-hbar adiabatic expansion in terms of the
two invariants G = |grad h|^2 / h^2 and D = lap h / h (flat background):

    H = h Jbar + hbar [(D - 3G)/4 Jbar^2 + (D - G)/16 + I1] + O(hbar^2)
    h_eff = h/2 + hbar [D/8 - G/4 + I1]

The operator part discretizes H = (1/2 hbar) |-i hbar grad - A|^2 on a
Dirichlet box, with curl A = -B so that the orientation matches the frozen
symplectic form (omega_12 = -1).  Magnetic coupling enters through link phases
(Peierls substitution), which keeps the lattice operator gauge covariant.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import linalg as sla

from .errors import BandIdentificationAmbiguous, GridTooCoarse, SolverNoConvergence
from .geometry import DEFAULT_H_MIN, scalar_invariants_at

WALL_TOL = 1e-6
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)
_GL_S = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


# scalar invariants -------------------------------------------------------------

def i1_standard(h, x, h_min=DEFAULT_H_MIN):
    """I1 = G/4 - D/8, the choice that cancels the order-hbar shift of h_eff."""
    inv = scalar_invariants_at(h, x, h_min)
    return 0.25 * inv["grad_norm_sq_over_h_sq"] - 0.125 * inv["laplacian_over_h"]


def i2_hook(h, x):
    """Placeholder for higher invariants; contributes nothing."""
    return 0.0


def _resolve_i1(h, x, i1, h_min):
    if i1 == "standard":
        return i1_standard(h, x, h_min)
    if i1 == "zero" or i1 is None:
        return 0.0
    if callable(i1):
        return float(i1(x))
    return float(i1)


def order_hbar_coefficient(h, x, i1="standard", h_min=DEFAULT_H_MIN):
    inv = scalar_invariants_at(h, x, h_min)
    return (0.125 * inv["laplacian_over_h"] - 0.25 * inv["grad_norm_sq_over_h_sq"]
            + _resolve_i1(h, x, i1, h_min))


def effective_hamiltonian_value(h, hbar, x, i1="standard", h_min=DEFAULT_H_MIN):
    """h/2 + hbar (D/8 - G/4 + I1); ``i1`` is "standard", "zero", a number or a callable."""
    return 0.5 * h.value(x) + hbar * order_hbar_coefficient(h, x, i1, h_min)


@dataclass(frozen=True)
class EffectiveTerms:
    """Coefficients of the adiabatic expansion at one point (hbar factored out)."""

    linear: float
    jbar2: float
    constant: float
    i1: float
    hbar: float

    @property
    def order_hbar(self):
        """Order-hbar coefficient of h_eff, i.e. the expansion at Jbar = 1/2 minus h/2, over hbar."""
        return 0.25 * self.jbar2 + self.constant + self.i1

    def value(self, jbar):
        return self.linear * jbar + self.hbar * (self.jbar2 * jbar ** 2 + self.constant + self.i1)

    def as_tuple(self):
        return self.linear, self.jbar2, self.constant


def adiabatic_expansion_terms(h, hbar, x, i1="standard", h_min=DEFAULT_H_MIN):
    inv = scalar_invariants_at(h, x, h_min)
    G, D = inv["grad_norm_sq_over_h_sq"], inv["laplacian_over_h"]
    return EffectiveTerms(linear=h.value(x), jbar2=0.25 * (D - 3.0 * G), constant=(D - G) / 16.0,
                          i1=_resolve_i1(h, x, i1, h_min), hbar=float(hbar))


# magnetic operator --------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Square box [-L, L]^2 with N interior points per axis and Dirichlet walls."""

    L: float
    N: int
    hbar: float

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.N < 64:
            raise ValueError("N must be at least 64")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")

    @property
    def spacing(self):
        return 2.0 * self.L / (self.N + 1)

    @property
    def axis(self):
        return -self.L + self.spacing * np.arange(1, self.N + 1)


def _field_values(B, px, py):
    pts = np.stack([np.ravel(px), np.ravel(py)], axis=1)
    return np.asarray(B.value(pts)).reshape(np.shape(px))


def _potential(B, px, py, gauge):
    """(A1, A2) with curl A = dA2/dx1 - dA1/dx2 = -B."""
    if gauge == "symmetric":
        # radial (Poincare) gauge: A = (x2, -x1) int_0^1 s B(s x) ds
        f = sum(w * s * _field_values(B, s * px, s * py) for s, w in zip(_GL_S, _GL_W))
        return f * py, -f * px
    if gauge == "landau":
        # A1 = 0, A2 = -int_0^x1 B(s, x2) ds
        f = sum(w * _field_values(B, s * px, py) for s, w in zip(_GL_S, _GL_W))
        return np.zeros_like(px), -f * px
    raise ValueError(f"unknown gauge {gauge!r}")


def _link_phase(B, x0, y0, dx, dy, gauge, hbar):
    tot = 0.0
    for s, w in zip(_GL_S, _GL_W):
        a1, a2 = _potential(B, x0 + s * dx, y0 + s * dy, gauge)
        tot = tot + w * (a1 * dx + a2 * dy)
    return tot / hbar


def assemble_magnetic_operator(B, grid, gauge="symmetric"):
    """Sparse Hermitian matrix of (1/2 hbar)|-i hbar grad - A|^2 on the grid."""
    if B.n != 1:
        raise ValueError("the magnetic operator is implemented for one degree of freedom")
    N, a, hbar = grid.N, grid.spacing, grid.hbar
    x = grid.axis
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    idx = np.arange(N * N).reshape(N, N)
    c = hbar / (2.0 * a * a)
    rows, cols, vals = [idx.ravel()], [idx.ravel()], [np.full(N * N, 4.0 * c, dtype=complex)]
    for sl_from, sl_to, dx, dy in (
        ((slice(0, -1), slice(None)), (slice(1, None), slice(None)), a, 0.0),
        ((slice(None), slice(0, -1)), (slice(None), slice(1, None)), 0.0, a),
    ):
        phase = _link_phase(B, X1[sl_from], X2[sl_from], dx, dy, gauge, hbar).ravel()
        i, j = idx[sl_from].ravel(), idx[sl_to].ravel()
        hop = -c * np.exp(-1j * phase)
        rows += [i, j]
        cols += [j, i]
        vals += [hop, np.conj(hop)]
    H = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N * N, N * N))
    return H


def _check_resolution(B, grid):
    x = grid.axis
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    b_max = float(np.max(np.abs(_field_values(B, X1, X2))))
    if b_max > 0:
        limit = math.sqrt(grid.hbar / b_max) / 4.0
        if grid.spacing >= limit:
            raise GridTooCoarse(f"grid spacing {grid.spacing:.4g} does not resolve the magnetic "
                                f"length: need < {limit:.4g}")


@dataclass
class SpectrumReport:
    hbar: float
    L: float
    N: int
    gauge: str
    eigenvalues: np.ndarray
    bands: list
    wall_amplitude: np.ndarray
    predicted: list = field(default_factory=list)
    rel_errors: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "hbar": self.hbar,
            "grid": {"L": self.L, "N": self.N},
            "gauge": self.gauge,
            "eigenvalues": [float(e) for e in self.eigenvalues],
            "bands": [int(b) for b in self.bands],
            "wall_amplitude": [float(w) for w in self.wall_amplitude],
            "predicted": [float(p) for p in self.predicted],
            "rel_errors": [float(r) for r in self.rel_errors],
            **self.notes,
        }


def label_bands(eigenvalues, ratio=2.0):
    """Split sorted eigenvalues at the largest gap: 0 below, 1 above.

    Raises BandIdentificationAmbiguous unless the largest gap exceeds the
    runner-up by ``ratio``.
    """
    ev = np.sort(np.asarray(eigenvalues, dtype=float))
    if ev.size < 2:
        return [0] * ev.size
    gaps = np.diff(ev)
    order = np.argsort(gaps)[::-1]
    if gaps.size > 1 and gaps[order[0]] < ratio * gaps[order[1]]:
        raise BandIdentificationAmbiguous(
            f"largest gap {gaps[order[0]]:.3g} does not dominate the next {gaps[order[1]]:.3g}")
    cut = order[0]
    return [0 if i <= cut else 1 for i in range(ev.size)]


def magnetic_spectrum(B, grid, k, gauge="symmetric", sigma=None, wall_check="report", ncv=None,
                      tol=0.0, maxiter=None):
    """Lowest eigenvalues of the magnetic operator via shift-invert Lanczos.

    Shift-invert Lanczos stalls when asked for a few members of a highly
    degenerate cluster, so for a constant field the solve is widened to
    cover the whole lowest Landau band plus part of the next one (sigma = 0.9 b);
    the report then holds more than ``k`` eigenvalues.  Otherwise sigma
    defaults to 0, below the positive spectrum.  ``wall_check="raise"`` turns a
    wall amplitude above 1e-6 of the maximum into GridTooCoarse; ``"report"``
    only records it.
    """
    k_solve = k
    if is_constant_field(B):
        b = abs(float(B.coefficients.sum()))
        k_solve = max(k, int(math.ceil(1.2 * landau_degeneracy(b, grid))) + 8)
        if sigma is None:
            sigma = 0.9 * b
    if sigma is None:
        sigma = 0.0
    k = k_solve
    _check_resolution(B, grid)
    H = assemble_magnetic_operator(B, grid, gauge).tocsc()
    if ncv is None:
        ncv = min(H.shape[0] - 1, max(2 * k + 1, 20))
    try:
        vals, vecs = sla.eigsh(H, k=k, sigma=sigma, which="LM", ncv=ncv, tol=tol, maxiter=maxiter)
    except sla.ArpackNoConvergence as exc:
        raise SolverNoConvergence(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(vals.real)
    vals = vals.real[order]
    vecs = vecs[:, order]
    N = grid.N
    amps = np.abs(vecs).reshape(N, N, -1)
    ring = np.concatenate([amps[0], amps[-1], amps[:, 0], amps[:, -1]], axis=0)
    wall = ring.max(axis=0) / amps.reshape(N * N, -1).max(axis=0)
    if wall_check == "raise" and np.any(wall > WALL_TOL):
        raise GridTooCoarse(f"eigenstates reach the wall (max relative amplitude {wall.max():.2e})")
    if is_constant_field(B):
        bands = landau_band_labels(vals, float(B.coefficients.sum()))
    else:
        try:
            bands = label_bands(vals)
        except BandIdentificationAmbiguous:
            bands = [-1] * vals.size
    return SpectrumReport(hbar=grid.hbar, L=grid.L, N=grid.N, gauge=gauge, eigenvalues=vals,
                          bands=bands, wall_amplitude=wall)


def landau_degeneracy(b, grid):
    """Flux through the box over 2 pi hbar."""
    return abs(b) * (2.0 * grid.L) ** 2 / (2.0 * math.pi * grid.hbar)


def landau_levels(b, count):
    return [abs(b) * (n + 0.5) for n in range(count)]


def landau_band_labels(eigenvalues, b, rel_tol=0.01):
    """Band index n for each eigenvalue: bulk level b(n + 1/2) or an edge state above it."""
    ev = np.asarray(eigenvalues, dtype=float) / abs(b)
    return [int(max(0, math.floor(e - 0.5 + rel_tol))) for e in ev]


def is_constant_field(h):
    return h.kind == "polynomial" and np.all(h.exponents == 0)


def slow_levels(h, hbar, count):
    """Half the spectrum of h quantized with [Q, P] = i hbar, for quadratic h."""
    if h.kind not in ("harmonic", "shifted-harmonic") or h.n != 1:
        raise ValueError("slow-level prediction is available for (shifted) harmonic h only")
    return [0.5 * (hbar * (m + 0.5) + h.shift) for m in range(count)]


def band_compare(report, h, hbar, levels=3):
    """Relative errors of the lowest-band eigenvalues against the slow-level prediction.

    For constant B the Landau ladder b(n + 1/2) is compared instead, band by
    band.  Fills ``report.predicted`` and ``report.rel_errors`` and returns the
    errors; the alternative normalization (prediction times 2) is stored in
    ``report.notes``.
    """
    ev = np.asarray(report.eigenvalues, dtype=float)
    if is_constant_field(h):
        b = float(h.coefficients.sum())
        bands = landau_band_labels(ev, b)
        pred = np.array([abs(b) * (k + 0.5) for k in bands])
        err = np.abs(ev - pred) / pred
        report.predicted = list(pred)
        report.rel_errors = list(err)
        report.notes["comparison"] = "landau"
        return list(err)
    if ev.size < levels:
        raise BandIdentificationAmbiguous(f"need {levels} levels, report has {ev.size}")
    pred = np.array(slow_levels(h, hbar, levels))
    err = np.abs(ev[:levels] - pred) / pred
    alt = 2.0 * pred
    report.predicted = list(pred)
    report.rel_errors = list(err)
    report.notes.update({
        "comparison": "slow_band",
        "predicted_times_two": list(alt),
        "rel_errors_times_two": list(np.abs(ev[:levels] - alt) / alt),
    })
    return list(err)
