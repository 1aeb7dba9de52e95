"""Radiation diagnostics: outgoing-mode fits in the layer and a Fourier-Laplace probe.

The probe evaluates

    u_hat(lambda) = int_0^inf e^{-i lambda t} u(t) dt

along the rotated contour t -> T + e^{i phi}(t - T) beyond the interface, which
is where the discrete field lives.  The part beyond the integration cut is
replaced by the fitted outgoing tail c e^{i lambda_n z}, integrated in closed
form.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IllConditionedBasisError, InadmissibleBetaError, TailFitMissingError, ValidationError
from .modes import ModeSpectrum, in_cone, pml_rates
from .solver import Field

COND_LIMIT = 1e12
POLE_RADIUS = 0.1


# ---------------------------------------------------------------------------
# outgoing fit


@dataclass
class OutgoingFit:
    window: tuple[float, float]
    modes: tuple[int, ...]
    coefficients: dict[int, complex]
    residual: float
    condition: float = 1.0

    def coefficient(self, n: int) -> complex:
        return self.coefficients[n]


def default_window(T: float, R: float) -> tuple[float, float]:
    return T + 0.25 * (R - T), T + 0.75 * (R - T)


def _window_nodes(field: Field, window):
    mesh = field.mesh
    if not mesh.is_flat:
        raise ValidationError("outgoing fit needs a flat mesh in the layer")
    t = mesh.t[0]
    T1, T2 = window
    if not (mesh.T <= T1 < T2 <= mesh.R):
        raise ValidationError(f"window [{T1}, {T2}] not inside the layer ({mesh.T}, {mesh.R})")
    rows = np.flatnonzero((t >= T1 - 1e-12) & (t <= T2 + 1e-12))
    if rows.size < 2:
        raise ValidationError("window contains fewer than two mesh rows")
    return rows


def fit_outgoing(field: Field, spectrum: ModeSpectrum, phi: float, T: float | None = None,
                 window: tuple[float, float] | None = None, modes=None) -> OutgoingFit:
    """Least-squares fit against e^{i lambda_n^- (T + e^{i phi}(t - T))} e^{i (n + alpha) y}.

    Only indices resolved by the y-grid (|n| < Ny/2) take part unless ``modes``
    is given.
    """
    mesh = field.mesh
    T = mesh.T if T is None else T
    window = default_window(T, mesh.R) if window is None else tuple(window)
    rows = _window_nodes(field, window)
    if modes is None:
        lim = mesh.Ny // 2 - 1
        modes = [e.n for e in spectrum.entries if abs(e.n) <= lim]
    modes = tuple(modes)
    y = mesh.y[:-1]
    t = mesh.t[0, rows]
    z = T + np.exp(1j * phi) * (t - T)
    cols = []
    for n in modes:
        lam = spectrum.entry(n).lambda_minus
        cols.append(np.outer(np.exp(1j * (n + field.alpha) * y), np.exp(1j * lam * z)).ravel())
    A = np.stack(cols, axis=1)
    b = field.values[:-1][:, rows].ravel()
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0) or not np.all(np.isfinite(scale)):
        raise IllConditionedBasisError("basis column vanishes or overflows on the window")
    An = A / scale
    sv = np.linalg.svd(An, compute_uv=False)
    cond2 = (sv[0] / sv[-1]) ** 2 if sv[-1] > 0 else math.inf
    if cond2 > COND_LIMIT:
        raise IllConditionedBasisError(f"normal-equations condition number {cond2:.3e} > {COND_LIMIT:g}")
    x, *_ = np.linalg.lstsq(An, b, rcond=None)
    c = x / scale
    bn = float(np.linalg.norm(b))
    res = float(np.linalg.norm(An @ x - b)) / bn if bn > 0 else 0.0
    return OutgoingFit(window=(float(window[0]), float(window[1])), modes=modes,
                       coefficients={n: complex(v) for n, v in zip(modes, c)}, residual=res,
                       condition=float(cond2))


# ---------------------------------------------------------------------------
# modal traces


@dataclass
class ModalTrace:
    """u_n on real nodes: physical values for t <= T, scaled values v(t) = u(T + e^{i phi}(t - T)) beyond."""

    n: int
    t: np.ndarray
    values: np.ndarray
    T: float
    phi: float

    @classmethod
    def from_function(cls, n: int, func, t, T: float, phi: float) -> "ModalTrace":
        """Trace of an analytic ``func`` (accepting complex arguments)."""
        t = np.asarray(t, dtype=float)
        z = np.where(t <= T, t + 0j, T + np.exp(1j * phi) * (t - T))
        return cls(n=n, t=t, values=np.asarray(func(z), dtype=complex), T=T, phi=phi)

    def __add__(self, other: "ModalTrace") -> "ModalTrace":
        return ModalTrace(self.n, self.t, self.values + other.values, self.T, self.phi)

    def __rmul__(self, a) -> "ModalTrace":
        return ModalTrace(self.n, self.t, a * self.values, self.T, self.phi)


def modal_trace(field: Field, n: int, phi: float) -> ModalTrace:
    """(1/2pi) int v(y, t) e^{-i (n + alpha) y} dy by the trapezoidal rule on the y-nodes."""
    mesh = field.mesh
    if not mesh.is_flat:
        raise ValidationError("modal trace needs a flat mesh")
    y = mesh.y[:-1]
    w = np.exp(-1j * (n + field.alpha) * y) / mesh.Ny
    vals = w @ field.values[:-1]
    return ModalTrace(n=n, t=mesh.t[0].copy(), values=vals, T=mesh.T, phi=phi)


# ---------------------------------------------------------------------------
# Laplace probe


def _e1(z):
    """(e^z - 1)/z."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-3
    zb = z[~small]
    out[~small] = np.expm1(zb) / zb
    zs = z[small]
    out[small] = 1 + zs / 2 + zs ** 2 / 6 + zs ** 3 / 24
    return out


def _e2(z):
    """int_0^1 s e^{z s} ds = (e^z (z - 1) + 1)/z^2."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-2
    zb = z[~small]
    out[~small] = (np.exp(zb) * (zb - 1) + 1) / zb ** 2
    zs = z[small]
    out[small] = 0.5 + zs / 3 + zs ** 2 / 8 + zs ** 3 / 30 + zs ** 4 / 144
    return out


def _filon(lam, s, vals, origin, rot):
    """sum over segments of int e^{-i lam (origin + rot s)} v(s) rot ds, v linear in s."""
    lam = np.asarray(lam, dtype=complex)[..., None]
    a = s[:-1]
    h = np.diff(s)
    z = -1j * lam * rot * h
    e1, e2 = _e1(z), _e2(z)
    pref = h * rot * np.exp(-1j * lam * (origin + rot * a))
    return np.sum(pref * (vals[:-1] * (e1 - e2) + vals[1:] * e2), axis=-1)


@dataclass
class ProbeResult:
    lam: np.ndarray
    values: np.ndarray
    flags: np.ndarray
    analyticity_residual: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda_re", "lambda_im", "u_hat_re", "u_hat_im", "flag"])
            for lam, v, f in zip(self.lam.ravel(), self.values.ravel(), self.flags.ravel()):
                w.writerow([repr(float(lam.real)), repr(float(lam.imag)), repr(float(v.real)), repr(float(v.imag)), f])


def cone_grid(beta: float, phi: float, xi_max: float = 3.0, n: int = 41):
    """Cartesian lambda grid covering the part of the cone within distance xi_max of i beta."""
    x = np.linspace(-xi_max, 0.0, n)
    y = np.linspace(beta, beta + xi_max * math.sin(phi), n)
    X, Y = np.meshgrid(x, y, indexing="ij")
    return X + 1j * Y


def cr_defect(values: np.ndarray, lam: np.ndarray, mask: np.ndarray) -> float:
    """Max discrete Cauchy-Riemann defect over plaquettes with all corners in ``mask``."""
    if values.ndim != 2 or min(values.shape) < 2:
        return 0.0
    dx = np.diff(lam.real, axis=0)[:, :-1]
    dy = np.diff(lam.imag, axis=1)[:-1, :]
    f = values
    fx = ((f[1:, :-1] - f[:-1, :-1]) + (f[1:, 1:] - f[:-1, 1:])) / (2 * dx)
    fy = ((f[:-1, 1:] - f[:-1, :-1]) + (f[1:, 1:] - f[1:, :-1])) / (2 * dy)
    ok = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
    if not ok.any():
        return 0.0
    tiny = np.finfo(float).tiny
    d = np.abs(fx + 1j * fy) / (np.abs(fx) + np.abs(fy) + tiny)
    d = np.where((np.abs(fx) + np.abs(fy)) > 0, d, 0.0)
    return float(np.max(d[ok]))


def laplace_probe(trace: ModalTrace, beta: float, phi: float, lambda_samples, spectrum: ModeSpectrum,
                  tail=None, tau: float = math.inf, cut: float | None = None) -> ProbeResult:
    """Fourier-Laplace transform of a modal trace on samples in the cone.

    ``tail`` is an :class:`OutgoingFit` (its coefficient for ``trace.n`` is used)
    or a complex coefficient ``c`` of c e^{i lambda_n^- z}.  Numerical
    integration runs up to ``cut`` (default: end of the fit window, else the
    last node); the rest comes from the tail in closed form.
    """
    rates = pml_rates(spectrum, phi, tau)
    if beta not in rates.beta_range:
        raise InadmissibleBetaError(f"beta={beta} outside the admissible range {rates.beta_range}")
    if tail is None:
        raise TailFitMissingError("truncated trace needs a fitted outgoing tail")
    if isinstance(tail, OutgoingFit):
        c = tail.coefficients.get(trace.n, 0.0)
        if cut is None:
            cut = tail.window[1]
    else:
        c = complex(tail)
    lam_n = spectrum.entry(trace.n).lambda_minus
    T = trace.T
    t = trace.t
    if cut is None:
        cut = float(t[-1])
    if cut < T:
        raise ValidationError("integration cut below the interface")
    if not np.any(np.abs(t - T) <= 1e-12):
        raise ValidationError("the interface T must be a node of the trace")
    cut = float(t[t <= cut + 1e-12][-1])  # snap to a node

    lam = np.asarray(lambda_samples, dtype=complex)
    flags = np.full(lam.shape, "ok", dtype=object)
    inside = in_cone(lam, beta, phi)
    flags[~inside] = "outside_cone"
    poles = np.array([e.lambda_minus for e in spectrum.entries])
    near = np.min(np.abs(lam[..., None] - poles), axis=-1) < POLE_RADIUS
    flags[near & inside] = "near_singularity"

    values = np.full(lam.shape, np.nan + 0j)
    live = inside
    if np.any(live):
        lv = lam[live]
        phys = (t >= 0) & (t <= T + 1e-12)
        out = np.zeros(lv.shape, dtype=complex)
        if np.count_nonzero(phys) >= 2:
            out += _filon(lv, t[phys], trace.values[phys], 0.0, 1.0)
        lay = (t >= T - 1e-12) & (t <= cut + 1e-12)
        rot = np.exp(1j * phi)
        if np.count_nonzero(lay) >= 2:
            s = t[lay] - T
            out += _filon(lv, s, trace.values[lay], T, rot)
        zc = T + rot * (cut - T)
        if c != 0:
            out += 1j * c * np.exp(1j * (lam_n - lv) * zc) / (lam_n - lv)
        values[live] = out
    ok = flags == "ok"
    resid = cr_defect(values, lam, ok) if lam.ndim == 2 else 0.0
    if np.all(values[ok] == 0):
        resid = 0.0
    return ProbeResult(lam=lam, values=values, flags=flags, analyticity_residual=resid)
