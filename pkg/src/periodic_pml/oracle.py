"""Reference solutions and discrete norms.

Two references are available:

* :func:`exact_solution` - closed-form outgoing solution for a flat bottom,
  ``q = 0`` and compactly supported modal sources, built from the 1D Green's
  function of ``u'' + lambda^2 u = f`` with ``u(g0) = 0``;
* :func:`reference_solve_1d` - a fine linear-element solve of each excited
  mode (any y-independent potential), with a long PML layer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import RegionMismatchError, SolveError, ValidationError
from .fem import assemble_1d
from .model import BoxProfile, BumpProfile, modal_source_profile, potential_eval, potential_scaled_eval
from .modes import lambda_minus
from .solver import Field

# ---------------------------------------------------------------------------
# closed-form modal solution


@dataclass(frozen=True)
class ModalSolution1D:
    """Outgoing solution of U'' + lam^2 U = amplitude * f(t), U(g0) = 0, for compact f."""

    n: int
    lam: complex
    g0: float
    profile: BumpProfile | BoxProfile
    amplitude: complex = 1.0

    @property
    def support_end(self) -> float:
        return self.profile.support_end

    def _moments(self, t):
        """(int_{g0}^t phi1 f, int_t^inf phi2 f) with phi1 = sin(lam s), phi2 = e^{i lam s}, s = t - g0."""
        lam, g0, p = self.lam, self.g0, self.profile
        lo, hi = p.t0, p.t1
        i1 = (np.exp(-1j * lam * g0) * p.exp_moment(lam, lo, t)
              - np.exp(1j * lam * g0) * p.exp_moment(-lam, lo, t)) / 2j
        i2 = np.exp(-1j * lam * g0) * p.exp_moment(lam, t, hi)
        return i1, i2

    @property
    def tail_coefficient(self) -> complex:
        """c with U(t) = c e^{i lam t} beyond the support."""
        i1, _ = self._moments(np.asarray(self.support_end))
        return complex(self.amplitude * i1 / (-self.lam) * np.exp(-1j * self.lam * self.g0))

    def sample(self, t_max: float, n: int = 2001):
        """(t, U(t)) on a uniform grid over [g0, t_max]."""
        t = np.linspace(self.g0, t_max, n)
        return t, self(t)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = t - self.g0
        i1, i2 = self._moments(t)
        W = -self.lam
        val = (np.exp(1j * self.lam * s) * i1 + np.sin(self.lam * s) * i2) / W
        return self.amplitude * val

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        s = t - self.g0
        i1, i2 = self._moments(t)
        W = -self.lam
        val = (1j * self.lam * np.exp(1j * self.lam * s) * i1 + self.lam * np.cos(self.lam * s) * i2) / W
        return self.amplitude * val

    def scaled(self, t, T: float, phi: float):
        """U(T + e^{i phi}(t - T)) for t >= T (pure outgoing tail)."""
        z = T + np.exp(1j * phi) * (np.asarray(t, dtype=float) - T)
        return self.tail_coefficient * np.exp(1j * self.lam * z)

    def scaled_derivative(self, t, T: float, phi: float):
        """d/dt of :meth:`scaled` (chain rule includes e^{i phi})."""
        return 1j * self.lam * np.exp(1j * phi) * self.scaled(t, T, phi)


def exact_modal_solution(n: int, k: float, alpha: float, g0: float, profile, amplitude=1.0) -> ModalSolution1D:
    if not isinstance(profile, (BumpProfile, BoxProfile)):
        raise ValidationError(f"closed-form oracle needs a compact source profile, got {profile.kind!r}")
    if profile.t0 < g0:
        raise ValidationError("source support reaches below the bottom boundary")
    return ModalSolution1D(n=n, lam=complex(lambda_minus(k, alpha, n)), g0=g0,
                           profile=profile, amplitude=complex(amplitude))


class ExactSolution:
    """v(y, t): the untruncated PML solution (physical below T, scaled beyond)."""

    def __init__(self, modes: list[ModalSolution1D], alpha: float, T: float, phi: float):
        self.modes = modes
        self.alpha = alpha
        self.T = T
        self.phi = phi

    def _parts(self, y, t, deriv: bool):
        y = np.asarray(y, dtype=float)
        t = np.asarray(t, dtype=float)
        y, t = np.broadcast_arrays(y, t)
        below = t <= self.T
        val = np.zeros(t.shape, dtype=complex)
        dy = np.zeros(t.shape, dtype=complex)
        dt = np.zeros(t.shape, dtype=complex)
        for m in self.modes:
            ey = np.exp(1j * (m.n + self.alpha) * y)
            u = np.empty(t.shape, dtype=complex)
            u[below] = m(t[below])
            u[~below] = m.scaled(t[~below], self.T, self.phi)
            val += u * ey
            if deriv:
                du = np.empty(t.shape, dtype=complex)
                du[below] = m.derivative(t[below])
                du[~below] = m.scaled_derivative(t[~below], self.T, self.phi)
                dy += 1j * (m.n + self.alpha) * u * ey
                dt += du * ey
        return val, dy, dt

    def __call__(self, y, t):
        return self._parts(y, t, False)[0]

    def gradient(self, y, t):
        _, dy, dt = self._parts(y, t, True)
        return dy, dt


def exact_solution(config, phi: float | None = None) -> ExactSolution:
    """Closed-form reference for configs with flat bottom, q = 0 and compact modal sources."""
    if not config.geometry.is_constant:
        raise ValidationError("closed-form oracle needs a flat bottom")
    if not config.potential.is_zero:
        raise ValidationError("closed-form oracle needs q = 0")
    g0 = config.geometry.constant
    modes = []
    for c in config.source.components:
        if c.profile.support_end > config.T:
            raise ValidationError("closed-form oracle needs sources supported below T")
        modes.append(exact_modal_solution(c.n, config.k, config.alpha, g0, c.profile, c.amplitude))
    return ExactSolution(modes, config.alpha, config.T, config.phi if phi is None else phi)


def has_exact_solution(config) -> bool:
    try:
        exact_solution(config)
    except ValidationError:
        return False
    return True


# ---------------------------------------------------------------------------
# 1D high-resolution reference


@dataclass(frozen=True)
class ModalReference:
    """Piecewise-linear modal profile on a fine t-grid (PML coordinates beyond T)."""

    n: int
    t: np.ndarray
    values: np.ndarray
    T: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.interp(t, self.t, self.values.real) + 1j * np.interp(t, self.t, self.values.imag)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        slopes = np.diff(self.values) / np.diff(self.t)
        idx = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]


@dataclass
class Reference1D:
    """Sum over modes of a fine 1D solve times e^{i(n + alpha) y}."""

    modes: list[ModalReference]
    alpha: float
    R: float
    h: float
    richardson: float = math.nan
    cauchy_R: float = math.nan

    def __call__(self, y, t):
        y, t = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(t, dtype=float))
        out = np.zeros(t.shape, dtype=complex)
        for m in self.modes:
            out += m(t) * np.exp(1j * (m.n + self.alpha) * y)
        return out

    def gradient(self, y, t):
        y, t = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(t, dtype=float))
        dy = np.zeros(t.shape, dtype=complex)
        dt = np.zeros(t.shape, dtype=complex)
        for m in self.modes:
            ey = np.exp(1j * (m.n + self.alpha) * y)
            dy += 1j * (m.n + self.alpha) * m(t) * ey
            dt += m.derivative(t) * ey
        return dy, dt


def _modal_coefficients(config, n: int, phi: float):
    pot = config.potential
    T = config.T
    if pot.is_zero:
        qp = qs = None
    else:
        yc = pot.y_factor.constant

        def qp(t):
            return potential_eval(pot, 0.0, t) if yc else 0 * t

        def qs(t):
            return potential_scaled_eval(pot, 0.0, t, T, phi)
    comps = [c for c in config.source.components if c.n == n]
    fp = modal_source_profile(config.source, n)

    def fs(t):
        out = np.zeros(np.shape(t), dtype=complex)
        for c in comps:
            out = out + c.amplitude * c.profile.scaled(t, T, phi)
        return out
    return qp, qs, fp, fs


def solve_modal_1d(config, n: int, h: float, R: float, phi: float | None = None) -> ModalReference:
    """Linear elements for mode ``n`` with element size about ``h`` on [g0, R]."""
    phi = config.phi if phi is None else phi
    g0 = config.geometry.constant
    T = config.T
    n_phys = max(2, int(round((T - g0) / h)))
    n_pml = max(2, int(round((R - T) / h)))
    t = np.concatenate([np.linspace(g0, T, n_phys + 1), T + (R - T) * np.arange(1, n_pml + 1) / n_pml])
    qp, qs, fp, fs = _modal_coefficients(config, n, phi)
    sys1 = assemble_1d(t, n_phys, config.k, n + config.alpha, phi, T, qp, qs, fp, fs)
    try:
        u = spla.splu(sys1.matrix.tocsc()).solve(sys1.rhs)
    except RuntimeError as exc:
        raise SolveError(f"1D reference for mode {n}: {exc}") from exc
    vals = np.concatenate([[0.0], u, [0.0]])
    return ModalReference(n=n, t=t, values=vals, T=T)


def _et_diff(a: ModalReference, b: ModalReference) -> float:
    """Max difference on the common nodes below T."""
    ta = a.t[a.t <= a.T + 1e-12]
    return float(np.max(np.abs(a(ta) - b(ta))))


def reference_solve_1d(config, refine: int | None = None, R_factor: float | None = None,
                       phi: float | None = None, check: bool = True) -> Reference1D:
    """High-resolution reference for decoupled configs (flat bottom, y-independent q)."""
    if not config.is_modal:
        raise ValidationError("1D reference needs a flat bottom and a y-independent potential")
    refine = refine or config.ref_refine
    R_factor = R_factor or config.ref_R_factor
    Rmax = max([config.R, *config.R_values])
    R_big = R_factor * Rmax
    h = min(config.h_t, config.h_pml) / refine
    modes = [solve_modal_1d(config, n, h, R_big, phi) for n in config.source.modes]
    ref = Reference1D(modes=modes, alpha=config.alpha, R=R_big, h=h)
    if check:
        # nested grids h, h/2, h/4 share the nodes of the coarsest one
        ratios, cauchy = [], []
        for m in modes:
            m2 = solve_modal_1d(config, m.n, h * 2, R_big, phi)
            m4 = solve_modal_1d(config, m.n, h * 4, R_big, phi)
            d_coarse = _et_diff(m4, m2)
            tc = m4.t[m4.t <= m4.T + 1e-12]
            d_fine = float(np.max(np.abs(m2(tc) - m(tc))))
            if d_fine > 0:
                ratios.append(d_coarse / d_fine)
            mR = solve_modal_1d(config, m.n, h * 4, 2 * R_big - config.T, phi)
            cauchy.append(_et_diff(m4, mR) / max(float(np.max(np.abs(m4.values))), 1e-300))
        ref.richardson = float(min(ratios)) if ratios else math.nan
        ref.cauchy_R = float(max(cauchy)) if cauchy else math.nan
    return ref


# ---------------------------------------------------------------------------
# discrete norms


def _element_values(field: Field):
    mesh = field.mesh
    vals = field.flat[mesh.elements]          # (n_el, 4)
    q = mesh.quadrature
    u = vals @ q.N.T                          # (n_el, gp)
    uy = np.einsum("ega,ea->eg", q.dNy, vals)
    ut = np.einsum("ega,ea->eg", q.dNt, vals)
    return u, uy, ut


def _weights(mesh, region: str, gamma: float):
    q = mesh.quadrature
    mask = mesh.region_mask(region)
    w = q.wdet * mask[:, None]
    if gamma:
        w = w * np.exp(2 * gamma * q.t)
    return w


def _combine(w, u, uy, ut, kind: str) -> float:
    l2 = float(np.sum(w * np.abs(u) ** 2))
    if kind == "L2":
        return math.sqrt(l2)
    semi = float(np.sum(w * (np.abs(uy) ** 2 + np.abs(ut) ** 2)))
    if kind == "H1semi":
        return math.sqrt(semi)
    if kind == "H1":
        return math.sqrt(l2 + semi)
    raise ValidationError(f"unknown norm {kind!r}")


def norm_weighted(field: Field, region: str = "ET", kind: str = "H1", gamma: float = 0.0) -> float:
    """Norm of e^{gamma t} v over a region ('ET', 'PML' or 'ER'), Gauss rule of the assembly."""
    u, uy, ut = _element_values(field)
    return _combine(_weights(field.mesh, region, gamma), u, uy, ut, kind)


def norm_1d(ref: ModalReference, t_max: float | None = None, kind: str = "H1", shift: float = 0.0) -> float:
    """Norm on (t[0], t_max) of a piecewise-linear modal profile times e^{i shift y}, y in (-pi, pi)."""
    t = ref.t if t_max is None else ref.t[ref.t <= t_max + 1e-12]
    v = ref.values[:len(t)]
    h = np.diff(t)
    a, b = v[:-1], v[1:]
    l2 = float(np.sum(h * (np.abs(a) ** 2 + np.real(a * np.conj(b)) + np.abs(b) ** 2) / 3))
    d = float(np.sum(np.abs(b - a) ** 2 / h))
    two_pi = 2 * np.pi
    if kind == "L2":
        return math.sqrt(two_pi * l2)
    return math.sqrt(two_pi * (l2 * (1 + shift * shift) + d))


# ---------------------------------------------------------------------------
# errors against a reference


@dataclass(frozen=True)
class ErrorNorms:
    l2: float
    h1: float
    ref_l2: float
    ref_h1: float

    @property
    def rel_l2(self) -> float:
        return self.l2 / self.ref_l2 if self.ref_l2 else math.inf

    @property
    def rel_h1(self) -> float:
        return self.h1 / self.ref_h1 if self.ref_h1 else math.inf


def _locate(values: np.ndarray, targets: np.ndarray, tol: float = 1e-9):
    idx = np.searchsorted(values, targets - tol)
    idx = np.clip(idx, 0, len(values) - 1)
    ok = np.abs(values[idx] - targets) <= tol
    return idx, ok


def field_eval(field: Field, y, t):
    """Value and gradient of a Q1 field on a flat mesh at arbitrary points."""
    mesh = field.mesh
    if not mesh.is_flat:
        raise RegionMismatchError("point evaluation needs a flat mesh")
    ys, ts = mesh.y, mesh.t[0]
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < ts[0] - 1e-12) or np.any(t > ts[-1] + 1e-12):
        raise RegionMismatchError("evaluation point outside the reference mesh")
    j = np.clip(np.searchsorted(ys, y, side="right") - 1, 0, mesh.Ny - 1)
    m = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, mesh.Nt - 1)
    hy = ys[j + 1] - ys[j]
    ht = ts[m + 1] - ts[m]
    a = (y - ys[j]) / hy
    b = (t - ts[m]) / ht
    V = field.values
    v00, v10, v01, v11 = V[j, m], V[j + 1, m], V[j, m + 1], V[j + 1, m + 1]
    val = (1 - a) * (1 - b) * v00 + a * (1 - b) * v10 + (1 - a) * b * v01 + a * b * v11
    dy = ((1 - b) * (v10 - v00) + b * (v11 - v01)) / hy
    dt = ((1 - a) * (v01 - v00) + a * (v11 - v10)) / ht
    return val, dy, dt


def _reference_nodal(field: Field, reference, region: str = "ER") -> np.ndarray:
    mesh = field.mesh
    if isinstance(reference, Field):
        fm = reference.mesh
        iT = mesh.i_T
        if (region == "ET" and fm.Ny == mesh.Ny and fm.i_T == iT
                and np.array_equal(fm.t[:, :iT + 1], mesh.t[:, :iT + 1])):
            # same grid below T (layers of different thickness): only E^T rows are compared
            vals = np.zeros(mesh.t.shape, dtype=complex)
            vals[:, :iT + 1] = reference.values[:, :iT + 1]
            return vals
        if fm.Ny % mesh.Ny == 0 and mesh.is_flat and fm.is_flat:
            jy, oky = _locate(fm.y, mesh.y)
            mt, okt = _locate(fm.t[0], mesh.t[0])
            if oky.all() and okt.all():
                return reference.values[np.ix_(jy, mt)]
        if mesh.is_flat and fm.is_flat:
            Y = np.broadcast_to(mesh.y[:, None], mesh.t.shape)
            return field_eval(reference, Y, mesh.t)[0]
        raise RegionMismatchError("reference mesh is not nested in the field mesh")
    Y = np.broadcast_to(mesh.y[:, None], mesh.t.shape)
    vals = np.asarray(reference(Y, mesh.t), dtype=complex) * np.ones(mesh.t.shape)
    vals[-1] = np.exp(2j * np.pi * field.alpha) * vals[0]
    return vals


def _check_coverage(field: Field, reference, region: str):
    if region == "ET":
        return
    R_ref = reference.mesh.R if isinstance(reference, Field) else getattr(reference, "R", math.inf)
    if R_ref < field.mesh.R - 1e-12:
        raise RegionMismatchError(f"reference covers t <= {R_ref}, field extends to {field.mesh.R}")


def error_vs_reference(field: Field, reference, region: str = "ET", mode: str = "nodal",
                       gamma: float = 0.0) -> ErrorNorms:
    """Error norms of ``field`` against a reference over a region.

    ``mode='nodal'`` compares with the nodal interpolant of the reference on the
    field's mesh (finer fields are injected); ``mode='quadrature'`` samples the
    reference and its gradient at the Gauss points.
    """
    _check_coverage(field, reference, region)
    mesh = field.mesh
    w = _weights(mesh, region, gamma)
    if mode == "nodal":
        ref_vals = _reference_nodal(field, reference, region)
        ref_field = Field(mesh=mesh, alpha=field.alpha, values=ref_vals)
        ru, ruy, rut = _element_values(ref_field)
    elif mode == "quadrature":
        q = mesh.quadrature
        if isinstance(reference, Field):
            ru, ruy, rut = field_eval(reference, q.y, q.t)
        else:
            ru = np.asarray(reference(q.y, q.t), dtype=complex)
            ruy, rut = reference.gradient(q.y, q.t)
    else:
        raise ValidationError(f"unknown error mode {mode!r}")
    u, uy, ut = _element_values(field)
    return ErrorNorms(
        l2=_combine(w, u - ru, uy - ruy, ut - rut, "L2"),
        h1=_combine(w, u - ru, uy - ruy, ut - rut, "H1"),
        ref_l2=_combine(w, ru, ruy, rut, "L2"),
        ref_h1=_combine(w, ru, ruy, rut, "H1"),
    )
