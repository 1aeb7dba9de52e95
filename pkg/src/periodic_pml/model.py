"""Geometry, analytic potential/source families and their complex-scaled versions.

Every t-profile knows its real values and a closed-form analytic continuation,
which is what the PML consumes: beyond the interface ``T`` the solver needs
``q(y, T + e^{i phi}(t - T))`` and ``F(y, T + e^{i phi}(t - T))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DivergentIntegralError, DomainError, ValidationError


def scaled_coordinate(t, T: float, phi: float):
    """t -> T + e^{i phi}(t - T)."""
    return T + np.exp(1j * phi) * (np.asarray(t) - T)


# ---------------------------------------------------------------------------
# trigonometric polynomials (boundary profile g(y), y-factors of potentials)


@dataclass(frozen=True)
class TrigPoly:
    """c0 + sum_m cos[m] cos(m y) + sin[m-1] sin(m y)."""

    cos: tuple[float, ...] = (0.0,)
    sin: tuple[float, ...] = ()

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, float(self.cos[0]) if self.cos else 0.0)
        for m, a in enumerate(self.cos[1:], start=1):
            out = out + a * np.cos(m * y)
        for m, b in enumerate(self.sin, start=1):
            out = out + b * np.sin(m * y)
        return out[()] if out.ndim == 0 else out

    @property
    def is_constant(self) -> bool:
        return all(a == 0 for a in self.cos[1:]) and all(b == 0 for b in self.sin)

    @property
    def constant(self) -> float:
        return float(self.cos[0]) if self.cos else 0.0

    def to_dict(self) -> dict:
        return {"cos": list(self.cos), "sin": list(self.sin)}

    @classmethod
    def from_dict(cls, d) -> "TrigPoly":
        if isinstance(d, (int, float)):
            return cls(cos=(float(d),))
        return cls(cos=tuple(float(c) for c in d.get("cos", [0.0])),
                   sin=tuple(float(s) for s in d.get("sin", [])))


ONE = TrigPoly(cos=(1.0,))


@dataclass(frozen=True)
class Geometry:
    """Periodicity cell bounded below by t = g(y), interface t = T, truncation t = R."""

    boundary: TrigPoly = field(default_factory=TrigPoly)
    T: float = 2.0
    R: float = 4.0

    def g(self, y):
        return self.boundary(y)

    @property
    def is_flat(self) -> bool:
        return self.boundary.is_constant

    def g_max(self, samples: int = 4096) -> float:
        y = np.linspace(-np.pi, np.pi, samples, endpoint=False)
        return float(np.max(self.g(y)))

    def g_min(self, samples: int = 4096) -> float:
        y = np.linspace(-np.pi, np.pi, samples, endpoint=False)
        return float(np.min(self.g(y)))

    def validate(self) -> None:
        if self.g_max() > 1e-14:
            raise ValidationError(f"boundary profile must satisfy max g <= 0 (max g = {self.g_max():.4g})")
        if not 0 < self.T < self.R:
            raise ValidationError(f"need 0 < T < R, got T={self.T}, R={self.R}")

    def with_R(self, R: float) -> "Geometry":
        return Geometry(boundary=self.boundary, T=self.T, R=R)


# ---------------------------------------------------------------------------
# t-profiles


def _expm1_over(z):
    """(e^z - 1)/z, stable near z = 0; complex arrays."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.25
    zb = z[~small]
    out[~small] = (np.exp(zb) - 1.0) / zb
    zs = z[small]
    term = np.ones_like(zs)
    acc = np.ones_like(zs)
    for j in range(2, 20):
        term = term * zs / j
        acc = acc + term
    out[small] = acc
    return out


def exp_integral(nu, x0, x1):
    """int_{x0}^{x1} e^{i nu s} ds for complex ``nu`` (broadcasting)."""
    nu = np.asarray(nu, dtype=complex)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    d = x1 - x0
    return np.exp(1j * nu * x0) * d * _expm1_over(1j * nu * d)


class Profile:
    """A real t-profile with a closed-form analytic continuation."""

    kind = "abstract"
    #: profile vanishes identically for t >= support_end
    support_end = math.inf
    start = -math.inf

    def __call__(self, t):
        raise NotImplementedError

    def continued(self, z):
        raise NotImplementedError

    def scaled(self, t, T, phi):
        """Profile at the complex argument T + e^{i phi}(t - T) for t >= T."""
        t = np.asarray(t, dtype=float)
        if self.support_end <= T:
            return np.zeros(t.shape, dtype=complex)[()]
        return self.continued(scaled_coordinate(t, T, phi))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class BumpProfile(Profile):
    """sin^2(pi (t - t0)/(t1 - t0)) on [t0, t1], zero elsewhere (C^1 bump)."""

    t0: float
    t1: float
    kind = "compact_bump"

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValidationError("bump needs t1 > t0")

    @property
    def support_end(self):
        return self.t1

    @property
    def start(self):
        return self.t0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.t0) & (t <= self.t1)
        val = np.sin(np.pi * (t - self.t0) / (self.t1 - self.t0)) ** 2
        return np.where(inside, val, 0.0)[()]

    def continued(self, z):
        raise DomainError("a compactly supported bump has no continuation across its support")

    def exp_moment(self, nu, x0, x1):
        """int_{x0}^{x1} e^{i nu s} f(s) ds, closed form (x0, x1 clipped to support)."""
        a = np.clip(x0, self.t0, self.t1)
        b = np.clip(x1, self.t0, self.t1)
        b = np.maximum(a, b)
        w = 2 * np.pi / (self.t1 - self.t0)
        nu = np.asarray(nu, dtype=complex)
        # sin^2 = 1/2 - e^{i w (s-t0)}/4 - e^{-i w (s-t0)}/4
        return (0.5 * exp_integral(nu, a, b)
                - 0.25 * np.exp(-1j * w * self.t0) * exp_integral(nu + w, a, b)
                - 0.25 * np.exp(1j * w * self.t0) * exp_integral(nu - w, a, b))

    def to_dict(self):
        return {"kind": self.kind, "t0": self.t0, "t1": self.t1}


@dataclass(frozen=True)
class BoxProfile(Profile):
    """Indicator of [t0, t1]."""

    t0: float
    t1: float
    kind = "box"

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValidationError("box needs t1 > t0")

    @property
    def support_end(self):
        return self.t1

    @property
    def start(self):
        return self.t0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= self.t0) & (t <= self.t1), 1.0, 0.0)[()]

    def continued(self, z):
        raise DomainError("a box profile has no continuation across its support")

    def exp_moment(self, nu, x0, x1):
        a = np.clip(x0, self.t0, self.t1)
        b = np.maximum(a, np.clip(x1, self.t0, self.t1))
        return exp_integral(nu, a, b)

    def to_dict(self):
        return {"kind": self.kind, "t0": self.t0, "t1": self.t1}


@dataclass(frozen=True)
class ExpDecayProfile(Profile):
    """e^{-mu (t - onset)} for t >= onset, zero below."""

    mu: float
    onset: float = 0.0
    kind = "exp_decay"

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError("exp_decay needs mu > 0")

    @property
    def start(self):
        return self.onset

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= self.onset, np.exp(-self.mu * (t - self.onset)), 0.0)[()]

    def continued(self, z):
        return np.exp(-self.mu * (np.asarray(z) - self.onset))

    def scaled(self, t, T, phi):
        if self.onset > T:
            raise DomainError("exp_decay onset lies beyond the scaling interface")
        return super().scaled(t, T, phi)

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu, "onset": self.onset}


@dataclass(frozen=True)
class PowerProfile(Profile):
    """(a + t)^nu with nu < 0, a > 0."""

    nu: float = -1.0
    offset: float = 1.0
    kind = "power_decay"

    def __post_init__(self):
        if not self.nu < 0:
            raise ValidationError("power_decay needs nu < 0")
        if not self.offset > 0:
            raise ValidationError("power_decay needs offset a > 0")

    @property
    def singular_point(self):
        return -self.offset

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(self.offset + t <= 0):
            raise DomainError("power profile evaluated at or below its singularity t = -a")
        return np.power(self.offset + t, self.nu)[()]

    def continued(self, z):
        w = self.offset + np.asarray(z, dtype=complex)
        if np.any(w.real <= 0):
            raise DomainError("complex argument left the half-plane Re(a + z) > 0")
        return np.exp(self.nu * np.log(w))[()]

    def to_dict(self):
        return {"kind": self.kind, "nu": self.nu, "offset": self.offset}


@dataclass(frozen=True)
class LogProfile(Profile):
    """1/ln(e + t)."""

    kind = "log_decay"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(np.e + t <= 1.0):
            raise DomainError("log profile evaluated at or below t = 1 - e")
        return (1.0 / np.log(np.e + t))[()]

    def continued(self, z):
        w = np.e + np.asarray(z, dtype=complex)
        if np.any(w.real <= 1.0):
            raise DomainError("complex argument too close to the logarithmic singularity")
        return (1.0 / np.log(w))[()]

    def to_dict(self):
        return {"kind": self.kind}


def profile_from_dict(d: dict) -> Profile:
    kind = d.get("kind")
    if kind == "compact_bump":
        return BumpProfile(float(d["t0"]), float(d["t1"]))
    if kind == "box":
        return BoxProfile(float(d["t0"]), float(d["t1"]))
    if kind == "exp_decay":
        return ExpDecayProfile(float(d["mu"]), float(d.get("onset", 0.0)))
    if kind == "power_decay":
        return PowerProfile(float(d.get("nu", -1.0)), float(d.get("offset", 1.0)))
    if kind == "log_decay":
        return LogProfile()
    raise ValidationError(f"unknown profile kind {kind!r}")


# ---------------------------------------------------------------------------
# potential


POTENTIAL_KINDS = ("zero", "compact_bump", "power_decay", "log_decay")


@dataclass(frozen=True)
class PotentialSpec:
    """q(y, t) = amplitude * y_factor(y) * profile(t)."""

    kind: str = "zero"
    amplitude: float = 0.0
    y_factor: TrigPoly = ONE
    nu: float = -1.0
    offset: float = 1.0
    t0: float = 0.0
    t1: float = 1.0
    onset: float = 0.0
    cone_angle: float = math.pi / 2

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValidationError(f"unknown potential kind {self.kind!r}")
        self.profile  # validates parameters

    @property
    def profile(self) -> Profile | None:
        if self.kind == "zero":
            return None
        if self.kind == "compact_bump":
            return BumpProfile(self.t0, self.t1)
        if self.kind == "power_decay":
            return PowerProfile(self.nu, self.offset)
        return LogProfile()

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0

    @property
    def t_only(self) -> bool:
        return self.is_zero or self.y_factor.is_constant

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "amplitude": self.amplitude, "y_factor": self.y_factor.to_dict(),
             "onset": self.onset, "cone_angle": self.cone_angle}
        if self.kind == "power_decay":
            d.update(nu=self.nu, offset=self.offset)
        if self.kind == "compact_bump":
            d.update(t0=self.t0, t1=self.t1)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        kw = dict(d)
        if "y_factor" in kw:
            kw["y_factor"] = TrigPoly.from_dict(kw["y_factor"])
        kw.setdefault("amplitude", 0.0 if kw.get("kind", "zero") == "zero" else 1.0)
        return cls(**kw)


def potential_eval(spec: PotentialSpec, y, t):
    """q(y, t) on the real domain."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if spec.is_zero:
        return np.zeros(np.broadcast(y, t).shape)[()]
    return (spec.amplitude * spec.y_factor(y) * spec.profile(t))[()]


def potential_scaled_eval(spec: PotentialSpec, y, t, T: float, phi: float):
    """q(y, T + e^{i phi}(t - T)) for t >= T."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast(y, t).shape
    if spec.is_zero:
        return np.zeros(shape, dtype=complex)[()]
    if phi > spec.cone_angle:
        raise DomainError(f"phi={phi} exceeds the analyticity cone angle {spec.cone_angle}")
    if T < spec.onset:
        raise DomainError(f"T={T} below the analyticity onset {spec.onset}")
    prof = spec.profile.scaled(t, T, phi)
    return (spec.amplitude * spec.y_factor(y) * prof)[()]


# ---------------------------------------------------------------------------
# source


@dataclass(frozen=True)
class ModalComponent:
    n: int
    profile: Profile
    amplitude: complex = 1.0

    def to_dict(self):
        a = complex(self.amplitude)
        amp = a.real if a.imag == 0 else [a.real, a.imag]
        return {"n": self.n, "profile": self.profile.to_dict(), "amplitude": amp}

    @classmethod
    def from_dict(cls, d):
        amp = d.get("amplitude", 1.0)
        if isinstance(amp, (list, tuple)):
            amp = complex(amp[0], amp[1])
        prof = profile_from_dict(d["profile"])
        if prof.kind not in ("compact_bump", "box", "exp_decay"):
            raise ValidationError(f"source profile kind {prof.kind!r} not supported")
        return cls(n=int(d["n"]), profile=prof, amplitude=amp)


@dataclass(frozen=True)
class SourceSpec:
    """F(y, t) = sum_c amplitude_c f_c(t) e^{i (n_c + alpha) y}."""

    components: tuple[ModalComponent, ...] = ()
    tau: float = 1.0

    @property
    def is_zero(self) -> bool:
        return all(c.amplitude == 0 for c in self.components)

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(sorted({c.n for c in self.components if c.amplitude != 0}))

    @property
    def support_end(self) -> float:
        return max((c.profile.support_end for c in self.components), default=-math.inf)

    def by_mode(self) -> dict[int, list[ModalComponent]]:
        out: dict[int, list[ModalComponent]] = {}
        for c in self.components:
            out.setdefault(c.n, []).append(c)
        return out

    def to_dict(self):
        return {"components": [c.to_dict() for c in self.components],
                "tau": None if math.isinf(self.tau) else self.tau}

    @classmethod
    def from_dict(cls, d):
        tau = d.get("tau", 1.0)
        tau = math.inf if tau is None else float(tau)
        return cls(components=tuple(ModalComponent.from_dict(c) for c in d.get("components", [])),
                   tau=tau)


def source_eval(spec: SourceSpec, alpha: float, y, t):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros(np.broadcast(y, t).shape, dtype=complex)
    for c in spec.components:
        out = out + c.amplitude * c.profile(t) * np.exp(1j * (c.n + alpha) * y)
    return out[()]


def source_scaled_eval(spec: SourceSpec, alpha: float, y, t, T: float, phi: float):
    """F(y, T + e^{i phi}(t - T)) for t >= T; compact pieces below T contribute 0."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros(np.broadcast(y, t).shape, dtype=complex)
    for c in spec.components:
        out = out + c.amplitude * c.profile.scaled(t, T, phi) * np.exp(1j * (c.n + alpha) * y)
    return out[()]


def modal_source_profile(spec: SourceSpec, n: int):
    """Callable t -> sum of the profiles carried by mode ``n`` (real domain)."""
    comps = [c for c in spec.components if c.n == n]

    def f(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for c in comps:
            out = out + c.amplitude * c.profile(t)
        return out
    return f


# ---------------------------------------------------------------------------
# admissibility


@dataclass
class SourceAdmissibility:
    passed: bool
    bound: float
    worst_psi: float
    physical_norm2: float = 0.0
    detail: str = ""


def check_source_admissibility(spec: SourceSpec, T: float, phi: float, tau: float,
                               n_psi: int = 33, rtol: float = 1e-12) -> SourceAdmissibility:
    """Estimate sup_psi int_0^inf int e^{2 s tau sin psi} |F(y, T + e^{i psi} s)|^2 dy ds.

    The reported bound adds the plain squared norm of F on the physical part
    t < T, so that it bounds the weighted H^0 norm of the scaled right-hand side.
    """
    if n_psi < 33:
        raise ValidationError("need at least 33 angle samples")
    two_pi = 2 * np.pi
    groups = spec.by_mode()

    phys = 0.0
    for comps in groups.values():
        lo = min(c.profile.start for c in comps)
        if not np.isfinite(lo):
            raise ValidationError("source profile without a finite start")
        hi = T
        if lo >= hi:
            continue
        brk = sorted({lo, hi, *[c.profile.start for c in comps],
                      *[min(c.profile.support_end, hi) for c in comps if c.profile.support_end < hi]})

        def dens(s, comps=comps):
            v = sum(c.amplitude * c.profile(s) for c in comps)
            return abs(v) ** 2
        for a, b in zip(brk[:-1], brk[1:]):
            if b > a:
                phys += two_pi * integrate.quad(dens, a, b, epsabs=0, epsrel=1e-13, limit=200)[0]

    # scaled part
    for comps in groups.values():
        for c in comps:
            if c.profile.support_end < math.inf and c.profile.support_end > T:
                return SourceAdmissibility(False, math.inf, 0.0, phys,
                                           f"compact profile of mode {c.n} crosses the interface T={T}")
    worst, worst_psi = 0.0, 0.0
    for psi in np.linspace(0.0, phi, n_psi):
        w = 2 * tau * math.sin(psi) if np.isfinite(tau) else math.inf
        total = 0.0
        for comps in groups.values():
            live = [c for c in comps if c.profile.kind == "exp_decay" and c.amplitude != 0]
            if not live:
                continue
            kappa = min(c.profile.mu for c in live) * math.cos(psi) * 2 - w
            if not kappa > 0:
                raise DivergentIntegralError(
                    f"weighted source integral diverges at psi={psi:.4f}: "
                    f"2 mu cos(psi) <= 2 tau sin(psi)")
            amps = [abs(c.amplitude) * math.exp(-c.profile.mu * (T - c.profile.onset)) for c in live]
            env = sum(amps) ** 2

            def dens(s, live=live, psi=psi, w=w):
                # weight folded into each exponent so nothing overflows
                rot = np.exp(1j * psi)
                v = sum(c.amplitude * np.exp(-c.profile.mu * (T - c.profile.onset)
                                             - c.profile.mu * rot * s + 0.5 * w * s) for c in live)
                return abs(v) ** 2
            # envelope tail: env * e^{-kappa s}/kappa below rtol * (env/kappa)
            s_max = math.log(1.0 / rtol) / kappa
            val = integrate.quad(dens, 0.0, s_max, epsabs=0, epsrel=1e-12, limit=400)[0]
            tail = env * math.exp(-kappa * s_max) / kappa
            total += two_pi * (val + tail)
        if total > worst:
            worst, worst_psi = total, float(psi)
    return SourceAdmissibility(True, phys + worst, worst_psi, phys)


@dataclass
class PotentialAdmissibility:
    passed: bool
    sup_tail: dict[float, float]
    detail: str = ""


def check_potential_admissibility(spec: PotentialSpec, T: float, phi: float,
                                  horizon: float = 1e6, rel_threshold: float = 0.25,
                                  n_s: int = 4000, n_y: int = 64) -> PotentialAdmissibility:
    """Sample |q(y, T + e^{i psi} s)| on the rays psi in {0, phi/2, phi}.

    ``sup_tail[rho]`` is the supremum over s >= rho; the check passes when this
    running supremum at the horizon has dropped below ``rel_threshold`` times
    its value at rho = 0.
    """
    radii = [0.0] + [2.0 ** j for j in range(0, int(math.log2(horizon)) + 1)]
    if spec.is_zero:
        return PotentialAdmissibility(True, {r: 0.0 for r in radii})
    if spec.kind == "compact_bump":
        if spec.t1 > T:
            return PotentialAdmissibility(
                False, {}, f"compact potential support [{spec.t0}, {spec.t1}] crosses the interface T={T}")
        return PotentialAdmissibility(True, {r: 0.0 for r in radii})
    if phi > spec.cone_angle or T < spec.onset:
        return PotentialAdmissibility(False, {}, "interface outside the analyticity cone of the potential")
    s = np.concatenate([[0.0], np.geomspace(1e-3, horizon, n_s)])
    y = np.linspace(-np.pi, np.pi, n_y, endpoint=False)
    ymax = float(np.max(np.abs(spec.y_factor(y))))
    mags = np.zeros_like(s)
    for psi in (0.0, phi / 2, phi):
        z = T + np.exp(1j * psi) * s
        mags = np.maximum(mags, np.abs(spec.profile.continued(z)))
    mags = abs(spec.amplitude) * ymax * mags
    running = np.maximum.accumulate(mags[::-1])[::-1]
    table = {}
    for r in radii:
        idx = np.searchsorted(s, r)
        table[r] = float(running[min(idx, len(s) - 1)])
    first, last = table[radii[0]], table[radii[-1]]
    ok = last <= rel_threshold * first
    return PotentialAdmissibility(ok, table, "" if ok else "potential does not decay on the sampled rays")


def interface_potential_ratio(spec: PotentialSpec, T: float, k: float) -> float:
    """max_y |q(y, T)| / k^2, used for the 'T large enough' warning."""
    y = np.linspace(-np.pi, np.pi, 256, endpoint=False)
    return float(np.max(np.abs(potential_eval(spec, y, T))) / (k * k))

