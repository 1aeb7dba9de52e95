"""Mode spectrum of the unperturbed strip problem and the PML rates derived from it.

For every integer ``n`` the wave numbers are

    lambda_n^- = sqrt(k^2 - (n + alpha)^2),   lambda_n^+ = -lambda_n^-

with the principal branch of the square root, negative arguments mapping to the
positive imaginary axis.  ``w_n^-`` is outgoing (propagating ``n``) or
evanescent, ``w_n^+`` incoming or growing.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyBetaRange, EmptyGammaInterval, ThresholdViolation, ValidationError

THRESHOLD_RTOL = 1e-12


class ModeClass(str, enum.Enum):
    PROPAGATING = "propagating"
    EVANESCENT_PAIR = "evanescent_pair"


@dataclass(frozen=True)
class ModeEntry:
    n: int
    lambda_plus: complex
    lambda_minus: complex
    mode_class: ModeClass

    @property
    def propagating(self) -> bool:
        return self.mode_class is ModeClass.PROPAGATING

    def decay_rate(self, phi: float) -> float:
        """Im(e^{i phi} lambda_n^-): decay rate of the scaled outgoing/evanescent wave."""
        return (np.exp(1j * phi) * self.lambda_minus).imag


@dataclass(frozen=True)
class ModeSpectrum:
    k: float
    alpha: float
    entries: tuple[ModeEntry, ...]

    @property
    def n_window(self) -> int:
        return max(abs(e.n) for e in self.entries)

    def entry(self, n: int) -> ModeEntry:
        for e in self.entries:
            if e.n == n:
                return e
        raise KeyError(f"mode n={n} outside window [-{self.n_window}, {self.n_window}]")

    @property
    def propagating(self) -> tuple[ModeEntry, ...]:
        return tuple(e for e in self.entries if e.propagating)

    @property
    def evanescent(self) -> tuple[ModeEntry, ...]:
        return tuple(e for e in self.entries if not e.propagating)

    def table(self) -> list[dict]:
        return [
            {
                "n": e.n,
                "lambda_minus": e.lambda_minus,
                "lambda_plus": e.lambda_plus,
                "class": e.mode_class.value,
            }
            for e in self.entries
        ]


@dataclass(frozen=True)
class BetaRange:
    """Interval ``(lower, 0)`` or ``[lower, 0)`` of admissible weights."""

    lower: float
    lower_closed: bool

    def __contains__(self, beta: float) -> bool:
        if not beta < 0.0:
            return False
        return beta >= self.lower if self.lower_closed else beta > self.lower

    def __str__(self) -> str:
        return f"{'[' if self.lower_closed else '('}{self.lower:.6g}, 0)"


@dataclass(frozen=True)
class PmlRates:
    phi: float
    tau: float
    decay_rate: float
    gamma_max: float
    beta_range: BetaRange
    # min over propagating lambda^- and min over evanescent Im(lambda^-)
    min_propagating: float
    min_evanescent: float


def default_window(k: float) -> int:
    return int(math.ceil(abs(k))) + 5


def _check_finite(**values):
    for name, v in values.items():
        if not np.isfinite(v):
            raise ValidationError(f"{name} must be finite, got {v}")


def validate_parameters(k: float, alpha: float, n_window: int) -> None:
    """Raise :class:`ThresholdViolation` if ``k`` is a threshold value.

    Indices are scanned in the order ``0, 1, -1, 2, -2, ...`` up to
    ``n_window + ceil(|k|)``; the first offending index is reported.
    """
    _check_finite(k=k, alpha=alpha)
    if k == 0:
        raise ValidationError("k must be nonzero")
    if not 0.0 <= alpha < 1.0:
        raise ValidationError(f"alpha must lie in [0, 1), got {alpha}")
    if n_window < 1:
        raise ValidationError("n_window must be a positive integer")
    k2 = k * k
    nmax = n_window + int(math.ceil(abs(k)))
    order = [0]
    for m in range(1, nmax + 1):
        order += [m, -m]
    for n in order:
        if abs(k2 - (n + alpha) ** 2) <= THRESHOLD_RTOL * k2:
            raise ThresholdViolation(n, k, alpha)


def lambda_minus(k: float, alpha: float, n) -> np.ndarray | complex:
    """Principal-branch sqrt(k^2 - (n+alpha)^2); vectorized over ``n``."""
    d = k * k - (np.asarray(n, dtype=float) + alpha) ** 2
    out = np.where(d > 0, np.sqrt(np.abs(d)) + 0j, 1j * np.sqrt(np.abs(d)))
    return out[()] if out.ndim == 0 else out


def mode_spectrum(k: float, alpha: float, n_window: int | None = None) -> ModeSpectrum:
    if n_window is None:
        n_window = default_window(k)
    validate_parameters(k, alpha, n_window)
    entries = []
    for n in range(-n_window, n_window + 1):
        lm = complex(lambda_minus(k, alpha, n))
        cls = ModeClass.PROPAGATING if abs(n + alpha) < abs(k) else ModeClass.EVANESCENT_PAIR
        entries.append(ModeEntry(n=n, lambda_plus=complex(0.0 - lm.real, 0.0 - lm.imag), lambda_minus=lm, mode_class=cls))
    return ModeSpectrum(k=float(k), alpha=float(alpha), entries=tuple(entries))


def wave_eval(entry: ModeEntry, branch: str, alpha: float, y, t):
    """exp(i lambda t + i (n + alpha) y) for ``branch`` in {"plus", "minus"}.

    ``t`` may be complex (scaled coordinate).
    """
    if branch == "minus":
        lam = entry.lambda_minus
    elif branch == "plus":
        lam = entry.lambda_plus
    else:
        raise ValueError(f"branch must be 'plus' or 'minus', got {branch!r}")
    return np.exp(1j * lam * np.asarray(t) + 1j * (entry.n + alpha) * np.asarray(y))


def _check_window_covers(spectrum: ModeSpectrum) -> None:
    # Im(e^{i phi} lambda_n^-) increases monotonically once |n+alpha| moves away
    # from |k| on the evanescent side, so the window must reach past |k| on both sides.
    shifts = [e.n + spectrum.alpha for e in spectrum.entries]
    if not (max(shifts) > abs(spectrum.k) and min(shifts) < -abs(spectrum.k)):
        raise ValidationError("mode window too small to contain the global minimum decay rate")


def decay_rate(spectrum: ModeSpectrum, phi: float, indices: Iterable[int] | None = None) -> float:
    """min Im(e^{i phi} lambda_n^-) over the window, or over ``indices`` only.

    Restricting to ``indices`` gives the rate governing a field that contains
    only those modes (decoupled case: flat boundary, y-independent potential).
    """
    if indices is None:
        _check_window_covers(spectrum)
        entries: Sequence[ModeEntry] = spectrum.entries
    else:
        entries = [spectrum.entry(n) for n in sorted(set(indices))]
        if not entries:
            raise ValidationError("empty mode set")
    rates = []
    for e in entries:
        if e.propagating:
            rates.append(e.lambda_minus.real * math.sin(phi))
        else:
            rates.append(e.lambda_minus.imag * math.cos(phi))
    return float(min(rates))


def pml_rates(spectrum: ModeSpectrum, phi: float, tau: float) -> PmlRates:
    """Decay rate, largest admissible convergence rate and admissible weights."""
    if not 0.0 < phi < math.pi / 2:
        raise ValidationError(f"phi must lie in (0, pi/2), got {phi}")
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    if not spectrum.entries:
        raise ValidationError("empty spectrum")
    rate = decay_rate(spectrum, phi)
    tau_bound = tau * math.sin(phi)
    gamma_max = min(tau_bound, rate)
    if not gamma_max > 0:
        raise EmptyGammaInterval(f"gamma interval empty (gamma_max={gamma_max})")

    prop = spectrum.propagating
    evan = spectrum.evanescent
    min_prop = min((e.lambda_minus.real for e in prop), default=math.inf)
    min_evan = min((e.lambda_minus.imag for e in evan), default=math.inf)

    # lower bounds: [-tau sin phi (closed), (-min Im lambda^- evanescent (open),
    # and the strict cone containment of the incoming waves |beta| < tan(phi) min lambda^-
    candidates = [
        (-tau_bound, True),
        (-min_evan, False),
        (-math.tan(phi) * min_prop, False),
    ]
    lower = max(c[0] for c in candidates)
    closed = all(c[1] for c in candidates if c[0] == lower)
    if not lower < 0:
        raise EmptyBetaRange("no admissible beta")
    return PmlRates(
        phi=float(phi),
        tau=float(tau),
        decay_rate=rate,
        gamma_max=gamma_max,
        beta_range=BetaRange(lower=float(lower), lower_closed=closed),
        min_propagating=min_prop,
        min_evanescent=min_evan,
    )


def in_cone(lam, beta: float, phi: float):
    """Membership in the open cone {i beta - e^{-i psi} xi : 0 < psi < phi, xi > 0}."""
    w = -(np.asarray(lam, dtype=complex) - 1j * beta)  # = e^{-i psi} xi
    arg = -np.angle(w)
    return (np.abs(w) > 0) & (arg > 0) & (arg < phi)
