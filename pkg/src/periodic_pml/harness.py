"""Experiment drivers: single runs, R/phi/h sweeps, stability scans and report output."""
from __future__ import annotations

import contextlib
import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ProblemConfig, build_system, validate_config
from .errors import InsufficientPointsError, PMLError, ValidationError
from .modes import decay_rate
from .oracle import error_vs_reference, exact_solution, has_exact_solution, norm_weighted, reference_solve_1d
from .radiation import fit_outgoing
from .solver import Field, solve, stability_scan

log = logging.getLogger(__name__)

FLOOR_FACTOR = 10.0
STABILITY_TOL = 0.05


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except PMLError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))  # map keeps input order


def _solve(config: ProblemConfig, **kw) -> tuple[Field, float]:
    t0 = time.perf_counter()
    with stage("assemble"):
        _, _, system = build_system(config, **kw)
    with stage("solve"):
        fld = solve(system)
    return fld, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# single run


@dataclass
class RunSummary:
    field: Field
    residual: float
    norm_h1_ET: float
    norm_h1_ER: float
    fit_residual: float | None
    fit_coefficients: dict
    error_h1_ET: float | None
    seconds: float

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "residual": self.residual,
            "norm_h1_ET": self.norm_h1_ET,
            "norm_h1_ER": self.norm_h1_ER,
            "fit_residual": self.fit_residual,
            "fit_coefficients": {str(n): [c.real, c.imag] for n, c in self.fit_coefficients.items()},
            "error_h1_ET": self.error_h1_ET,
            "seconds": self.seconds if timing else 0.0,
        }


def run_single(config: ProblemConfig, R: float | None = None, phi: float | None = None) -> RunSummary:
    """mesh -> dofs -> assemble -> solve -> norms, outgoing fit and oracle error."""
    with stage("validate"):
        validate_config(config, R_values=[R] if R else None, phis=[phi] if phi else None)
    phi = config.phi if phi is None else phi
    fld, secs = _solve(config, R=R, phi=phi)
    fit_res, coeffs = None, {}
    if fld.mesh.is_flat and not config.source.is_zero:
        with stage("fit"):
            try:
                fit = fit_outgoing(fld, config.spectrum(), phi)
                fit_res, coeffs = fit.residual, fit.coefficients
            except PMLError as exc:
                log.warning("outgoing fit skipped: %s", exc)
    elif config.source.is_zero:
        fit_res = 0.0
    err = None
    if has_exact_solution(config):
        with stage("oracle"):
            err = error_vs_reference(fld, exact_solution(config, phi=phi)).h1
    return RunSummary(field=fld, residual=fld.residual, norm_h1_ET=norm_weighted(fld, "ET", "H1"),
                      norm_h1_ER=norm_weighted(fld, "ER", "H1"), fit_residual=fit_res,
                      fit_coefficients=coeffs, error_h1_ET=err, seconds=secs)


# ---------------------------------------------------------------------------
# R sweep


@dataclass
class ConvergenceRow:
    R: float
    error: float
    norm: float
    seconds: float = 0.0
    used: bool = True


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    slope: float
    gamma_max: float
    verdict: str
    reference: str
    floor: float
    slope_factor: float
    monotone: bool
    predicted_rate: float
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "experiment": "sweep_R",
            "params": self.params,
            "rows": [{"R": r.R, "error_h1_ET": r.error, "norm_h1": r.norm,
                      "seconds": r.seconds if timing else 0.0, "used_in_fit": r.used} for r in self.rows],
            "slope": self.slope,
            "gamma_max": self.gamma_max,
            "verdict": self.verdict,
            "reference": self.reference,
            "h_floor": self.floor,
            "slope_factor": self.slope_factor,
            "threshold_slope": -self.slope_factor * self.gamma_max,
            "monotone": self.monotone,
            "predicted_rate_excited": self.predicted_rate,
        }


def _reference(config: ProblemConfig, phi: float):
    if has_exact_solution(config):
        return "exact", exact_solution(config, phi=phi)
    if config.is_modal:
        ref = reference_solve_1d(config, phi=phi)
        return "reference_1d", ref
    return "cauchy", None


def excited_rate(config: ProblemConfig, phi: float | None = None) -> float:
    """min(tau sin phi, decay rate restricted to the modes carried by the source)."""
    phi = config.phi if phi is None else phi
    spec = config.spectrum()
    modes = config.source.modes
    if not modes or not config.is_modal:
        return config.rates(phi).gamma_max
    return min(config.tau * math.sin(phi), decay_rate(spec, phi, indices=modes))


def fit_slope(R, err) -> float:
    R = np.asarray(R, dtype=float)
    y = np.log(np.asarray(err, dtype=float))
    A = np.stack([R, np.ones_like(R)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def sweep_R(config: ProblemConfig, R_values=None, phi: float | None = None,
            workers: int | None = None, reference: str = "auto") -> ConvergenceReport:
    """H^1(E^T) error versus R with a log-linear slope fit.

    Rows whose error is within ``FLOOR_FACTOR`` of the discretization floor are
    excluded; the floor is the error of a run with a much thicker layer at the
    same element size.  Without an oracle the largest-R run is the reference
    and is itself excluded.
    """
    R_values = sorted(float(r) for r in (R_values if R_values is not None else config.R_values))
    phi = config.phi if phi is None else float(phi)
    workers = workers or config.workers
    with stage("validate"):
        validate_config(config, phis=[phi], R_values=R_values)
        if len(set(R_values)) != len(R_values):
            raise ValidationError("duplicate R values")
    rates = config.rates(phi)
    kind, ref = ("cauchy", None) if reference == "cauchy" else _reference(config, phi)

    runs = _map(lambda R: _solve(config, R=R, phi=phi), R_values, workers)
    fields = [f for f, _ in runs]
    if kind == "cauchy":
        ref_field = fields[-1]
        errors = [error_vs_reference(f, ref_field).h1 for f in fields[:-1]]
        errors.append(0.0)
        floor = 0.0
    else:
        errors = [error_vs_reference(f, ref).h1 for f in fields]
        R_floor = config.T + 2.5 * (max(R_values) - config.T)
        ffloor, _ = _solve(config, R=R_floor, phi=phi)
        floor = error_vs_reference(ffloor, ref).h1
    rows = [ConvergenceRow(R, e, norm_weighted(f, "ET", "H1"), s)
            for R, e, (f, s) in zip(R_values, errors, runs)]
    if kind == "cauchy":
        rows[-1].used = False
    for r in rows:
        if r.error <= FLOOR_FACTOR * floor or r.error == 0.0:
            r.used = False
    # rows beyond the first one that hits the floor are not used either
    first_bad = next((i for i, r in enumerate(rows) if not r.used), len(rows))
    for r in rows[first_bad:]:
        r.used = False
    used = [r for r in rows if r.used]
    params = dict(config.to_dict(), phi=phi, R_values=R_values)
    report = ConvergenceReport(rows=rows, slope=math.nan, gamma_max=rates.gamma_max, verdict="insufficient_points",
                               reference=kind, floor=floor, slope_factor=config.slope_factor,
                               monotone=False, predicted_rate=excited_rate(config, phi), params=params)
    if len(used) < 3:
        raise InsufficientPointsError(f"only {len(used)} rows above {FLOOR_FACTOR:g}x the floor {floor:.3e}",
                                      report=report)
    report.slope = fit_slope([r.R for r in used], [r.error for r in used])
    report.monotone = all(b.error <= a.error for a, b in zip(used, used[1:]))
    ok = report.slope <= -config.slope_factor * rates.gamma_max and report.monotone
    report.verdict = "PASS" if ok else "FAIL"
    return report


# ---------------------------------------------------------------------------
# phi sweep


@dataclass
class PhiRow:
    phi_i: float
    phi_j: float
    diff: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.diff <= self.bound


@dataclass
class PhiReport:
    rows: list[PhiRow]
    errors: dict
    R: float
    gamma_max: float
    verdict: str
    calibration: str
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    @property
    def max_diff(self) -> float:
        return max((r.diff for r in self.rows), default=0.0)

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "experiment": "sweep_phi",
            "params": self.params,
            "rows": [{"phi_i": r.phi_i, "phi_j": r.phi_j, "diff_h1_ET": r.diff, "bound": r.bound,
                      "pass": r.passed} for r in self.rows],
            "slope": None,
            "gamma_max": self.gamma_max,
            "verdict": self.verdict,
            "oracle_errors": {repr(k): v for k, v in self.errors.items()},
            "calibration": self.calibration,
            "R": self.R,
        }


def sweep_phi(config: ProblemConfig, phi_values=None, R: float | None = None,
              workers: int | None = None) -> PhiReport:
    """Pairwise H^1(E^T) differences between solutions computed with different angles."""
    phis = [float(p) for p in (phi_values if phi_values is not None else config.phi_values)]
    R = config.R if R is None else float(R)
    if len(phis) < 2:
        raise ValidationError("need at least two angles")
    with stage("validate"):
        validate_config(config, phis=phis, R_values=[R])
    workers = workers or config.workers
    runs = _map(lambda p: _solve(config, R=R, phi=p)[0], phis, workers)
    oracle = has_exact_solution(config)
    errors = {}
    if oracle:
        ex = exact_solution(config)  # identical on E^T for every angle
        errors = {p: error_vs_reference(f, ex).h1 for p, f in zip(phis, runs)}
    rows = []
    h2 = max(config.h_t, config.h_y) ** 2
    for i in range(len(phis)):
        for j in range(i + 1, len(phis)):
            diff = error_vs_reference(runs[i], runs[j]).h1
            if oracle:
                bound = FLOOR_FACTOR * min(errors[phis[i]], errors[phis[j]])
            else:
                g = min(config.rates(phis[i]).decay_rate, config.rates(phis[j]).decay_rate)
                scale = norm_weighted(runs[i], "ET", "H1")
                bound = FLOOR_FACTOR * (h2 + math.exp(-g * (R - config.T))) * scale
            rows.append(PhiRow(phis[i], phis[j], diff, bound))
    verdict = "PASS" if all(r.passed for r in rows) else "FAIL"
    return PhiReport(rows=rows, errors=errors, R=R, gamma_max=config.rates().gamma_max, verdict=verdict,
                     calibration="oracle" if oracle else "heuristic",
                     params=dict(config.to_dict(), phi_values=phis, R=R))


# ---------------------------------------------------------------------------
# h sweep


@dataclass
class HRow:
    level: int
    h_t: float
    h_y: float
    error_l2: float
    error_h1: float
    order_l2: float | None = None
    order_h1: float | None = None


@dataclass
class HReport:
    rows: list[HRow]
    verdict: str
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "experiment": "sweep_h",
            "params": self.params,
            "rows": [vars(r) for r in self.rows],
            "slope": None,
            "gamma_max": None,
            "verdict": self.verdict,
        }


def _order(e_coarse, e_fine, ratio):
    if e_coarse == 0 and e_fine == 0:
        return math.inf  # exact
    if e_coarse <= 0 or e_fine <= 0:
        return None
    return math.log(e_coarse / e_fine) / math.log(ratio)


def sweep_h(config: ProblemConfig, levels=None, R: float | None = None,
            workers: int | None = None) -> HReport:
    """Dyadic refinement against the oracle with errors at Gauss points."""
    levels = sorted(int(v) for v in (levels if levels is not None else config.h_levels))
    if not levels:
        raise ValidationError("need at least one refinement level")
    R = config.R if R is None else float(R)
    Ny0, Nt0 = config.h_base
    base = config.with_(Ny=Ny0, Nt_phys=Nt0, Nt_pml=None)
    with stage("validate"):
        validate_config(base, R_values=[R])
    if not config.is_modal:
        raise ValidationError("h sweep needs an oracle (flat bottom, y-independent potential)")
    nt_pml0 = base.nt_pml_for(R)
    kind, ref = _reference(config, config.phi)
    workers = workers or config.workers

    def run(level):
        f, _ = _solve(base, R=R, Ny=Ny0 * level, Nt_phys=Nt0 * level, Nt_pml=nt_pml0 * level)
        e = error_vs_reference(f, ref, mode="quadrature") if not config.source.is_zero else None
        return f, e
    results = _map(run, levels, workers)
    rows = []
    for lv, (f, e) in zip(levels, results):
        l2 = e.l2 if e else 0.0
        h1 = e.h1 if e else 0.0
        rows.append(HRow(lv, base.h_t / lv, base.h_y / lv, l2, h1))
    for a, b in zip(rows, rows[1:]):
        ratio = b.level / a.level
        b.order_l2 = _order(a.error_l2, b.error_l2, ratio)
        b.order_h1 = _order(a.error_h1, b.error_h1, ratio)
    verdict = "PASS"
    if len(rows) >= 2:
        last = rows[-1]
        ok = (last.order_l2 is not None and last.order_l2 >= 1.7
              and last.order_h1 is not None and last.order_h1 >= 0.7)
        verdict = "PASS" if ok else "FAIL"
    return HReport(rows=rows, verdict=verdict,
                   params=dict(config.to_dict(), levels=levels, R=R, reference=kind))


# ---------------------------------------------------------------------------
# stability


@dataclass
class StabilityReport:
    rows: list
    variation: float
    verdict: str
    R0_estimate: float | None
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "experiment": "stability",
            "params": self.params,
            "rows": [{"R": r.R, "norm_h1_ER": r.norm_h1, "seconds": r.seconds if timing else 0.0}
                     for r in self.rows],
            "slope": None,
            "gamma_max": None,
            "variation": self.variation,
            "tolerance": STABILITY_TOL,
            "R0_estimate": self.R0_estimate,
            "verdict": self.verdict,
        }


def stability(config: ProblemConfig, R_values=None) -> StabilityReport:
    R_values = list(R_values if R_values is not None else config.stability_R_values)
    with stage("validate"):
        validate_config(config, R_values=R_values)
    rows = stability_scan(config, R_values)
    norms = np.array([r.norm_h1 for r in rows])
    variation = float((norms.max() - norms.min()) / norms.min()) if norms.min() > 0 else 0.0
    # smallest R from which all later norms stay within tolerance of each other
    r0 = None
    for i in range(len(rows)):
        tail = norms[i:]
        if tail.min() == 0 or (tail.max() - tail.min()) / tail.min() <= STABILITY_TOL:
            r0 = rows[i].R
            break
    verdict = "PASS" if variation <= STABILITY_TOL else "FAIL"
    return StabilityReport(rows=rows, variation=variation, verdict=verdict, R0_estimate=r0,
                           params=dict(config.to_dict(), R_values=R_values))


# ---------------------------------------------------------------------------
# output


CSV_HEADERS = {
    "sweep_R": ["R", "error_h1_ET", "norm_h1", "seconds"],
    "sweep_phi": ["phi_i", "phi_j", "diff_h1_ET", "bound", "pass"],
    "sweep_h": ["level", "h_t", "h_y", "error_l2_ET", "error_h1_ET", "order_l2", "order_h1"],
    "stability": ["R", "norm_h1_ER", "seconds"],
}


def csv_rows(report, timing: bool = True) -> tuple[list[str], list[list]]:
    d = report.to_dict(timing)
    exp = d["experiment"]
    if exp == "sweep_R":
        body = [[r["R"], r["error_h1_ET"], r["norm_h1"], r["seconds"]] for r in d["rows"]]
    elif exp == "sweep_phi":
        body = [[r["phi_i"], r["phi_j"], r["diff_h1_ET"], r["bound"], int(r["pass"])] for r in d["rows"]]
    elif exp == "sweep_h":
        body = [[r["level"], r["h_t"], r["h_y"], r["error_l2"], r["error_h1"],
                 "" if r["order_l2"] is None else r["order_l2"],
                 "" if r["order_h1"] is None else r["order_h1"]] for r in d["rows"]]
    else:
        body = [[r["R"], r["norm_h1_ER"], r["seconds"]] for r in d["rows"]]
    return CSV_HEADERS[exp], body


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(report, path, timing: bool = True) -> None:
    header, body = csv_rows(report, timing)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in body:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(report, path, timing: bool = True) -> None:
    Path(path).write_text(json.dumps(_jsonable(report.to_dict(timing)), indent=2, sort_keys=True) + "\n")


def write_svg(path, x, y, xlabel: str = "x", ylabel: str = "y", logy: bool = True,
              width: int = 480, height: int = 320) -> None:
    """Single polyline with axes; no external renderer."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(y) & ((y > 0) if logy else True)
    x, y = x[keep], y[keep]
    yy = np.log10(y) if logy else y
    pad = 50
    if x.size == 0:
        pts = ""
    else:
        x0, x1 = x.min(), x.max() if x.max() > x.min() else x.min() + 1
        y0, y1 = yy.min(), yy.max() if yy.max() > yy.min() else yy.min() + 1
        px = pad + (x - x0) / (x1 - x0) * (width - 2 * pad)
        py = height - pad - (yy - y0) / (y1 - y0) * (height - 2 * pad)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    ylab = f"log10 {ylabel}" if logy else ylabel
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
           f'<rect width="100%" height="100%" fill="white"/>\n'
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>\n'
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
           f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>\n'
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">{xlabel}</text>\n'
           f'<text x="15" y="{height / 2}" transform="rotate(-90 15 {height / 2})" '
           f'text-anchor="middle">{ylab}</text>\n</svg>\n')
    Path(path).write_text(svg)
