"""Problem configuration: JSON schema, validating loader and the mesh->solve pipeline."""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .errors import ValidationError
from .fem import AssembledSystem, DofMap, Mesh, assemble, build_dofmap, build_mesh
from .model import (Geometry, PotentialSpec, SourceSpec, TrigPoly, check_potential_admissibility,
                    check_source_admissibility, interface_potential_ratio)
from .modes import default_window, mode_spectrum, pml_rates, validate_parameters

log = logging.getLogger(__name__)

_ANGLE = {"oneOf": [{"type": "number"}, {"type": "string"}]}
_NUMLIST = {"type": "array", "items": {"type": "number"}}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "periodic_pml problem configuration",
    "type": "object",
    "required": ["k", "T", "source"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "k": {"type": "number"},
        "alpha": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "phi": _ANGLE,
        "T": {"type": "number", "exclusiveMinimum": 0},
        "R": {"type": "number"},
        "n_window": {"type": ["integer", "null"], "minimum": 1},
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"cos": _NUMLIST, "sin": _NUMLIST},
        },
        "potential": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["zero", "compact_bump", "power_decay", "log_decay"]},
                "amplitude": {"type": "number"},
                "y_factor": {"type": "object"},
                "nu": {"type": "number", "exclusiveMaximum": 0},
                "offset": {"type": "number", "exclusiveMinimum": 0},
                "t0": {"type": "number"},
                "t1": {"type": "number"},
                "onset": {"type": "number"},
                "cone_angle": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "source": {
            "type": "object",
            "required": ["components"],
            "additionalProperties": False,
            "properties": {
                "tau": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "components": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["n", "profile"],
                        "additionalProperties": False,
                        "properties": {
                            "n": {"type": "integer"},
                            "amplitude": {"oneOf": [
                                {"type": "number"},
                                {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                            ]},
                            "profile": {
                                "type": "object",
                                "required": ["kind"],
                                "properties": {
                                    "kind": {"enum": ["compact_bump", "box", "exp_decay"]},
                                    "t0": {"type": "number"},
                                    "t1": {"type": "number"},
                                    "mu": {"type": "number", "exclusiveMinimum": 0},
                                    "onset": {"type": "number"},
                                },
                                "additionalProperties": False,
                            },
                        },
                    },
                },
            },
        },
        "mesh": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "Ny": {"type": "integer", "minimum": 4},
                "Nt_phys": {"type": "integer", "minimum": 2},
                "Nt_pml": {"type": ["integer", "null"], "minimum": 2},
            },
        },
        "experiments": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "R_values": _NUMLIST,
                "phi_values": {"type": "array", "items": _ANGLE},
                "stability_R_values": _NUMLIST,
                "h_levels": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "h_base": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"Ny": {"type": "integer"}, "Nt_phys": {"type": "integer"}},
                },
                "slope_factor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "reference": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "refine": {"type": "integer", "minimum": 1},
                "R_factor": {"type": "number", "minimum": 1},
            },
        },
        "workers": {"type": "integer", "minimum": 1},
    },
}

_PI_RE = re.compile(r"^\s*(?P<num>\d+(\.\d*)?)?\s*\*?\s*pi\s*(/\s*(?P<den>\d+(\.\d*)?))?\s*$")


def parse_angle(value) -> float:
    """Number, or a string such as 'pi/4' or '2*pi/7'."""
    if isinstance(value, (int, float)):
        return float(value)
    m = _PI_RE.match(str(value))
    if not m:
        try:
            return float(value)
        except ValueError:
            raise ValidationError(f"cannot parse angle {value!r}") from None
    num = float(m.group("num") or 1.0)
    den = float(m.group("den") or 1.0)
    return num * math.pi / den


@dataclass(frozen=True)
class ProblemConfig:
    k: float = 1.5
    alpha: float = 0.0
    phi: float = math.pi / 4
    T: float = 2.0
    R: float = 5.0
    geometry: TrigPoly = field(default_factory=TrigPoly)
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    source: SourceSpec = field(default_factory=SourceSpec)
    Ny: int = 32
    Nt_phys: int = 400
    Nt_pml: int | None = None
    R_values: tuple[float, ...] = (3.0, 4.0, 5.0, 6.0, 7.0)
    phi_values: tuple[float, ...] = (math.pi / 6, math.pi / 4, math.pi / 3)
    stability_R_values: tuple[float, ...] = (4.0, 6.0, 8.0, 10.0)
    h_levels: tuple[int, ...] = (1, 2, 4)
    h_base: tuple[int, int] = (8, 8)
    slope_factor: float = 0.9
    ref_refine: int = 8
    ref_R_factor: float = 4.0
    n_window: int | None = None
    workers: int = 1
    name: str = "unnamed"

    # -- derived -------------------------------------------------------------
    @property
    def tau(self) -> float:
        return self.source.tau

    @property
    def window(self) -> int:
        return self.n_window or default_window(self.k)

    @property
    def geometry_obj(self) -> Geometry:
        return Geometry(boundary=self.geometry, T=self.T, R=self.R)

    @property
    def h_t(self) -> float:
        """Element height below T (for a flat bottom)."""
        return (self.T - self.geometry.constant) / self.Nt_phys

    @property
    def h_pml(self) -> float:
        if self.Nt_pml:
            return (self.R - self.T) / self.Nt_pml
        return self.h_t

    @property
    def h_y(self) -> float:
        return 2 * math.pi / self.Ny

    @property
    def is_modal(self) -> bool:
        """Modes decouple: flat bottom and a potential independent of y."""
        return self.geometry.is_constant and self.potential.t_only

    def nt_pml_for(self, R: float) -> int:
        if self.Nt_pml and abs(R - self.R) < 1e-12:
            return self.Nt_pml
        return max(2, int(round((R - self.T) / self.h_pml)))

    def spectrum(self):
        return mode_spectrum(self.k, self.alpha, self.window)

    def rates(self, phi: float | None = None):
        return pml_rates(self.spectrum(), self.phi if phi is None else phi, self.tau)

    def with_(self, **kw) -> "ProblemConfig":
        return replace(self, **kw)

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "k": self.k,
            "alpha": self.alpha,
            "phi": self.phi,
            "T": self.T,
            "R": self.R,
            "n_window": self.n_window,
            "geometry": self.geometry.to_dict(),
            "potential": self.potential.to_dict(),
            "source": self.source.to_dict(),
            "mesh": {"Ny": self.Ny, "Nt_phys": self.Nt_phys, "Nt_pml": self.Nt_pml},
            "experiments": {
                "R_values": list(self.R_values),
                "phi_values": list(self.phi_values),
                "stability_R_values": list(self.stability_R_values),
                "h_levels": list(self.h_levels),
                "h_base": {"Ny": self.h_base[0], "Nt_phys": self.h_base[1]},
                "slope_factor": self.slope_factor,
            },
            "reference": {"refine": self.ref_refine, "R_factor": self.ref_R_factor},
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemConfig":
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ValidationError(f"config field '{where}': {exc.message}") from None
        mesh = d.get("mesh", {})
        exp = d.get("experiments", {})
        ref = d.get("reference", {})
        base = exp.get("h_base", {})
        kw = dict(
            k=float(d["k"]),
            alpha=float(d.get("alpha", 0.0)),
            phi=parse_angle(d.get("phi", math.pi / 4)),
            T=float(d["T"]),
            R=float(d.get("R", max(exp.get("R_values", [d["T"] + 3.0])))),
            geometry=TrigPoly.from_dict(d.get("geometry", {})),
            potential=PotentialSpec.from_dict(d.get("potential", {"kind": "zero"})),
            source=SourceSpec.from_dict(d["source"]),
            Ny=int(mesh.get("Ny", 32)),
            Nt_phys=int(mesh.get("Nt_phys", 400)),
            Nt_pml=mesh.get("Nt_pml"),
            n_window=d.get("n_window"),
            workers=int(d.get("workers", 1)),
            name=d.get("name", "unnamed"),
            ref_refine=int(ref.get("refine", 8)),
            ref_R_factor=float(ref.get("R_factor", 4.0)),
            slope_factor=float(exp.get("slope_factor", 0.9)),
            h_base=(int(base.get("Ny", 8)), int(base.get("Nt_phys", 8))),
        )
        for key in ("R_values", "stability_R_values"):
            if key in exp:
                kw[key] = tuple(float(v) for v in exp[key])
        if "phi_values" in exp:
            kw["phi_values"] = tuple(parse_angle(v) for v in exp["phi_values"])
        if "h_levels" in exp:
            kw["h_levels"] = tuple(int(v) for v in exp["h_levels"])
        return cls(**kw)


def load_config(path) -> ProblemConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return ProblemConfig.from_dict(data)


def save_config(config: ProblemConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


def validate_config(config: ProblemConfig, phis=None, R_values=None) -> list[str]:
    """Cross-validate a configuration; returns warnings, raises ValidationError."""
    warnings: list[str] = []
    validate_parameters(config.k, config.alpha, config.window)
    phis = [config.phi] + list(phis or [])
    for phi in phis:
        if not 0 < phi < math.pi / 2:
            raise ValidationError(f"phi={phi} outside (0, pi/2)")
    Rs = [config.R] + list(R_values or [])
    if min(Rs) <= config.T:
        raise ValidationError(f"T={config.T} must be below every R (min R = {min(Rs)})")
    config.geometry_obj.validate()
    gmin = config.geometry_obj.g_min()
    pot = config.potential
    if pot.kind == "power_decay" and not pot.is_zero and gmin <= -pot.offset:
        raise ValidationError("boundary reaches the singularity of the power-decay potential")
    if pot.kind == "log_decay" and not pot.is_zero and gmin <= 1 - math.e:
        raise ValidationError("boundary reaches the singularity of the log-decay potential")
    if config.T <= pot.onset:
        raise ValidationError(f"T={config.T} must exceed the analyticity onset {pot.onset} of the potential")
    for phi in phis:
        rep = check_potential_admissibility(pot, config.T, phi)
        if not rep.passed:
            raise ValidationError(f"potential not admissible at phi={phi:.4f}: {rep.detail}")
        check_source_admissibility(config.source, config.T, phi, config.tau)
    for c in config.source.components:
        if c.profile.support_end > config.T and math.isfinite(c.profile.support_end):
            raise ValidationError(f"compact source of mode {c.n} extends past T={config.T}")
        if abs(c.n) > config.Ny // 2 - 1:
            raise ValidationError(f"source mode n={c.n} not resolved by Ny={config.Ny}")
    # PML resolution: at least 8 nodes per shortest propagating t-wavelength
    spec = config.spectrum()
    lam_max = max((e.lambda_minus.real for e in spec.propagating), default=abs(config.k))
    wavelength = 2 * math.pi / lam_max
    h = max(config.h_t, config.h_pml)
    if h > wavelength / 8:
        raise ValidationError(f"mesh too coarse: h_t={h:.4g} > wavelength/8 = {wavelength / 8:.4g}")
    ratio = interface_potential_ratio(pot, config.T, config.k)
    if ratio > 0.1:
        msg = f"|q(., T)| = {ratio:.2f} k^2 exceeds 10% of k^2; T may be too small"
        log.warning(msg)
        warnings.append(msg)
    return warnings


# ---------------------------------------------------------------------------
# pipeline


def build_system(config: ProblemConfig, R: float | None = None, phi: float | None = None,
                 refine: int = 1, Ny: int | None = None, Nt_phys: int | None = None,
                 Nt_pml: int | None = None) -> tuple[Mesh, DofMap, AssembledSystem]:
    R = config.R if R is None else float(R)
    phi = config.phi if phi is None else float(phi)
    Ny = (Ny or config.Ny) * refine
    Nt_phys_ = (Nt_phys or config.Nt_phys) * refine
    Nt_pml_ = (Nt_pml or config.nt_pml_for(R)) * refine
    geom = Geometry(boundary=config.geometry, T=config.T, R=R)
    mesh = build_mesh(geom, Ny, Nt_phys_, Nt_pml_)
    dofmap = build_dofmap(mesh, config.alpha)
    system = assemble(mesh, dofmap, config.potential, config.source, config.k, config.alpha, phi, config.T)
    return mesh, dofmap, system


def build_field(config: ProblemConfig, **kw):
    from .solver import solve

    _, _, system = build_system(config, **kw)
    return solve(system)


# ---------------------------------------------------------------------------
# built-in configurations


def canonical_config(**kw) -> ProblemConfig:
    """q = 0, k = 1.5, alpha = 0, phi = pi/4, T = 2, bump source on [0.5, 1.5] in mode 0."""
    from .model import BumpProfile, ModalComponent

    base = ProblemConfig(
        name="canonical",
        k=1.5, alpha=0.0, phi=math.pi / 4, T=2.0, R=12.0,
        source=SourceSpec(components=(ModalComponent(0, BumpProfile(0.5, 1.5)),), tau=1.0),
        Ny=32, Nt_phys=400,
    )
    return replace(base, **kw)


def power_decay_config(**kw) -> ProblemConfig:
    pot = PotentialSpec(kind="power_decay", amplitude=0.5, nu=-1.0, offset=1.0)
    cfg = canonical_config(name="power_decay", potential=pot)
    cfg = replace(cfg, source=replace(cfg.source, tau=math.inf))
    return replace(cfg, **kw)


def log_decay_config(**kw) -> ProblemConfig:
    pot = PotentialSpec(kind="log_decay", amplitude=0.3)
    cfg = canonical_config(name="log_decay", potential=pot)
    cfg = replace(cfg, source=replace(cfg.source, tau=math.inf))
    return replace(cfg, **kw)


BUILTIN = {"canonical": canonical_config, "power_decay": power_decay_config, "log_decay": log_decay_config}
