import json
import math
from pathlib import Path

import pytest

from periodic_pml.config import (BUILTIN, ProblemConfig, canonical_config, load_config, parse_angle,
                                 power_decay_config, save_config, validate_config)
from periodic_pml.errors import ThresholdViolation, ValidationError
from periodic_pml.model import BumpProfile, ModalComponent, PotentialSpec, SourceSpec

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_round_trip(name, tmp_path):
    cfg = BUILTIN[name]()
    assert ProblemConfig.from_dict(cfg.to_dict()) == cfg
    p = tmp_path / "c.json"
    save_config(cfg, p)
    assert load_config(p) == cfg


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_shipped_files_match_builtins(name):
    assert load_config(CONFIG_DIR / f"{name}.json") == BUILTIN[name]()


@pytest.mark.parametrize("text,value", [
    ("pi/4", math.pi / 4), ("2*pi/7", 2 * math.pi / 7), ("pi", math.pi), (" pi / 3 ", math.pi / 3),
    ("0.5", 0.5), (0.25, 0.25), (1, 1.0),
])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value, rel=1e-15)


def test_parse_angle_rejects():
    with pytest.raises(ValidationError):
        parse_angle("quarter turn")


def base_dict():
    return canonical_config().to_dict()


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d.pop("k"), "<root>"),
    (lambda d: d.update(alpha=1.0), "alpha"),
    (lambda d: d.update(T=-1.0), "T"),
    (lambda d: d["source"]["components"][0]["profile"].update(kind="gauss"), "source/components/0/profile/kind"),
    (lambda d: d["mesh"].update(Ny="32"), "mesh/Ny"),
    (lambda d: d.update(colour="red"), "<root>"),
])
def test_schema_errors_name_field(mutate, path):
    d = base_dict()
    mutate(d)
    with pytest.raises(ValidationError) as exc:
        ProblemConfig.from_dict(d)
    assert f"'{path}'" in str(exc.value)


def test_missing_file(tmp_path):
    p = tmp_path / "nope.json"
    with pytest.raises(ValidationError) as exc:
        load_config(p)
    assert str(p) in str(exc.value)


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "k": 1.5,\n  "T": \n}\n')
    with pytest.raises(ValidationError) as exc:
        load_config(p)
    assert "line 4" in str(exc.value)


def test_defaults_fill_in():
    cfg = ProblemConfig.from_dict({"k": 1.5, "T": 2.0, "source": {"components": []}})
    assert cfg.R == 5.0 and cfg.Ny == 32 and cfg.phi == pytest.approx(math.pi / 4)
    assert cfg.tau == 1.0
    cfg = ProblemConfig.from_dict({"k": 1.5, "T": 2.0, "source": {"components": [], "tau": None}})
    assert cfg.tau == math.inf


class TestValidate:
    def test_canonical_clean(self):
        assert validate_config(canonical_config(), canonical_config().phi_values,
                               canonical_config().R_values) == []

    def test_threshold(self):
        with pytest.raises(ThresholdViolation):
            validate_config(canonical_config(k=1.0))

    def test_phi_range(self):
        with pytest.raises(ValidationError):
            validate_config(canonical_config(), phis=[math.pi / 2])

    def test_R_below_T(self):
        with pytest.raises(ValidationError):
            validate_config(canonical_config(), R_values=[1.5])

    def test_source_past_T(self):
        src = SourceSpec(components=(ModalComponent(0, BumpProfile(1.5, 2.5)),), tau=1.0)
        with pytest.raises(ValidationError):
            validate_config(canonical_config(source=src))

    def test_unresolved_mode(self):
        src = SourceSpec(components=(ModalComponent(4, BumpProfile(0.5, 1.5)),), tau=1.0)
        with pytest.raises(ValidationError):
            validate_config(canonical_config(source=src, Ny=8))

    def test_coarse_mesh(self):
        with pytest.raises(ValidationError):
            validate_config(canonical_config(Nt_phys=3))

    def test_singular_boundary(self):
        pot = PotentialSpec(kind="power_decay", amplitude=0.5, nu=-1.0, offset=0.1)
        from periodic_pml.model import TrigPoly
        with pytest.raises(ValidationError):
            validate_config(power_decay_config(potential=pot, geometry=TrigPoly(cos=(-0.2,))))

    def test_strong_interface_potential_warns(self):
        pot = PotentialSpec(kind="power_decay", amplitude=5.0, nu=-1.0, offset=1.0)
        w = validate_config(power_decay_config(potential=pot))
        assert len(w) == 1 and "k^2" in w[0]


def test_shipped_files_are_json():
    for p in CONFIG_DIR.glob("*.json"):
        json.loads(p.read_text())
