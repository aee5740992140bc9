from __future__ import annotations

import json

import numpy as np
import pytest

from fastslow import io
from fastslow.config import PRESETS, RunConfig, load_config, parse_config, with_overrides
from fastslow.ensemble import Histogram, MomentPoint
from fastslow.errors import ConfigError
from fastslow.sde import Interpretation
from fastslow.levy import TailFit


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = load_config(name)
    assert cfg.name == name
    assert cfg.seed == 0


def test_preset_contents():
    assert load_config("paper-sec6").sigma.orbit_length == 10_000_000
    assert load_config("paper-fig1").compare.epsilons == [0.8, 0.4, 0.2]
    fig2 = load_config("paper-fig2")
    assert fig2.sde.interpretations == ["drift_corrected", "ito", "stratonovich"]
    assert load_config("paper-fig3").moments.T == 15.0
    assert load_config("levy-sec5").levy.gamma == 0.75


def test_unknown_keys_are_errors():
    with pytest.raises(ConfigError):
        parse_config({"bogus": 1})
    with pytest.raises(ConfigError):
        parse_config({"map": {"kind": "doubling", "colour": "red"}})
    with pytest.raises(ConfigError):
        parse_config({"levy": {"gamma": 0.4}})
    with pytest.raises(ConfigError):
        parse_config({"compare": {"epsilons": [0.0]}})
    with pytest.raises(ConfigError):
        parse_config([1, 2])


def test_missing_file_and_bad_yaml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("map: [unclosed")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_run_record_is_a_config(tmp_path):
    cfg = with_overrides(load_config("paper-fig1"), seed=9, realizations=10)
    doc = {"config": cfg.model_dump(mode="json"), "results": {"anything": 1}}
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    assert load_config(p) == cfg


def test_overrides_reset_section_sizes():
    cfg = with_overrides(load_config("paper-fig2"), realizations=12, workers=3)
    assert cfg.realizations == 12 and cfg.sde.realizations is None and cfg.workers == 3
    assert with_overrides(cfg, seed=None) == cfg


def test_translation():
    cfg = load_config("paper-fig2")
    dc = cfg.sde_spec("drift_corrected", 0.085, 0.319)
    assert dc.interpretation is Interpretation.DRIFT_CORRECTED
    assert dc.effective_drift()(1.0) == pytest.approx(0.5 * (0.75 - 1.0) * 0.319 - 0.0585)
    mv = cfg.sde_spec("marcus_via_transform", 0.085, 0.319)
    assert mv.drift(1.0) == pytest.approx(0.5 * (0.75 - 1.0) * 0.319 - 0.25 * 0.319)
    cir = cfg.cir_params(0.085, 0.319)
    assert cir.alpha == pytest.approx(0.1595)
    with pytest.raises(ConfigError):
        cfg.sde_spec("bogus", 0.085, 0.319)
    assert cfg.slow_system(0.2).epsilon == 0.2


def test_csv_writers(tmp_path):
    h = Histogram(np.array([0.0, 0.5, 1.0]), np.array([0.25, 0.75]))
    io.write_density(tmp_path / "d.csv", [("a", h)])
    rows = io.read_rows(tmp_path / "d.csv")
    assert rows[1] == {"source": "a", "bin_left": "0.5", "bin_right": "1.0", "mass": "0.75"}
    io.write_moments(tmp_path / "m.csv", [("s", [MomentPoint(0.0, 1.0, 0.1)])])
    assert io.read_rows(tmp_path / "m.csv")[0]["se"] == "0.1"
    io.write_tail(tmp_path / "t.csv", [("x", TailFit(1.3, -1.3, 0.1, 1.0, 10.0, 25, 100))])
    assert io.read_rows(tmp_path / "t.csv")[0]["exponent"] == "1.3"


def test_json_is_deterministic_and_finite(tmp_path):
    p = io.write_json(tmp_path / "x.json", {"b": np.float64(np.nan), "a": np.arange(2)})
    assert p.read_text() == '{\n  "a": [\n    0,\n    1\n  ],\n  "b": null\n}\n'
    assert io.dumps({"z": 1, "a": 2}) == '{"a": 2, "z": 1}'


def test_default_config_is_valid():
    RunConfig()
