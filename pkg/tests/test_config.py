import math
from pathlib import Path

import pytest

from etdcapture.config import (
    ConfigError,
    EphemerisConfig,
    MetricConfig,
    PipelineConfig,
    Preset,
    RunConfig,
    SearchConfig,
    SystemConfig,
)
from etdcapture.cr3bp import SystemParams
from etdcapture.ephemeris import AnalyticEphemeris, Body, TabulatedEphemeris
from etdcapture.metric import LTB_ELEMENTS_CR3BP, LTB_ELEMENTS_EPHEMERIS

DEFAULT_YAML = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"


def test_shipped_yaml_matches_builtin_defaults():
    assert PipelineConfig.load(DEFAULT_YAML) == PipelineConfig()


def test_system_params_match_earth_moon():
    p = SystemConfig().params()
    ref = SystemParams.earth_moon()
    assert p.mu == pytest.approx(ref.mu, rel=1e-15) and p.length_unit == ref.length_unit
    assert p.time_unit == pytest.approx(ref.time_unit, rel=1e-15)


def test_unknown_keys_and_types_rejected(tmp_path):
    with pytest.raises(ConfigError):
        PipelineConfig.from_mapping({"serch": {}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_mapping({"search": {"hh": 1.0}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_mapping({"search": {"max_sections": 2.5}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_mapping({"search": [1, 2]})
    bad = tmp_path / "bad.yaml"
    bad.write_text("search: [unclosed\n")
    with pytest.raises(ConfigError):
        PipelineConfig.load(bad)
    assert PipelineConfig.from_mapping({"search": {"max_sections": 3.0}}).search.max_sections == 3


def test_overrides_and_hash():
    base = PipelineConfig()
    over = base.with_overrides({"metric.dv_threshold_mps": 40.0, "analysis.histogram_bins": None})
    assert over.metric.dv_threshold_mps == 40.0 and over.analysis == base.analysis
    assert base.hash() == PipelineConfig().hash()
    assert over.hash() != base.hash() and base.hash({"x": 1}) != base.hash()
    with pytest.raises(ConfigError):
        base.with_overrides({"metric.nope": 1})


def test_presets_scale_search():
    sc = SearchConfig()
    p = SystemConfig().params()
    full = sc.search_params(p, Preset.PAPER_FIDELITY)
    desk = sc.search_params(p, Preset.DESK_SCALE)
    assert full.h == 4e-4 and desk.h == pytest.approx(4e-3)
    assert full.tau_s == pytest.approx(20 * math.pi)
    g = sc.gammas()
    assert g[0] == 0.02 and g[-1] == pytest.approx(1.36) and len(g) == 68


def test_metric_references():
    assert MetricConfig().elements() == LTB_ELEMENTS_CR3BP
    assert MetricConfig(reference="ltb_ephemeris").elements() == LTB_ELEMENTS_EPHEMERIS
    c = MetricConfig(reference="custom", custom_elements=dict(a_lu=1.7, e=0.2, i_deg=90, raan_deg=0, argp_deg=180))
    assert c.elements().i == pytest.approx(math.pi / 2) and c.elements().argp == pytest.approx(math.pi)
    with pytest.raises(ConfigError):
        MetricConfig(reference="custom", custom_elements={"a_lu": 1.7}).elements()
    with pytest.raises(ConfigError):
        MetricConfig(reference="apollo").elements()


def test_ephemeris_providers(tmp_path):
    assert isinstance(EphemerisConfig().build(SystemConfig()), AnalyticEphemeris)
    t0 = SystemConfig().t_etd_s
    tab = TabulatedEphemeris.sample(AnalyticEphemeris(), t0, t0 + 86400.0, 3600.0)
    tab.moon.to_csv(tmp_path / "moon.csv")
    tab.sun.to_csv(tmp_path / "sun.csv")
    built = EphemerisConfig("table", "moon.csv", "sun.csv").build(SystemConfig(), tmp_path)
    assert built.coverage == tab.coverage
    r, _ = built.body_state(Body.MOON, t0)
    assert r == pytest.approx(tab.moon.r[0])
    with pytest.raises(ConfigError):
        EphemerisConfig("table").build(SystemConfig())
    with pytest.raises(ConfigError):
        EphemerisConfig("spice").build(SystemConfig())


def test_run_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig("stats", tmp_path, jobs=0)
