import math

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from tdmqkd.config import (
    MEASURED_QBER_20KM,
    PROVENANCE,
    ConfigError,
    RunConfig,
    SweepSpec,
    config_from_dict,
    config_to_dict,
    dump_config,
    load_config,
    parse_config,
    with_overrides,
)


def test_defaults_round_trip():
    cfg = RunConfig()
    assert parse_config(dump_config(cfg)) == cfg


def test_empty_document_gives_defaults():
    assert parse_config("") == RunConfig()


@settings(max_examples=40, deadline=None)
@given(
    mu=st.floats(0.2, 1.0),
    atten=st.floats(0.1, 0.4),
    er=st.floats(10, 60),
    seed=st.integers(0, 2**64 - 1),
    dists=st.lists(st.floats(0, 300), min_size=1, max_size=6),
    loss=st.floats(0, 3),
)
def test_round_trip_property(mu, atten, er, seed, dists, loss):
    doc = {
        "link": {"source": {"mu": mu}, "channel": {"atten_db_per_km": atten}, "chip": {"er_db": er}},
        "users": {2: {"e_misalign": 0.01, "loss_offset_db": loss}},
        "sweep": {"distances_km": dists},
        "mode": {"kind": "montecarlo", "seed": seed},
    }
    cfg = config_from_dict(doc)
    assert parse_config(dump_config(cfg)) == cfg
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_sweep_range():
    assert SweepSpec(min_km=0, max_km=20, step_km=5).distances() == [0, 5, 10, 15, 20]
    assert SweepSpec(min_km=0, max_km=1, step_km=0.1).distances()[-1] == 1.0
    assert len(RunConfig().sweep.distances()) == 31


@pytest.mark.parametrize("doc,msg", [
    ({"sweep": {"distances_km": []}}, "empty"),
    ({"sweep": {"distances_km": [-1]}}, ">= 0"),
    ({"sweep": {"min_km": 0, "max_km": 10, "step_km": 0}}, "step"),
    ({"sweep": {"min_km": 10, "max_km": 0, "step_km": 1}}, "min_km"),
    ({"sweep": {"min_km": 0}}, "needs"),
    ({"bogus": 1}, "unknown"),
    ({"link": {"source": {"muu": 0.5}}}, "unknown"),
    ({"link": {"source": {"mu": 0.1}}}, "mu > nu"),
    ({"link": {"channel": {"length_km": 3}}}, "channel"),
    ({"link": {"chip": {"er_db_per_mzi": [30, 30]}}}, "8 entries"),
    ({"link": {"chip": {"loss_2dgc_db": -1}}}, ">= 0"),
    ({"users": {5: {}}}, "outside"),
    ({"users": {1: {"e_misalign": 0.7}}}, "e_misalign"),
    ({"users": {}}, "at least one"),
    ({"mode": {"kind": "quantum"}}, "kind"),
    ({"mode": {"n_pulses": 0}}, "n_pulses"),
    ({"analysis": {"f_ec": 0.5}}, "f_ec"),
    ({"crosstalk": {"selected_user": 9}}, "selected_user"),
    ({"calibration_length_km": -3}, "calibration_length_km"),
])
def test_validation_errors(doc, msg):
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(doc)


def test_non_mapping_rejected():
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        parse_config("link: [1, 2]\n")
    with pytest.raises(ConfigError):
        parse_config("link: {source: [\n")


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_load_config_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("link:\n  chip:\n    er_db: 40\noutput_dir: here\n")
    cfg = load_config(path)
    assert cfg.chip.er_db == 40
    assert cfg.output_dir == "here"


def test_link_params_from_config():
    cfg = config_from_dict({
        "link": {"chip": {"er_db_per_mzi": [20, 30, 30, 30, 30, 30, 30, 30]}},
        "users": {3: {"loss_offset_db": 1.5}},
    })
    p = cfg.link_params(3, 20.0, e_misalign=0.01)
    assert p.user == 3 and p.extra_loss_db == 1.5 and p.channel.length_km == 20.0
    assert p.receiver.mzi[0].extinction_ratio_db == 20
    q = cfg.link_params(3, er_db=math.inf)
    assert all(s.extinction_ratio_db == math.inf for s in q.receiver.mzi)


def test_default_targets_and_provenance():
    assert {u: s.target_qber for u, s in RunConfig().users.items()} == MEASURED_QBER_20KM
    assert "detectors.dark_rate_cps" in PROVENANCE
    assert all(isinstance(v, str) and v for v in PROVENANCE.values())


def test_overrides():
    cfg = with_overrides(RunConfig(), seed=9, pulses=100, workers=2, kind="montecarlo")
    assert (cfg.mode.seed, cfg.mode.n_pulses, cfg.mode.workers, cfg.mode.kind) == (9, 100, 2, "montecarlo")
    with pytest.raises(ConfigError):
        with_overrides(RunConfig(), pulses=0)


def test_hash_tracks_content():
    a = RunConfig()
    assert a.config_hash() == RunConfig().config_hash()
    assert a.config_hash() != with_overrides(a, seed=2).config_hash()


def test_dump_is_plain_yaml():
    data = yaml.safe_load(dump_config(RunConfig()))
    assert data["link"]["source"]["mu"] == 0.6
    assert data["users"][4]["target_qber"] == 0.003559
