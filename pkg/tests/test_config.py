import json
import math

import pytest

from asyncmot.config import ConfigError, TrackerConfig, config_from_dict, load_config


def doc(**kw):
    return {"version": 1, **kw}


def test_defaults_validate_and_per_class_overrides_apply():
    cfg = TrackerConfig()
    assert cfg.for_class("pedestrian").q_accel == 2.0
    assert cfg.for_class("car").q_accel == cfg.params.q_accel
    assert cfg.for_class("bicycle") == cfg.params
    assert cfg.params.lift_gate == math.inf


def test_yaml_document(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(
        "version: 1\nuse_async: false\nphases: [ma, p3da]\n"
        "params: {theta_del: 0.2, align_max_iter: 20, dim_max: [3, 7, 3]}\n"
        "per_class:\n  pedestrian: {theta_tm: 0.8}\n",
        encoding="utf-8",
    )
    cfg = load_config(path)
    assert cfg.use_async is False and cfg.phases == ("ma", "p3da")
    assert cfg.params.theta_del == 0.2 and cfg.params.align_max_iter == 20
    assert cfg.params.dim_max == (3.0, 7.0, 3.0)
    assert cfg.for_class("pedestrian").theta_tm == 0.8
    # default per-class entries survive a partial override
    assert cfg.for_class("pedestrian").q_accel == 2.0


def test_yaml_infinity_disables_a_cap(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("version: 1\nparams: {align_max_shift: .inf}\n", encoding="utf-8")
    assert load_config(path).params.align_max_shift == math.inf


def test_round_trip_through_json(tmp_path):
    cfg = TrackerConfig().with_params(theta_del=0.15)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()), encoding="utf-8")
    back = load_config(path)
    assert back.params == cfg.params and back.per_class.keys() == cfg.per_class.keys()
    for cls in cfg.per_class:
        assert back.for_class(cls) == cfg.for_class(cls)


def test_with_params_drops_conflicting_class_overrides():
    cfg = TrackerConfig().with_params(q_accel=1.0)
    assert cfg.for_class("pedestrian").q_accel == 1.0


@pytest.mark.parametrize(
    "document, message",
    [
        ({}, "missing config key 'version'"),
        (doc(version=2), "version"),
        (doc(colour="red"), "unknown config key 'colour'"),
        (doc(params={"nope": 1}), "params.nope"),
        (doc(params={"alpha": 1.2}), "params.alpha"),
        (doc(params={"gamma": 0.5}), "params.gamma"),
        (doc(params={"theta_fm": "abc"}), "params.theta_fm"),
        (doc(params={"align_max_iter": 2.5}), "params.align_max_iter"),
        (doc(params={"align_metric": 3}), "params.align_metric"),
        (doc(params={"dim_min": "abc"}), "params.dim_min"),
        (doc(params={"lift_gate": 0}), "params.lift_gate"),
        (doc(params=[1, 2]), "params"),
        (doc(per_class={"car": {"nope": 1}}), "per_class.car.nope"),
        (doc(per_class={"car": {"alpha": -1}}), "per_class.car"),
        (doc(per_class={"car": {"theta_tm": "x"}}), "per_class.car.theta_tm"),
        (doc(per_class={"car": 3}), "per_class.car"),
        (doc(phases=["ma", "bogus"]), "phases"),
        (doc(phases="ma"), "phases"),
        (doc(use_async="yes"), "use_async"),
        (doc(association_space="pixels"), "association_space"),
        ([1, 2], "mapping"),
    ],
)
def test_invalid_documents_name_the_key(document, message):
    with pytest.raises(ConfigError, match=message.replace(".", r"\.")):
        config_from_dict(document)
