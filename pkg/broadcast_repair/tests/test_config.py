import json

import pytest

from broadcast_repair.config import load_config, parse_settings
from broadcast_repair.errors import InvalidParameters


def test_parse_settings_accepts_both_separators():
    settings = parse_settings(["n=8", "k: 3", "a=2; b=1", "q=2^8\nw=3", "collector=9,11,12", "t=2"])
    assert settings == {
        "n": "8",
        "k": "3",
        "alpha": "2",
        "beta": "1",
        "field": "2^8",
        "omega": "3",
        "collector": [9, 11, 12],
        "T": "2",
    }


def test_unknown_settings_are_rejected():
    with pytest.raises(InvalidParameters) as exc:
        parse_settings(["n=8", "colour=blue", "oops"])
    assert "colour=blue" in str(exc.value)
    assert "oops" in str(exc.value)


def test_config_coerces_values():
    config = load_config(["n=8", "k=3", "d=4", "r=2", "alpha=2", "beta=1", "store_received=true", "seed=7"])
    params = config.params()
    assert (params.n, params.alpha, params.T) == (8, 2, None)
    assert config.store_received is True
    assert config.seed == 7
    assert config.field_spec().order == 47


def test_missing_parameters():
    config = load_config(["n=8", "k=3"])
    with pytest.raises(InvalidParameters) as exc:
        config.params()
    assert "alpha" in str(exc.value)


def test_environment_caps(monkeypatch):
    monkeypatch.setenv("BROADCAST_REPAIR_INSTANCE_CAP", "10")
    monkeypatch.setenv("BROADCAST_REPAIR_OUT", "from-env")
    config = load_config(["out=from-args"])
    assert config.instance_cap == 10
    assert config.out == "from-args"


def test_file_then_command_line(tmp_path, monkeypatch):
    monkeypatch.delenv("BROADCAST_REPAIR_INSTANCE_CAP", raising=False)
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"params": {"n": 4, "k": 2, "d": 2, "r": 1, "alpha": 2, "beta": 1}, "seed": 1, "field": "2^8"}))
    config = load_config(["seed=2"], path)
    assert config.seed == 2
    assert config.field == "2^8"
    assert config.params().n == 4


def test_invalid_values_are_reported(tmp_path):
    with pytest.raises(InvalidParameters):
        load_config(["n=eight"])
    with pytest.raises(InvalidParameters):
        load_config(["mode=sideways"])
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"unexpected": 1}))
    with pytest.raises(InvalidParameters):
        load_config([], path)
    path.write_text("{nope")
    with pytest.raises(InvalidParameters):
        load_config([], path)
