import math

import numpy as np
import pytest

from gpsafety.config import build_config, config_echo, parse_config
from gpsafety.errors import ConfigurationError

BASE = {
    "system.name": "rotation",
    "grid.safe_box": "-4 4 -4 4",
    "grid.h": "0.25",
    "data.n_d": "1000",
    "data.sigma": "0.01",
    "data.seed": "0",
    "output.dir": "/tmp/out",
    "bounds.epsilon": "0.12",
}


def test_minimal_config_and_defaults():
    cfg = build_config(dict(BASE))
    assert cfg.system_name == "rotation"
    np.testing.assert_array_equal(cfg.safe_box.lower, [-4.0, -4.0])
    np.testing.assert_array_equal(cfg.safe_box.upper, [4.0, 4.0])
    assert cfg.h == 0.25
    assert cfg.epsilon == 0.12
    assert cfg.epsilon_mode == "explicit"
    assert cfg.delta == 0.0
    assert cfg.subgrid_k == 3
    assert cfg.horizon == 10
    assert cfg.gp_lambda is None


def test_comma_separated_box():
    raw = dict(BASE)
    raw["grid.safe_box"] = "-4,4,-4,4"
    cfg = build_config(raw)
    np.testing.assert_array_equal(cfg.safe_box.upper, [4.0, 4.0])


def test_unknown_key_rejected():
    raw = dict(BASE)
    raw["grid.step"] = "0.25"
    with pytest.raises(ConfigurationError, match="unknown keys: grid.step"):
        build_config(raw)


def test_missing_keys_reported():
    raw = dict(BASE)
    del raw["data.sigma"]
    del raw["grid.h"]
    with pytest.raises(ConfigurationError, match="data.sigma"):
        build_config(raw)


def test_validation_errors():
    raw = dict(BASE)
    raw["grid.h"] = "-1"
    with pytest.raises(ConfigurationError, match="grid.h"):
        build_config(raw)
    raw = dict(BASE)
    del raw["bounds.epsilon"]
    with pytest.raises(ConfigurationError, match="bounds.epsilon"):
        build_config(raw)
    raw = dict(BASE)
    raw["bounds.epsilon_mode"] = "derived_lemma"  # delta still zero
    with pytest.raises(ConfigurationError, match="delta"):
        build_config(raw)


def test_infinite_horizon():
    raw = dict(BASE)
    raw["verify.horizon"] = "inf"
    cfg = build_config(raw)
    assert math.isinf(cfg.horizon)
    assert config_echo(cfg)["T"] == "inf"


def test_parse_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    lines = [f"{k} = {v}" for k, v in BASE.items()]
    lines.insert(0, "# comment line")
    lines.insert(1, "")
    path.write_text("\n".join(lines) + "\n")
    cfg = parse_config(str(path))
    assert cfg.n_d == 1000
    echo = config_echo(cfg)
    assert echo["system"] == "rotation"
    assert echo["epsilon"] == 0.12
    assert echo["T"] == 10


def test_malformed_line(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("system.name rotation\n")
    with pytest.raises(ConfigurationError, match="key = value"):
        parse_config(str(path))
