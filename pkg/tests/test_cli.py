import json

import pytest

from fkorn.cli import (
    ConfigError,
    canonical_json,
    config_hash,
    emit_csv,
    format_float,
    main,
    validate_config,
)

FAST = {
    "seminorm": ["--budget", "20000"],
    "korn": ["--budget", "5000", "--search-budget", "10", "--restarts", "1"],
    "extend-check": ["--budget", "20000"],
    "geom-check": ["--n", "10000"],
    "solve": ["--grid", "9"],
    "caccioppoli": ["--grid", "9", "--budget", "20000"],
    "dual-pair": ["--grid", "9", "--budget", "20000"],
    "jbound": ["--budget", "20000"],
}


def load(path):
    return json.loads(path.read_text())


@pytest.mark.parametrize("x,text", [
    (1.0, "1.000000000000e0"),
    (-0.015, "-1.500000000000e-2"),
    (0.0, "0.000000000000e0"),
    (123456.0, "1.234560000000e5"),
    (2.5e-300, "2.500000000000e-300"),
])
def test_format_float(x, text):
    assert format_float(x) == text
    assert float(text) == x


def test_canonical_json_sorted_and_stable():
    a = canonical_json({"b": 1.0, "a": [1, True, None, "x"], "c": {"z": 2, "y": 0.5}})
    b = canonical_json({"c": {"y": 0.5, "z": 2}, "a": [1, True, None, "x"], "b": 1.0})
    assert a == b
    assert a.index('"a"') < a.index('"b"') < a.index('"c"')
    assert json.loads(a)["b"] == 1.0


def test_csv_uses_crlf(tmp_path):
    path = emit_csv(["name", "value"], [("a,b", 1.5), ("c", 2)], tmp_path / "t.csv")
    raw = path.read_bytes()
    assert raw == b'name,value\r\n"a,b",1.500000000000e0\r\nc,2\r\n'


def test_config_hash_ignores_output_and_threads():
    base = {"command": "solve", "params": {"s": 0.4}, "seed": 1, "threads": 1, "out": "a"}
    assert config_hash(base) == config_hash({**base, "threads": 4, "out": "b"})
    assert config_hash(base) != config_hash({**base, "seed": 2})


def test_schema_rejects_bad_config():
    validate_config({"command": "seminorm", "params": {"s": 0.5}, "seed": 0, "threads": 1, "out": "x"})
    with pytest.raises(ConfigError):
        validate_config({"command": "seminorm", "params": {"s": 2.0}, "seed": 0, "threads": 1, "out": "x"})
    with pytest.raises(ConfigError):
        validate_config({"command": "nope", "params": {}, "seed": 0, "threads": 1, "out": "x"})


@pytest.mark.parametrize("command", list(FAST))
def test_every_command_runs(command, tmp_path):
    assert main([command, *FAST[command], "--out", str(tmp_path)]) == 0
    rep = load(tmp_path / f"{command}.json")
    assert rep["status"] == "ok"
    assert rep["command"] == command
    assert "out" not in rep["config"]


def test_usage_errors_exit_64(tmp_path, capsys):
    assert main(["seminorm", "--s", "2", "--out", str(tmp_path)]) == 64
    with pytest.raises(SystemExit) as info:
        main(["seminorm", "--bogus"])
    assert info.value.code == 64
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["seminorm", "--config", str(bad)]) == 64


def test_unmet_hypothesis_exit_2(tmp_path):
    assert main(["geom-check", "--M", "0.7", "--n", "1000", "--out", str(tmp_path)]) == 2
    assert load(tmp_path / "geom-check.json")["status"] == "hypothesis_unmet"
    assert main(["seminorm", "--s", "0.5", "--p", "2", "--budget", "2000", "--out", str(tmp_path)]) == 0
    assert main(["solve", "--s", "0.5", "--p", "2", "--out", str(tmp_path / "b")]) == 2


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "geom-check", "seed": 3, "params": {"n": 5000, "eta": 2.0}}))
    assert main(["geom-check", "--config", str(cfg), "--eta", "0.5", "--out", str(tmp_path / "o")]) == 0
    rep = load(tmp_path / "o" / "geom-check.json")
    assert rep["config"]["params"] == {"n": 5000, "eta": 0.5}
    assert rep["seed"] == 3


def test_reports_byte_identical_across_runs(tmp_path):
    args = ["seminorm", "--budget", "20000", "--seed", "11"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "seminorm.json").read_bytes() == (tmp_path / "b" / "seminorm.json").read_bytes()
