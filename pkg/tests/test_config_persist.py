import json

import numpy as np
import pytest

from onecut.config import ConfigError, ExperimentConfig, parse_config_text, write_resolved
from onecut.persist import (PersistError, RunManifest, VersionMismatch,
                            batch_binary_read, batch_from_csv, batch_to_binary,
                            batch_to_csv, config_hash, load_json, save_json)
from onecut.sampler import sample_tridiagonal_gaussian

CONFIG_TEXT = """
# quartic run
potential.coeffs = [0.0, 0.0, 0.35, 0.0, 0.025]
potential.d = 1.0
phi.coeffs = [0.0, 0.0, 1.0]
t = 0.0
n = 40
beta = 1
sampler.sweeps = 1000
"""


def test_parse_roundtrip():
    vals = parse_config_text(CONFIG_TEXT)
    assert vals["potential.coeffs"] == [0.0, 0.0, 0.35, 0.0, 0.025]
    assert vals["n"] == 40


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("nonsense.key = 3")


def test_bad_value_line_number():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("n = 4\nbeta = nope")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("n = 4\nn = 8")


def test_resolved_defaults_and_env(monkeypatch, tmp_path):
    cfg = ExperimentConfig(parse_config_text(CONFIG_TEXT))
    r = cfg.resolved()
    assert r["clt.n_ladder"] == [40]
    assert r["quadrature.panels"] == 64
    monkeypatch.setenv("ONECUT_OUT", str(tmp_path / "env_out"))
    monkeypatch.setenv("ONECUT_THREADS", "2")
    r2 = cfg.resolved()
    assert r2["output.dir"].endswith("env_out")
    assert r2["threads"] == 2


def test_config_hash_key_order_invariant():
    a = {"x": 1, "y": [1.5, 2.5]}
    b = {"y": [1.5, 2.5], "x": 1}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({"x": 2, "y": [1.5, 2.5]})


def test_write_resolved_parses_back(tmp_path):
    cfg = ExperimentConfig(parse_config_text(CONFIG_TEXT))
    p = write_resolved(cfg.resolved(), tmp_path / "resolved.txt")
    again = parse_config_text(p.read_text())
    assert again["potential.coeffs"] == [0.0, 0.0, 0.35, 0.0, 0.025]


def test_json_roundtrip_17_digits(tmp_path):
    payload = {"value": 0.1 + 0.2, "arr": [1.0 / 3.0, 2.0 ** -52], "n": 7,
               "nested": {"x": -1.2345678901234567e-8}}
    p = save_json(payload, tmp_path / "r.json")
    back = load_json(p)
    assert back == payload  # repr floats round-trip exactly


def test_json_corruption_detected(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(PersistError):
        load_json(p)


def test_json_version_mismatch(tmp_path):
    p = tmp_path / "old.json"
    p.write_text(json.dumps({"artifact_version": "9.0.0", "payload": {}}))
    with pytest.raises(VersionMismatch):
        load_json(p)


def test_batch_csv_roundtrip_byte_identical(tmp_path):
    batch = sample_tridiagonal_gaussian(6, 1, 40, master_seed=2)
    p1 = batch_to_csv(batch, tmp_path / "a.csv")
    back = batch_from_csv(p1)
    assert np.array_equal(back.configs, batch.configs)
    p2 = batch_to_csv(back, tmp_path / "b.csv")
    assert p1.read_bytes() == p2.read_bytes()


def test_batch_binary_roundtrip(tmp_path):
    batch = sample_tridiagonal_gaussian(5, 2, 17, master_seed=4)
    p = batch_to_binary(batch, tmp_path / "a.bin")
    data = batch_binary_read(p)
    assert np.array_equal(data, batch.configs)


def test_binary_truncation_detected(tmp_path):
    batch = sample_tridiagonal_gaussian(5, 2, 17, master_seed=4)
    p = batch_to_binary(batch, tmp_path / "a.bin")
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(PersistError):
        batch_binary_read(p)


def test_manifest_written_atomically(tmp_path):
    m = RunManifest(config_hash="abc")
    m.record("step1", "ok", 0.5)
    m.add_output(tmp_path / "x.json")
    p = m.write(tmp_path / "manifest.json")
    doc = json.loads(p.read_text())
    assert doc["config_hash"] == "abc"
    assert doc["steps"][0]["step"] == "step1"
    assert not list(tmp_path.glob("*.tmp"))
