import json

import numpy as np
import pytest

from roughscatter import cli, ensemble, io

SMALL = {
    "schema_version": 1,
    "medium": {"c0": 1.0, "c1": 0.8, "z_int": 1.0, "z_tr": 2.0, "k0": [0.3, 0.0]},
    "regime": {"epsilon": 0.001, "gamma": 0.5},
    "interface": {"sigma": 0.5, "radius": 1.0, "correlation": "gaussian", "marginal": "gaussian"},
    "source": {"omega_c": 2 * np.pi, "bandwidth": 1 / 3, "beam_width": 1.0},
    "grid": {"n1": 128, "n2": 128, "d1": 0.125, "d2": 0.125},
    "realizations": 4, "seed": 5, "outputs": ["specular"],
}


def _write(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


@pytest.mark.parametrize("name", sorted(ensemble.PRESETS))
def test_presets_are_valid(name):
    cfg = ensemble.ExperimentConfig.from_dict(ensemble.preset(name))
    assert cfg.digest() == ensemble.ExperimentConfig.from_dict(json.loads(cfg.canonical())).digest()


def test_unknown_preset():
    with pytest.raises(ensemble.ConfigError):
        ensemble.preset("nope")


@pytest.mark.parametrize("patch", [
    {"medium": {"c0": 1.0, "c1": 1.2, "z_int": 1.0, "z_tr": 2.0, "k0": [0.3, 0.0]}},
    {"regime": {"epsilon": 0.001, "gamma": 1.5}},
    {"schema_version": 9},
    {"outputs": ["nonsense"]},
    {"realizations": 1},
    {"seed": -1},
])
def test_invalid_configs_exit_with_config_code(tmp_path, patch, capsys):
    bad = dict(SMALL, **patch)
    with pytest.raises(ensemble.ConfigError):
        ensemble.ExperimentConfig.from_dict(bad)
    assert cli.main(["run", "--config", _write(tmp_path, bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_missing_key_is_config_error():
    bad = dict(SMALL, medium={"c0": 1.0, "z_int": 1.0, "z_tr": 2.0})
    with pytest.raises(ensemble.ConfigError, match="c1"):
        ensemble.ExperimentConfig.from_dict(bad)


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["run", "--preset", "flat-anchor", "--out", str(blocker / "sub")]) == cli.EXIT_IO


def test_parallel_run_is_deterministic(tmp_path):
    cfg = ensemble.ExperimentConfig.from_dict(SMALL)
    one = ensemble.run(cfg, tmp_path / "a", jobs=1)
    two = ensemble.run(cfg, tmp_path / "b", jobs=2)
    assert one.outputs == two.outputs
    assert len(one.realization_seeds) == 4
    man = io.read_json(tmp_path / "a" / "manifest.json")
    assert man["config_hash"] == cfg.digest() and man["seed"] == 5
    assert set(man["outputs"]) == set(one.outputs)
    other = ensemble.run(cfg.with_seed(6), tmp_path / "c")
    spec = [k for k in one.outputs if k.startswith("specular")]
    assert spec and any(one.outputs[k] != other.outputs[k] for k in spec)


def test_snell_command(capsys):
    assert cli.main(["snell", "--preset", "default", "--p", "0.5", "0", "--ratio", "0.1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["propagating"] and out["theta_deg"] == pytest.approx(71.3935, abs=1e-4)


def test_snell_tables_and_scattering(tmp_path):
    assert cli.main(["run", "--preset", "fig-angles", "--out", str(tmp_path)]) == 0
    tab = io.read_csv(tmp_path / "snell_reflection.csv")
    assert tab["theta"].size == 61 * 73
    at_zero = tab["r"] == 0
    assert np.allclose(tab["theta"][at_zero], np.pi / 4)
    assert cli.main(["scattering-dist", "--preset", "default", "--n", "64", "--out", str(tmp_path)]) == 0
    scal = io.read_json(tmp_path / "scattering_distribution.json")
    assert scal


def test_synthesize_round_trip(tmp_path):
    assert cli.main(["synthesize", "--preset", "default", "--count", "2", "--start", "3",
                     "--out", str(tmp_path)]) == 0
    a, head = io.read_grid(tmp_path / "interface_00003.grid")
    assert a.shape == (256, 256) and head["kind"] == "interface"
    assert head["seed"]["spawn_key"] == [3]


def test_grid_and_csv_round_trip(tmp_path):
    z = (np.arange(12) + 1j).reshape(3, 4)
    io.write_grid(tmp_path / "g", z, {"spacing": [0.1, 0.2]})
    back, head = io.read_grid(tmp_path / "g")
    assert np.array_equal(back, z.astype(np.complex64)) and head["spacing"] == [0.1, 0.2]
    x = np.array([0.1, 1 / 3, np.pi])
    io.write_csv(tmp_path / "t.csv", {"x": x, "tag": ["a", "b", "c"]})
    t = io.read_csv(tmp_path / "t.csv")
    assert np.array_equal(t["x"], x) and list(t["tag"]) == ["a", "b", "c"]
