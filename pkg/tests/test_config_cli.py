import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from levy_lab.campaigns import CAMPAIGNS, ResultRecord, convergence_verdict, run
from levy_lab.cli import main
from levy_lab.config import ConfigError, config_from_dict, load_config
from levy_lab.measures import DiscreteMeasure, RadialFamily

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """
experiment = "check"
seed = 1
p = 1.5

[measure]
generator = "radial"
alpha = 1.2
dimension = 3
"""


def write(tmp_path, text, name="c.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


# ---------------------------------------------------------------- hashing


def test_hash_ignores_key_order_and_output_location(tmp_path):
    reordered = """
p = 1.5
seed = 1
experiment = "check"

[output]
dir = "elsewhere"

[measure]
dimension = 3
alpha = 1.2
generator = "radial"
"""
    a = load_config(write(tmp_path, BASE, "a.toml"))
    b = load_config(write(tmp_path, reordered, "b.toml"))
    assert a.config_hash() == b.config_hash()
    assert a.replace(seed=2).config_hash() != a.config_hash()
    assert a.replace(p=1.6).config_hash() != a.config_hash()


def test_hash_follows_measure_file_content_not_path(tmp_path):
    src = CONFIGS / "measures" / "discrete_l2.json"
    for sub in ("x", "y"):
        (tmp_path / sub).mkdir()
        shutil.copy(src, tmp_path / sub / "m.json")
    text = 'experiment = "gamma-norm"\nseed = 1\n[measure]\nfile = "m.json"\n'
    a = load_config(write(tmp_path / "x", text))
    b = load_config(write(tmp_path / "y", text))
    assert a.config_hash() == b.config_hash()
    d = json.loads(src.read_text())
    d["atoms"][0][1] = 2 * d["atoms"][0][1] + 1  # [atom, mass] pairs
    (tmp_path / "y" / "m.json").write_text(json.dumps(d))
    assert load_config(tmp_path / "y" / "c.toml").config_hash() != a.config_hash()


# ---------------------------------------------------------------- validation


@pytest.mark.parametrize("raw", [
    {"experiment": "check"},
    {"experiment": "check", "seed": 1, "colour": "red"},
    {"experiment": "sing", "seed": 1},
    {"experiment": "check", "seed": 1.5},
    {"experiment": "check", "seed": 1, "p": 1.0},
    {"experiment": "check", "seed": 1, "t": 0.0},
    {"experiment": "check", "seed": 1, "schedule": [0.5, 0.5, 0.1]},
    {"experiment": "check", "seed": 1, "schedule": [0.5, -0.1]},
    {"experiment": "check", "seed": 1, "mode": "loose"},
    {"experiment": "check", "seed": 1, "reps": 0},
    {"experiment": "check", "seed": 1, "solver": {"tol": -1.0}},
    {"experiment": "check", "seed": 1, "solver": {"colour": 1}},
    {"experiment": "check", "seed": 1, "measure": {"generator": "zigzag"}},
    {"experiment": "check", "seed": 1, "measure": {"generator": "radial", "file": "m.json"}},
    {"experiment": "check", "seed": 1, "measure": {"file": "does-not-exist.json"}},
])
def test_invalid_configs_rejected(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_toml_syntax_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "seed = = 1"))


def test_measure_generators():
    cfg = config_from_dict({"experiment": "check", "seed": 3, "measure": {"generator": "random-discrete", "atoms": 4}})
    m = cfg.build_measure()
    assert isinstance(m, DiscreteMeasure) and m.n_atoms == 4
    assert np.array_equal(m.atoms, cfg.build_measure().atoms)
    r = config_from_dict({"experiment": "check", "seed": 3, "measure": {"generator": "radial"}}).build_measure()
    assert isinstance(r, RadialFamily) and r.directions.n_atoms == 2
    one = config_from_dict({"experiment": "check", "seed": 3,
                            "measure": {"generator": "single-atom", "dimension": 2}}).build_measure()
    assert one.atoms.tolist() == [[0.5, 0.0]]
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "check", "seed": 3}).build_measure()


def test_every_shipped_config_loads():
    paths = sorted(CONFIGS.glob("*.toml"))
    assert len(paths) >= 8
    for path in paths:
        cfg = load_config(path)
        assert cfg.experiment in CAMPAIGNS
        if cfg.measure is not None:
            cfg.build_measure()


# ---------------------------------------------------------------- records and verdicts


def test_record_csv_round_trips_floats():
    rec = ResultRecord("x", "h")
    rec.add("a", "p=2", 0.1 + 0.2, 1e-17)
    rec.add("b", 3, -1.0 / 3.0)
    lines = rec.csv_text().splitlines()
    assert lines[0] == "experiment,metric,level,estimate,stderr"
    assert float(lines[1].split(",")[3]) == 0.1 + 0.2
    assert lines[2].endswith(",")
    assert rec.value("b") == -1.0 / 3.0
    with pytest.raises(KeyError):
        rec.value("c")


def test_convergence_verdict_rules():
    scale = 2.0 ** np.arange(1, 8)
    assert convergence_verdict(np.zeros(7), scale, np.zeros(6), scale[1:])[0] == "Flat-Converged"
    assert convergence_verdict(1 / scale, scale, 1 - 1 / scale[1:], scale[1:])[0] == "Converging"
    assert convergence_verdict(np.ones(7), scale, np.log(scale[1:]), scale[1:])[0] == "Diverging"
    noisy = np.array([1.0, 1.2, 0.9, 1.1, 1.0, 0.95, 1.05])
    assert convergence_verdict(noisy, scale, np.ones(6), scale[1:])[0] == "Inconclusive"


# ---------------------------------------------------------------- CLI


def test_cli_check_succeeds(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["check", "--config", str(CONFIGS / "check_lp15.toml"), "--out", str(out)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["verdicts"]["verdict"] == "Levy"
    assert (out / "check.csv").is_file() and (out / "check.json").is_file()


def test_cli_inconclusive_exit_code(tmp_path):
    cfg = write(tmp_path, BASE.replace("alpha = 1.2", "alpha = 1.8"))
    code = main(["check", "--config", str(cfg), "--mode", "sufficient", "--out", str(tmp_path / "r.json")])
    assert code == 2
    assert json.loads((tmp_path / "r.json").read_text())["verdicts"]["verdict"] == "Inconclusive"
    assert (tmp_path / "r.csv").is_file()


def test_cli_errors(tmp_path, capsys):
    assert main(["check"]) == 1  # no seed and no config
    assert "seed" in capsys.readouterr().err
    assert main(["check", "--seed", "1"]) == 1  # no measure
    bad = write(tmp_path, "seed = 1\nfrobnicate = 2\n")
    assert main(["check", "--config", str(bad)]) == 1
    with pytest.raises(SystemExit):
        main(["check", "--seed", "1", "--schedule", "a,b"])


def test_cli_overrides(tmp_path):
    meas = CONFIGS / "measures" / "discrete_l2.json"
    out = tmp_path / "g.json"
    code = main(["gamma-norm", "--seed", "9", "--measure", str(meas), "--p", "2", "--reps-outer", "50",
                 "--n-gauss", "1", "--out", str(out)])
    assert code == 0
    data = json.loads(out.read_text())
    names = {m["name"] for m in data["metrics"]}
    assert {"expected_gamma_pth", "campbell"} <= names


def test_campaign_reruns_are_byte_identical():
    for name in ("simulate.toml", "convergence_series.toml", "umd_l3.toml", "criteria_alpha2.toml"):
        cfg = load_config(CONFIGS / name).replace(reps=200, reps_outer=50)
        a = run(cfg).csv_text()
        b = run(cfg).csv_text()
        assert a == b, name
        assert run(cfg.replace(seed=cfg.seed + 1)).csv_text() != a, name


def test_cli_rerun_writes_identical_csv(tmp_path):
    args = ["simulate", "--config", str(CONFIGS / "simulate.toml"), "--reps", "300"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "simulate.csv").read_bytes() == (tmp_path / "b" / "simulate.csv").read_bytes()
