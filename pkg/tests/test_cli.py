import json

import pytest

from censbounds import __version__
from censbounds.cli import main
from censbounds.data import save_dataset
from censbounds.dgp import DGPParams
from censbounds.simulation import generate_population, sample_dataset


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("d") / "d.csv"
    save_dataset(sample_dataset(generate_population(DGPParams(N=20_000, seed=5)), 600, seed=1), path)
    return str(path)


def _json(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


def test_oracle_running(capsys):
    out = _json(capsys, ["oracle", "--example", "running"])
    assert out["version"] == __version__ and out["generator"] == "numpy.random.PCG64"
    assert round(out["result"]["psi0"], 2) == 0.17 and round(out["result"]["naive"], 2) == 0.14


def test_oracle_table(capsys):
    assert main(["oracle", "--format", "table"]) == 0
    assert capsys.readouterr().out.startswith("psi0")


def test_bounds_json_schema(capsys, data_csv):
    out = _json(capsys, ["bounds", "--data", data_csv, "--set", "general", "--seeds", "3"])
    r = out["result"]
    assert {"lower", "upper", "se_lower", "se_upper", "ci_lower", "ci_upper", "per_seed"} <= set(r)
    assert out["seeds"] == [0, 1, 2] and out["config"]["folds"] == 2 and len(r["per_seed"]) == 3


def test_bounds_point_tau_one_is_naive(capsys, data_csv):
    common = ["--data", data_csv, "--seeds", "2"]
    naive = _json(capsys, ["bounds", "--set", "naive", *common])["result"]["point"]
    point = _json(capsys, ["bounds", "--set", "point", "--tau", "1", "--delta0", "0.5", "--delta1", "0.5", *common])
    assert point["result"]["point"] == naive


def test_missing_parameter_exit_2(capsys, data_csv):
    assert main(["bounds", "--data", data_csv, "--set", "bounded-risk"]) == 2
    assert "tau" in capsys.readouterr().err


def test_bad_data_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,a,c,x1\n1,1,1,0.5\n")
    assert main(["bounds", "--data", str(bad)]) == 2
    assert "row 1" in capsys.readouterr().err


def test_estimation_failure_exit_3(capsys, tmp_path):
    # every treated unit sits in one fold's complement only: arm 1 has one unit
    path = tmp_path / "thin.csv"
    path.write_text("y,a,c,x1\n" + "".join(f"{i % 2},0,0,{i}\n" for i in range(20)) + "1,1,0,3\n")
    assert main(["bounds", "--data", str(path), "--seeds", "1"]) == 3
    assert "estimation failed" in capsys.readouterr().err


def test_usage_error_exit_2(capsys):
    assert main(["bounds"]) == 2
    assert main(["nonsense"]) == 2


def test_config_file_merged_under_flags(capsys, tmp_path, data_csv):
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"data = {data_csv}\nset = bounded-risk\ntau = 2\nseeds = 2\n")
    out = _json(capsys, ["bounds", "--config", str(cfg)])
    assert out["config"]["assumption"] == "bounded-risk" and out["config"]["tau"] == 2.0
    out = _json(capsys, ["bounds", "--config", str(cfg), "--tau", "3"])
    assert out["config"]["tau"] == 3.0 and out["config"]["seeds"] == 2


def test_config_file_errors(capsys, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("bogus = 1\n")
    assert main(["oracle", "--config", str(cfg)]) == 2
    cfg.write_text("nodes = many\n")
    assert main(["oracle", "--config", str(cfg)]) == 2
    assert main(["oracle", "--config", str(tmp_path / "missing.ini")]) == 2


def test_outputs_are_byte_identical(tmp_path, data_csv):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(["bounds", "--data", data_csv, "--seeds", "2", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert not list(tmp_path.glob("*.tmp*"))


def test_sensitivity_outputs(capsys, tmp_path):
    region = tmp_path / "region.csv"
    out = _json(capsys, ["sensitivity", "--example", "running", "--tau", "10", "--region-csv", str(region)])
    curve = out["result"]["region_curves"][0]
    assert curve["intercept"] == pytest.approx(0.7069, abs=1e-4)
    assert curve["slope"] == pytest.approx(3.2078, abs=1e-4)
    lines = [ln for ln in region.read_text().splitlines() if not ln.startswith("#")]
    assert lines[0] == "tau,delta1,delta0_min,feasible" and len(lines) == 102
    assert out["result"]["sign_thresholds"]["mono-pos.lower"]["robust"] is True


def test_sensitivity_on_data(capsys, data_csv):
    out = _json(capsys, ["sensitivity", "--data", data_csv, "--seeds", "2", "--tau", "3,10"])
    assert len(out["result"]["region_curves"]) == 2
    assert main(["sensitivity"]) == 2
    assert main(["sensitivity", "--example", "running", "--tau", "0.5"]) == 2


def test_simulate_csv(capsys):
    argv = ["simulate", "--n", "200", "--reps", "5", "--pop-size", "5000", "--seed", "3", "--nodes", "256"]
    assert main(argv) == 0
    text = capsys.readouterr().out
    rows = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert rows[0].startswith("estimand,mode,alpha") and len(rows) == 7
    assert main(argv) == 0
    assert capsys.readouterr().out == text
    assert main(["simulate", "--c1", "e=2,bogus=1"]) == 2
    assert main(["simulate", "--n", "9000", "--pop-size", "5000"]) == 2


def test_simulate_json_per_nuisance_constants(capsys):
    out = _json(capsys, ["simulate", "--n", "200", "--reps", "3", "--pop-size", "5000", "--nodes", "256",
                         "--c1", "e=2,pi0=-1", "--c2", "0.5", "--format", "json"])  # fmt: skip
    cfg = out["result"]["config"]
    assert cfg["c1"] == {"e": 2.0, "pi0": -1.0} and cfg["c2"] == 0.5
    assert out["seeds"] == {"replications": 0, "population": 0}


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
