import csv
import io
import json
import math

import numpy as np
import pytest

from svrobs import experiments as ex
from svrobs.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main
from svrobs.exceptions import ConfigError

SMALL = dict(rollout_counts=[20, 60], gammas=[0.01, 0.1], table2_sigma_ws=[1.0], repeats=3, cost_repeats=4,
             horizon=600, burn_in=60, unstable_horizon=60, seed=11)
SPEC_FIELDS = ["n_rollouts", "gamma", "sigma_w", "rmse_a_ols", "rmse_a_svr", "rmse_b_ols", "rmse_b_svr", "h_a",
               "h_b", "eps_a", "eps_b", "coverage_a", "gain_feasible", "j_mc", "j_bound", "seed"]


@pytest.fixture
def small_cfg():
    return ex.ExperimentConfig(**SMALL)


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return str(p)


def test_config_defaults_and_roundtrip():
    cfg = ex.load_config("default")
    assert cfg.t0 == 11 and cfg.rollout_counts[0] == 10 and cfg.rollout_counts[-1] == 450
    assert cfg.gammas == (0.005, 0.01, 0.05, 0.1) and cfg.benchmark_gamma == 0.1
    assert ex.ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("bad", [{"bogus": 1}, {"t0": 1}, {"gammas": [0.1, -1]}, {"delta": 1.5},
                                 {"rollout_counts": [30, 10]}, {"system": "NOPE"}, {"estimator_scaling": "X"}])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        ex.ExperimentConfig.from_dict(bad)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="missing.json"):
        ex.load_config(str(tmp_path / "missing.json"))
    p = tmp_path / "broken.json"
    p.write_text('{"seed": 1,\n "t0": }')
    with pytest.raises(ConfigError, match="line 2"):
        ex.load_config(str(p))


def test_resolve_threads(monkeypatch):
    monkeypatch.delenv("SYSID_THREADS", raising=False)
    assert ex.resolve_threads() == 1
    monkeypatch.setenv("SYSID_THREADS", "3")
    assert ex.resolve_threads() == 3 and ex.resolve_threads(2) == 2


def test_sweep_rows_header_and_values(small_cfg):
    rows = ex.run_sweep(small_cfg, threads=2)
    assert len(rows) == len(small_cfg.rollout_counts) * len(small_cfg.gammas)
    text = ex.rows_to_csv(rows)
    reader = csv.DictReader(io.StringIO(text))
    assert reader.fieldnames[:len(SPEC_FIELDS)] == SPEC_FIELDS
    for rec in reader:
        for k in SPEC_FIELDS[:12]:
            assert math.isfinite(float(rec[k]))
        assert 0 <= float(rec["coverage_a"]) <= 1 and 0 <= float(rec["gain_feasible"]) <= 1
    for line in ex.rows_to_json(rows):
        assert set(SPEC_FIELDS) <= set(json.loads(line))


def test_results_independent_of_threads(small_cfg):
    a, sa = ex.run_table2(small_cfg, threads=1)
    b, sb = ex.run_table2(small_cfg, threads=3)
    assert ex.rows_to_csv(a) == ex.rows_to_csv(b) and ex.rows_to_csv(sa) == ex.rows_to_csv(sb)
    assert ex.rows_to_csv(ex.run_sweep(small_cfg, 1)) == ex.rows_to_csv(ex.run_sweep(small_cfg, 4))


def test_noiseless_table2_is_exact(small_cfg):
    rows, _ = ex.run_table2(small_cfg.with_(table2_sigma_ws=(0.0,)), threads=2)
    assert max(r.rmse_a_ols for r in rows) < 1e-8 and max(r.rmse_b_ols for r in rows) < 1e-8


def test_cli_table2_writes_files_and_plots(cfg_file, tmp_path):
    out = tmp_path / "run"
    assert main(["table2", "--config", cfg_file, "--out", str(out)]) == EXIT_OK
    assert (out / "table2.csv").read_text().startswith("system,")
    assert (out / "table2_summary.csv").exists()
    assert (out / "table2_rmse_b_stable.png").stat().st_size > 0
    assert (out / "table2_rmse_b_unstable.png").stat().st_size > 0


def test_cli_sweep_json_lines(cfg_file, tmp_path, capsys):
    assert main(["sweep", "--config", cfg_file, "--format", "json", "--no-plots"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4 and all(isinstance(json.loads(s), dict) for s in lines)
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg_file, "--out", str(out)]) == EXIT_OK
    assert {"sweep.csv", "bounds_intervals.png", "observer_cost_ratio.png"} <= {p.name for p in out.iterdir()}


def test_cli_simulate_estimate_roundtrip(cfg_file, tmp_path):
    out = tmp_path / "d"
    assert main(["simulate", "--config", cfg_file, "--rollouts", "100", "--out", str(out)]) == EXIT_OK
    data = str(out / "rollouts.json")
    assert main(["estimate", "--config", cfg_file, "--data", data, "--out", str(out)]) == EXIT_OK
    text = (out / "estimates.csv").read_text().splitlines()
    assert text[0] == "mode,gamma,matrix,row,col,value" and len(text) == 1 + 3 * 12
    assert main(["design", "--config", cfg_file, "--data", data, "--format", "json", "--out", str(out)]) == EXIT_OK
    docs = [json.loads(s) for s in (out / "design.jsonl").read_text().splitlines()]
    assert all(d["feasible"] for d in docs)
    gain = np.array(docs[0]["gain"])
    assert gain.shape == (3, 3) and min(docs[0]["per_row_margin"]) > 0


def test_cli_exit_codes(cfg_file, tmp_path, capsys):
    assert main(["table2", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    assert "nope.json" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"colour": 1}')
    assert main(["bounds", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["design", "--config", cfg_file, "--rollouts", "5", "--strict"]) == EXIT_INFEASIBLE
    assert main(["design", "--config", cfg_file, "--rollouts", "5"]) == EXIT_OK
    with pytest.raises(SystemExit):
        main(["table2", "--format", "xml"])
