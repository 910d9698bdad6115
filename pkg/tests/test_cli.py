import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from liqss import analysis
from liqss.cli import cmd_compare, main
from liqss.config import ConfigError, RunConfig, load_config

HEADER = "t,psi_dr,psi_q,psi_F,psi_D,psi_Q,omega_r,theta"


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def write_config(path, **blocks):
    d = RunConfig().to_dict()
    for key, changes in blocks.items():
        if isinstance(changes, dict):
            d.setdefault(key, {}).update(changes)
        else:
            d[key] = changes
    path.write_text(json.dumps(d))
    return str(path)


@pytest.fixture
def zero_torque(tmp_path):
    return write_config(tmp_path / "zero.json", torque={"fraction": 0.0},
                        solver={"t_end": 2.0})


def test_default_config_is_the_documented_default():
    assert load_config() == RunConfig()


def test_dump_config_round_trip(tmp_path, capsys):
    out = tmp_path / "dumped.json"
    assert main(["compare", "--dump-config", str(out), "--dq", "2e-4", "--t-end", "7"]) == 0
    cfg = load_config(out)
    assert cfg.quanta.flux_dq == 2e-4 and cfg.solver.t_end == 7.0
    assert load_config(out) == RunConfig.from_dict(json.loads(cfg.dumps()))
    assert main(["run-liqss", "--dump-config", "-"]) == 0
    assert RunConfig.from_dict(json.loads(capsys.readouterr().out)) == RunConfig()


def test_run_reference_default_rows(tmp_path):
    assert main(["run-reference", "--out-dir", str(tmp_path)]) == 0
    with open(tmp_path / "reference.csv") as fh:
        assert fh.readline().strip() == HEADER
        assert sum(1 for _ in fh) == 500_001


def test_run_reference_zero_torque_constant(tmp_path, zero_torque):
    out = tmp_path / "a" / "b"  # created on demand
    assert main(["run-reference", "--config", zero_torque, "--out-dir", str(out)]) == 0
    data = np.loadtxt(out / "reference.csv", delimiter=",", skiprows=1)
    assert data.shape == (20_001, 8)
    x0 = data[0, 1:]
    assert np.all(np.abs(data[:, 1:] - x0) <= 1e-6 * np.maximum(np.abs(x0), 1.0))


def test_csv_floats_round_trip(tmp_path, zero_torque):
    main(["run-reference", "--config", zero_torque, "--out-dir", str(tmp_path),
          "--t-end", "0.001"])
    rows = read_rows(tmp_path / "reference.csv")
    assert float(rows[1][1]) == 20000 * math.sqrt(2) / math.sqrt(3) / (100 * math.pi)
    assert rows[1][1] == repr(float(rows[1][1]))


def test_run_liqss_outputs(tmp_path):
    assert main(["run-liqss", "--out-dir", str(tmp_path), "--t-end", "17"]) == 0
    rows = read_rows(tmp_path / "updates.csv")
    assert rows[0] == ["state", "count", "intensity"]
    assert len(rows) == 8
    counts = {r[0]: int(r[1]) for r in rows[1:]}
    assert counts["omega_r"] != counts["psi_dr"]
    for name, n in counts.items():
        ev = read_rows(tmp_path / f"liqss_events_{name}.csv")
        assert ev[0] == ["t", "q"] and len(ev) == n + 2
    res = read_rows(tmp_path / "liqss_resampled.csv")
    assert ",".join(res[0]) == HEADER and len(res) == 170_002


def test_run_liqss_zero_torque_no_updates(tmp_path, zero_torque):
    assert main(["run-liqss", "--config", zero_torque, "--out-dir", str(tmp_path)]) == 0
    assert [int(r[1]) for r in read_rows(tmp_path / "updates.csv")[1:]] == [0] * 7


def test_compare_identical_is_zero(tmp_path):
    cfg = RunConfig().with_overrides(out_dir=str(tmp_path), t_end=1.0)
    ref = cfg.scenario().reference()
    _, summary = cmd_compare(cfg, reference=ref, liqss=ref, update_counts=[0] * 7)
    rows = read_rows(tmp_path / "error_report.csv")
    assert [r[0] for r in rows[1:]] == list(ref.names)
    assert all(float(r[1]) == 0.0 for r in rows[1:])
    assert summary == "max_error=0.0 total_updates=0"


def test_compare_default_under_one_percent(tmp_path, capsys):
    assert main(["compare", "--out-dir", str(tmp_path)]) == 0
    summary = capsys.readouterr().out.splitlines()[0]
    rows = read_rows(tmp_path / "error_report.csv")
    assert rows[0] == ["state", "tane", "count", "intensity"]
    tanes = [float(r[1]) for r in rows[1:]]
    assert max(tanes) < 0.01
    # the summary is recomputable from the per-state rows
    assert summary == (f"max_error={max(tanes)!r} "
                       f"total_updates={sum(int(r[2]) for r in rows[1:])}")
    assert (tmp_path / "summary.txt").read_text().strip() == summary


def test_sweep_sorted_output(tmp_path):
    rc = main(["sweep", "--out-dir", str(tmp_path), "--t-end", "17",
               "--dq-list", "1e-2,1e-3"])
    assert rc == 0
    rows = read_rows(tmp_path / "sweep.csv")
    assert rows[0] == ["delta_q", "max_error", "total_updates", "wall_time_s"]
    assert [float(r[0]) for r in rows[1:]] == [1e-3, 1e-2]
    assert int(rows[1][2]) > int(rows[2][2])


def test_sweep_row_failure_exit_code(tmp_path, monkeypatch):
    real = analysis.Scenario.liqss

    def flaky(self, flux_dq=1e-4, **kw):
        if flux_dq == 1e-3:
            raise FloatingPointError("injected")
        return real(self, flux_dq, **kw)

    monkeypatch.setattr(analysis.Scenario, "liqss", flaky)
    rc = main(["sweep", "--out-dir", str(tmp_path), "--t-end", "17",
               "--dq-list", "1e-2,1e-3"])
    assert rc == 4
    rows = read_rows(tmp_path / "sweep.csv")
    assert rows[1][1] == "nan" and rows[1][2] == "nan"
    assert float(rows[2][1]) > 0


@pytest.mark.parametrize("blocks", [
    {"solver": {"t_end": -1.0}},
    {"quanta": {"overrides": {"speed": 1e-7}}},
    {"machine": {"R_s": 0.0}},
    {"machine": {"X": 1.0}},
    {"extra": {}},
])
def test_bad_config_exit_2(tmp_path, blocks):
    assert main(["run-reference", "--config", write_config(tmp_path / "c.json", **blocks),
                 "--out-dir", str(tmp_path)]) == 2


def test_unreadable_config_exit_2(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["run-liqss", "--config", str(tmp_path / "bad.json")]) == 2
    assert main(["run-liqss", "--config", str(tmp_path / "missing.json")]) == 2


def test_numerical_failure_exit_3(tmp_path):
    cfg = write_config(tmp_path / "c.json", solver={"euler_dt": 1e-2, "resample_dt": 1e-2})
    assert main(["run-reference", "--config", cfg, "--out-dir", str(tmp_path)]) == 3


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LIQSS_THREADS", "zero")
    assert main(["sweep", "--out-dir", str(tmp_path), "--dq-list", "1e-2"]) == 2


def test_config_validation_messages():
    with pytest.raises(ConfigError, match="resample_dt"):
        RunConfig.from_dict({"solver": {"resample_dt": 1e-3}})


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "liqss", "--help"], capture_output=True,
                         text=True, check=True).stdout
    for cmd in ("run-reference", "run-liqss", "compare", "sweep"):
        assert cmd in out
