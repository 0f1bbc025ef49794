import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from kernel_infer.basis import SplineSpace
from kernel_infer.cli import run
from kernel_infer.config import ExperimentConfig
from kernel_infer.dynamics import load_trajectory, sample_initial, simulate
from kernel_infer.learn import assemble, observed_radius

LJ20 = {"name": "trunc_lj", "params": {"M_cap": 20}}


def _run(tmp_path, command, cfg, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return run([command, "--config", str(path), *extra])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_zero_kernel(tmp_path):
    out = tmp_path / "o"
    assert _run(tmp_path, "simulate", {"N": 4, "m": 3, "kernel": {"name": "zero"}},
                "--out", str(out)) == 0
    rows = _rows(out / "traj_N4.csv")
    pos = np.array([[float(x) for x in r[2:]] for r in rows[1:]]).reshape(4, 4, 2)
    assert np.all(pos == pos[0])
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"config_hash", "artifacts", "wall_clock_s", "version"} <= set(manifest)


def test_simulate_row_count_and_determinism(tmp_path):
    cfg = {"d": 2, "L": 3.0, "T": 0.5, "M": 100, "N": 10, "kernel": {"name": "trunc_lj"}}
    assert _run(tmp_path, "simulate", cfg, "--out", str(tmp_path / "a")) == 0
    assert _run(tmp_path, "simulate", cfg, "--out", str(tmp_path / "b")) == 0
    a = (tmp_path / "a" / "traj_N10.csv").read_bytes()
    assert a == (tmp_path / "b" / "traj_N10.csv").read_bytes()
    assert len(a.decode().splitlines()) == 1 + 51 * 10
    assert _run(tmp_path, "simulate", cfg, "--out", str(tmp_path / "c"), "--seed", "7") == 0
    assert a != (tmp_path / "c" / "traj_N10.csv").read_bytes()


def test_learn_closed_loop(tmp_path):
    cfg = {"N": 6, "m": 5, "T": 0.3, "L": 1.0, "M": 10, "kernel": {"name": "constant", "params": {"c": 0.5}}}
    assert _run(tmp_path, "learn", cfg, "--out", str(tmp_path), "--exact-velocities") == 0
    rep = json.loads((tmp_path / "learn_N6.json").read_text())
    assert rep["objective"] <= 1e-10 and rep["converged"]
    rows = _rows(tmp_path / "reconstruction_N6.csv")
    assert rows[0] == ["r", "a_true", "a_hat"] and len(rows) == 401


def test_learn_n_sweep(tmp_path):
    cfg = {"N_list": [10, 20, 40, 80], "T": 0.5, "L": 3.0, "M": 100, "D": "2N", "kernel": LJ20}
    assert _run(tmp_path, "learn", cfg, "--out", str(tmp_path)) == 0
    for N in (10, 20, 40, 80):
        assert (tmp_path / f"reconstruction_N{N}.csv").exists()
        assert json.loads((tmp_path / f"learn_N{N}.json").read_text())["model"]["D"] == 2 * N


def test_learn_from_trajectory_file_round_trip(tmp_path):
    sim = {"N": 5, "m": 4, "T": 0.3, "kernel": LJ20}
    assert _run(tmp_path, "simulate", sim, "--out", str(tmp_path)) == 0
    cfg = ExperimentConfig.from_dict(sim)
    traj = simulate(cfg.make_kernel(), sample_initial(2, 5, cfg.L, cfg.seed, run=0), 0.3, 4)
    reread = load_trajectory(tmp_path / "traj_N5.csv")
    space = SplineSpace(observed_radius(traj), 9)
    a, b = assemble(traj, space), assemble(reread, space)
    assert np.array_equal(a.C, b.C) and np.array_equal(a.v, b.v)
    cfg = dict(sim, trajectory=str(tmp_path / "traj_N5.csv"), D=9)
    assert _run(tmp_path, "learn", cfg, "--out", str(tmp_path / "l")) == 0
    assert (tmp_path / "l" / "reconstruction_N5.csv").exists()


def test_input_errors_exit_2(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert _run(tmp_path, "learn", {"trajectory": str(tmp_path / "nope.csv")}) == 2
    assert "not found" in capsys.readouterr().err
    assert run(["learn", "--config", str(tmp_path / "missing.json")]) == 2
    assert _run(tmp_path, "learn", {"N": 4, "typo_key": 1}) == 2
    assert _run(tmp_path, "learn", {"N": 4, "kernel": {"name": "nope"}}) == 2
    assert _run(tmp_path, "learn", {"N": 2, "D": "3N-5"}) == 2  # D = 1
    (tmp_path / "bad.json").write_text("{not json")
    assert run(["learn", "--config", str(tmp_path / "bad.json")]) == 2
    assert not (tmp_path / "out").exists()


def test_io_error_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert _run(tmp_path, "simulate", {"N": 2, "m": 1}, "--out", str(blocker / "sub")) == 3


def test_sweep_m(tmp_path):
    cfg = {"N": 8, "m": 5, "T": 0.3, "D": 10, "M_list": [5.0], "kernel": LJ20}
    assert _run(tmp_path, "sweep-m", cfg, "--out", str(tmp_path)) == 0
    rows = _rows(tmp_path / "sweep_m.csv")
    assert rows[0] == ["M", "objective", "Mstar"] and len(rows) == 2


def test_sweep_m_seven_point_grid(tmp_path):
    cfg = {"d": 2, "L": 3.0, "T": 1.0, "N": 20, "D": 60, "kernel": LJ20,
           "M_list": [2.7 * k for k in range(10, 41, 5)]}
    assert _run(tmp_path, "sweep-m", cfg, "--out", str(tmp_path)) == 0
    objs = [float(r[1]) for r in _rows(tmp_path / "sweep_m.csv")[1:]]
    assert len(objs) == 7 and all(b <= a + 1e-6 for a, b in zip(objs, objs[1:]))


def test_montecarlo(tmp_path):
    base = {"N": 8, "m": 5, "T": 0.3, "kernel": LJ20}
    assert _run(tmp_path, "montecarlo", dict(base, theta=1)) == 2
    assert _run(tmp_path, "montecarlo", dict(base, runs=[3, 3]), "--out", str(tmp_path)) == 0
    rows = _rows(tmp_path / "montecarlo_band.csv")
    assert rows[0] == ["r", "mean", "lo", "hi"]
    assert all(r[2] == r[3] for r in rows[1:])


def test_montecarlo_five_runs(tmp_path):
    cfg = {"d": 2, "L": 2.0, "T": 0.5, "M": 1000, "N": 50, "D": 150, "theta": 5}
    assert _run(tmp_path, "montecarlo", cfg, "--out", str(tmp_path)) == 0
    assert len(_rows(tmp_path / "montecarlo_band.csv")) == 151


@pytest.mark.parametrize("fixture", ["triangle", "square", "pair"])
def test_diagnose_fixtures(tmp_path, fixture):
    assert _run(tmp_path, "diagnose", {"fixture": fixture, "theta": 10}, "--out", str(tmp_path)) == 0
    rows = json.loads((tmp_path / f"coercivity_{fixture}.json").read_text())
    assert len(rows) == 10
    for row in rows:
        if fixture == "pair":
            assert row["ratio"] == pytest.approx(0.5, rel=1e-12)
        else:
            assert row["lhs"] == pytest.approx(row["expected_lhs"], rel=1e-12)


def test_diagnose_n_sweep(tmp_path):
    cfg = {"d": 2, "L": 5.0, "T": 0.5, "M": 100, "N_list": list(range(3, 13)), "D": "3N-5",
           "kernel": LJ20}
    assert _run(tmp_path, "diagnose", cfg, "--out", str(tmp_path)) == 0
    rows = _rows(tmp_path / "coercivity_sweep.csv")
    assert rows[0] == ["N", "lhs", "rhs", "ratio"]
    assert [int(r[0]) for r in rows[1:]] == list(range(3, 13))
    report = json.loads((tmp_path / "diagnostics.json").read_text())
    assert all("c_T" in r and "bound_check" in r for r in report)


def test_outputs_identical_across_thread_counts(tmp_path, monkeypatch):
    cfg = {"N_list": [5, 7], "m": 4, "T": 0.3, "kernel": LJ20}
    monkeypatch.setenv("KERNEL_INFER_THREADS", "1")
    assert _run(tmp_path, "learn", cfg, "--out", str(tmp_path / "one")) == 0
    monkeypatch.setenv("KERNEL_INFER_THREADS", "4")
    assert _run(tmp_path, "learn", cfg, "--out", str(tmp_path / "four")) == 0
    for name in ("learn_N5.json", "learn_N7.json", "reconstruction_N7.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "four" / name).read_bytes()


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "kernel_infer.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "sweep-m" in out.stdout
