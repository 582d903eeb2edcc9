import json
import math
import os

import numpy as np
import pytest

from biwave import harness
from biwave.cli import main
from biwave.config import load_config, replace_section
from biwave.diagnostics import CsvSink, read_records
from biwave.errors import OutsideTube
from biwave.evolver import State, propagator_entries
from biwave.harness import (EXIT_ABORT, EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, _sup_distance, build,
                            map_members, run_trajectory)
from biwave.initial_data import great_circle, perturb, perturbation_direction


def small(tmp_path, *extra):
    """M = 32 sphere run over T = 0.05, recorded every 5 steps."""
    return load_config(None, ["grid.points=32", "run.T=0.05", "run.record_stride=5",
                              f"run.output_dir=\"{tmp_path}\"", *extra])


def write_config(tmp_path, text):
    path = tmp_path / "cfg.toml"
    path.write_text(text)
    return str(path)


# -- single runs -------------------------------------------------------------------


def test_run_writes_records_summary_and_echo(tmp_path):
    code, summary = harness.run(small(tmp_path / "a"))
    assert code == EXIT_OK and summary["status"] == "ok" and not summary["partial"]
    out = tmp_path / "a"
    assert {"trajectory.csv", "summary.json", "config.toml"} <= set(os.listdir(out))
    rows = read_records(out / "trajectory.csv")
    assert len(rows) == summary["n_records"] and rows[0]["t"] == 0.0
    assert rows[-1]["t"] == pytest.approx(0.05)
    stored = json.loads((out / "summary.json").read_text())
    assert stored["config_hash"] == summary["config_hash"]
    assert stored["config"]["evolver"]["dt"] == summary["dt"]
    assert summary["invariants"] == {"records_finite": True, "blowup_integral_nondecreasing": True}


def test_determinism_bit_identical_csv(tmp_path):
    cfg = small(tmp_path, "initial.kind=\"random_bump\"", "initial.seed=4", "initial.velocity_amplitude=0.2")
    harness.run(replace_section(cfg, "run", output_dir=str(tmp_path / "a")))
    harness.run(replace_section(cfg, "run", output_dir=str(tmp_path / "b")))
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_rerun_from_echo_reproduces_output(tmp_path):
    harness.run(small(tmp_path / "a", "evolver.eps=0.2"))
    echo = tmp_path / "a" / "config.toml"
    code = main(["run", str(echo), "-o", f"run.output_dir=\"{tmp_path / 'b'}\""])
    assert code == EXIT_OK
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert "# config hash" in echo.read_text().splitlines()[0]


def test_resume_after_crash_matches_uninterrupted(tmp_path, monkeypatch):
    cfg = small(tmp_path, "run.checkpoint_every=2", "run.record_stride=2", "run.T=0.04", "evolver.dt=1e-3",
                "initial.kind=\"random_bump\"", "initial.velocity_amplitude=0.2", "evolver.eps=0.1")
    full_dir, crash_dir = tmp_path / "full", tmp_path / "crash"
    harness.run(replace_section(cfg, "run", output_dir=str(full_dir)))

    original = CsvSink.__call__
    calls = {"n": 0}

    def flaky(self, record):
        calls["n"] += 1
        if calls["n"] > 7:
            raise KeyboardInterrupt("simulated crash")
        original(self, record)

    crash_cfg = replace_section(cfg, "run", output_dir=str(crash_dir))
    monkeypatch.setattr(CsvSink, "__call__", flaky)
    with pytest.raises(KeyboardInterrupt):
        harness.run(crash_cfg)
    monkeypatch.setattr(CsvSink, "__call__", original)
    assert (crash_dir / "trajectory.ckpt.npz").exists()

    code, _ = harness.run(crash_cfg, resume=True)
    assert code == EXIT_OK
    assert (crash_dir / "trajectory.csv").read_bytes() == (full_dir / "trajectory.csv").read_bytes()


def test_resume_rejects_foreign_checkpoint(tmp_path):
    cfg = small(tmp_path, "run.checkpoint_every=1")
    harness.run(cfg)
    code = main(["run", "-o", "grid.points=32", "-o", "run.T=0.05", "-o", "run.record_stride=5",
                 "-o", f"run.output_dir=\"{tmp_path}\"", "-o", "evolver.eps=0.3", "--resume"])
    assert code == EXIT_CONFIG


def test_unstable_run_exits_three_with_partial_trajectory(tmp_path):
    base = small(tmp_path, "grid.points=128")
    dt = harness.resolve(base).evolver.dt
    cfg = replace_section(base, "evolver", dt=50 * dt)
    cfg = replace_section(cfg, "run", T=math.pi, record_stride=1)
    code, summary = harness.run(cfg)
    assert code == EXIT_ABORT
    assert summary["partial"] and summary["abort"]["partial"]
    assert (tmp_path / "trajectory.abort.npz").exists()
    rows = read_records(tmp_path / "trajectory.csv")
    assert rows and all(math.isfinite(v) for r in rows for v in r.values())


# -- CLI ---------------------------------------------------------------------------


def test_cli_config_errors_exit_four(tmp_path, capsys):
    assert main(["run", write_config(tmp_path, "[grid]\nbogus = 1\n")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["run", "-o", "evolver.eps=2.0"]) == EXIT_CONFIG
    assert main(["run", str(tmp_path / "missing.toml")]) == EXIT_CONFIG


def test_cli_run_and_verify(tmp_path, capsys):
    path = write_config(tmp_path, f"[grid]\npoints = 32\n[run]\nT = 0.02\noutput_dir = \"{tmp_path / 'o'}\"\n")
    assert main(["run", path]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["status"] == "ok"
    assert main(["verify", "--suite", "grid"]) == EXIT_OK
    assert "checks passed" in capsys.readouterr().out


def test_cli_unstable_run_exits_three(tmp_path):
    code = main(["run", "-o", "grid.points=128", "-o", "evolver.dt=0.0445", "-o", "run.T=3.0",
                 "-o", f"run.output_dir=\"{tmp_path}\""])
    assert code == EXIT_ABORT


# -- studies -----------------------------------------------------------------------


def flat_config(tmp_path, *extra):
    return load_config(None, ["grid.points=32", "target.kind=\"flat\"", "run.T=0.5", "run.record_stride=5",
                              "evolver.dt=0.01", f"run.output_dir=\"{tmp_path}\"", *extra])


def test_sweep_on_flat_target_matches_closed_form(tmp_path):
    cfg = flat_config(tmp_path)
    report = harness.sweep_viscosity(cfg, [0.4, 0.2])
    grid, _, s0 = build(cfg)
    times = np.arange(0, 51, 5) * 0.01

    def exact(eps, t):
        a11, a12, a21, a22 = propagator_entries(1.0, eps, t) if t > 0 else (1, 0, 0, 1)
        return a11 * s0.u + a12 * s0.u_t, a21 * s0.u + a22 * s0.u_t

    def gap(e1, e2):
        worst = 0.0
        for t in times:
            (u1, v1), (u2, v2) = exact(e1, t), exact(e2, t)
            worst = max(worst, grid.sobolev_norm(u1 - u2, 2) + grid.sobolev_norm(v1 - v2, 0))
        return worst

    assert report["pairwise"][0]["distance"] == pytest.approx(gap(0.4, 0.2), rel=1e-9)
    assert report["to_zero"][0]["distance"] == pytest.approx(gap(0.4, 0.0), rel=1e-9)
    assert report["to_zero"][1]["distance"] == pytest.approx(gap(0.2, 0.0), rel=1e-9)
    assert report["pairwise_decreasing"] and report["to_zero_decreasing"]
    out = tmp_path / "sweep_eps"
    assert {"records.csv", "summary.json", "config.toml"} <= set(os.listdir(out))
    assert open(out / "records.csv").readline().startswith("member,t,")


def test_identical_eps_gives_zero_distance(tmp_path):
    cfg = small(None)
    cfg = replace_section(harness.resolve(cfg), "run", output_dir="")
    a = run_trajectory(cfg, keep_states=True)
    b = run_trajectory(cfg, keep_states=True)
    assert _sup_distance(cfg.grid.build(), a.states, b.states, 2, 0) == 0.0


def test_map_members_pool_matches_serial(tmp_path):
    cfg = harness.resolve(small(None, "run.T=0.02"))
    jobs = [(replace_section(cfg, "evolver", eps=e), None, f"e{e}", True, False) for e in (0.0, 0.3)]
    serial = map_members(jobs, 1)
    pooled = map_members(jobs, 2)
    for a, b in zip(serial, pooled):
        assert a.rows == b.rows
        np.testing.assert_array_equal(a.final.u, b.final.u)


def test_bona_smith_great_circle_rates(tmp_path):
    # u0^delta = u0 exactly and u1^delta = e^-delta u1, so only the velocity part survives
    cfg = load_config(None, ["grid.points=64", f"run.output_dir=\"{tmp_path}\""])
    grid, _, s0 = build(cfg)
    report = harness.bona_smith_study(cfg, [2.0 ** -j for j in range(4, 8)], k=3)
    for row in report["rows"]:
        d = row["delta"]
        gap = 1 - math.exp(-d)
        assert row["r1"] <= 1e-12
        assert row["r2"] == pytest.approx(gap * grid.sobolev_norm(s0.u_t, 0) / math.sqrt(d), rel=1e-12)
        assert row["r3"] == pytest.approx(gap * grid.sobolev_norm(s0.u_t, 1), rel=1e-12)
        assert row["r4"] > 0
    assert report["r2_monotone"] and report["r4_bounded"]


def test_bona_smith_outside_tube(tmp_path):
    cfg = load_config(None, ["grid.points=64", f"run.output_dir=\"{tmp_path}\""])
    with pytest.raises(OutsideTube):
        harness.bona_smith_study(cfg, [1.0], k=3)


def test_continuity_zero_radius_and_flat_energy_metric(tmp_path):
    cfg = harness.resolve(flat_config(tmp_path, "initial.kind=\"random_bump\"", "initial.amplitude=0.5"))
    grid, target, s0 = build(cfg)
    direction = perturbation_direction(grid, target, s0, 3, 11)
    base = run_trajectory(cfg, keep_states=True)
    same = run_trajectory(cfg, keep_states=True, initial=perturb(grid, target, s0, direction, 0.0))
    assert _sup_distance(grid, base.states, same.states, 3, 1) == 0.0
    pert = run_trajectory(cfg, keep_states=True, initial=perturb(grid, target, s0, direction, 1e-2))

    def energy_gap(a, b):
        return grid.seminorm(a.u - b.u, 2) ** 2 + grid.seminorm(a.u_t - b.u_t, 0) ** 2

    e0 = energy_gap(base.states[0], pert.states[0])
    for a, b in zip(base.states, pert.states):
        assert energy_gap(a, b) == pytest.approx(e0, rel=1e-12)


def test_continuity_study_report(tmp_path):
    cfg = small(tmp_path, "run.T=0.02")
    report = harness.continuity_study(cfg, [1e-2, 1e-3])
    assert [r["R"] for r in report["rows"]] == [1e-2, 1e-3]
    assert report["decreasing"] and report["min_ratio"] >= 3
    assert report["all_members_ok"]


def test_convergence_flat_is_exact(tmp_path):
    cfg = flat_config(tmp_path, "run.T=0.3")
    report = harness.convergence_study(cfg, levels=2, spatial=False)
    assert all(row["error"] <= 1e-13 for row in report["temporal"])


def test_convergence_sphere_second_order(tmp_path):
    cfg = load_config(None, ["grid.points=32", "run.T=0.2", "evolver.dt=4e-3", f"run.output_dir=\"{tmp_path}\""])
    report = harness.convergence_study(cfg, levels=3, spatial=True)
    assert min(report["order_exact"]) >= 1.8 and min(report["order_richardson"]) >= 1.8
    assert report["spatial"]["M"] == [32, 64]
    assert all(math.isfinite(e) for e in report["spatial"]["error"])


def test_trajectory_invariants_flag_violations():
    rows = [{"t": 0.0, "blowup_integral": 0.0}, {"t": 1.0, "blowup_integral": -1.0}]
    assert harness.trajectory_invariants(rows) == {"records_finite": True,
                                                   "blowup_integral_nondecreasing": False}
    rows[1]["blowup_integral"] = float("nan")
    assert not harness.trajectory_invariants(rows)["records_finite"]
