"""Experiment drivers: single runs, the viscosity sweep, mollification rates, continuity, convergence.

Every driver takes a resolved :class:`RunConfig` (dt and k filled in, see
:func:`resolve`) so the echoed config reproduces the run. Member runs of a
study are independent and go through :func:`map_members`, which uses a
process pool when ``run.workers > 1``.
"""

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import dump_toml, from_dict, replace_section
from .diagnostics import CsvSink, Monitor, read_records
from .errors import ConfigError, NumericalAbort
from .evolver import Evolver, State, default_dt, propagator_entries, resonance_dt
from .initial_data import (exact_great_circle, initial_data, mollify_initial_data, perturb,
                           perturbation_direction)
from .io import environment_info, load_checkpoint, save_checkpoint, write_json

EXIT_OK, EXIT_INVARIANT, EXIT_ABORT, EXIT_CONFIG = 0, 2, 3, 4


# -- building blocks -----------------------------------------------------------


def build(cfg):
    """(grid, target, initial state) for a config."""
    grid = cfg.grid.build()
    target = cfg.target.build()
    return grid, target, initial_data(cfg.initial, grid, target)


def resolve(cfg, state0=None):
    """Fill in dt (default_dt of the initial data) and k (smallest admissible)."""
    ev = cfg.evolver
    changes = {}
    if ev.k is None:
        changes["k"] = ev.regularity(cfg.grid.dim)
    if ev.dt is None:
        if state0 is None:
            _, _, state0 = build(cfg)
        changes["dt"] = default_dt(cfg.grid.build(), state0.u, ev.cutoff)
    return replace_section(cfg, "evolver", **changes) if changes else cfg


@dataclass
class RunResult:
    """Outcome of one trajectory; states holds the record-point states when kept."""

    name: str
    status: str
    dt: float
    k: int
    rows: list = field(default_factory=list)
    states: list = field(default_factory=list)
    final: State | None = None
    runtime: float = 0.0
    abort: dict | None = None
    csv_path: str | None = None

    @property
    def ok(self):
        return self.status == "ok"


def _history_arrays(states):
    return {
        "hist_t": np.array([s.t for s in states]),
        "hist_u": np.array([s.u for s in states]),
        "hist_ut": np.array([s.u_t for s in states]),
    }


def _history_from(extra):
    if "hist_t" not in extra:
        return []
    return [State(u, ut, float(t)) for t, u, ut in zip(extra["hist_t"], extra["hist_u"], extra["hist_ut"])]


def run_trajectory(cfg, out_dir=None, name="trajectory", keep_states=False, resume=False, initial=None):
    """Evolve one resolved config; optionally stream CSV and checkpoints into out_dir.

    ``initial`` replaces the state built from cfg.initial (study members
    started from perturbed or mollified data).

    With resume=True and an existing checkpoint ``<name>.ckpt.npz`` the run
    continues from it, and the CSV rows after the checkpoint are rewritten, so
    the final files match an uninterrupted run.
    """
    cfg = resolve(cfg)
    grid, target, state0 = build(cfg)
    if initial is not None:
        state0 = initial
    ev = cfg.evolver
    evolver = Evolver(grid, target, ev)
    monitor = Monitor(grid, target, k=ev.k, eps=ev.eps, dealias=ev.dealias, nonlinearity=evolver.nonlinearity)
    run = cfg.run
    csv_path = ckpt_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{name}.csv")
        ckpt_path = os.path.join(out_dir, f"{name}.ckpt.npz")

    start, steps_done, n_records, history = state0, 0, 0, []
    resuming = bool(resume and ckpt_path and os.path.exists(ckpt_path))
    if resuming:
        ck = load_checkpoint(ckpt_path)
        if ck.meta.get("config_hash") != cfg.content_hash():
            raise ConfigError(f"checkpoint {ckpt_path} belongs to a different config")
        monitor.load_state_dict(ck.monitor)
        start, steps_done, n_records = ck.state, ck.meta["steps_done"], ck.meta["n_records"]
        history = _history_from(ck.extra)

    count = n_records

    def on_record(state, rec, done):
        nonlocal count
        count += 1
        if keep_states:
            history.append(state)
        if ckpt_path and run.checkpoint_every and count % run.checkpoint_every == 0:
            meta = {"config": cfg.to_dict(), "config_hash": cfg.content_hash(), "eps": ev.eps,
                    "origin": 0.0, "steps_done": done, "n_records": count}
            save_checkpoint(ckpt_path, state, meta, monitor.state_dict(),
                            _history_arrays(history) if keep_states else None)

    sink = None
    if csv_path:
        sink = CsvSink(csv_path, ev.k, keep_rows=n_records if resuming else None)
    result = RunResult(name=name, status="ok", dt=ev.dt, k=ev.k, csv_path=csv_path)
    rows = []
    clock = time.perf_counter()
    try:
        def emit(rec):
            rows.append(rec.as_row())
            if sink is not None:
                sink(rec)

        traj = evolver.evolve(start, run.T, run.record_stride, monitor=monitor, sink=emit,
                              record_initial=not resuming, on_record=on_record, origin=0.0,
                              steps_done=steps_done)
        result.final = traj.final
    except NumericalAbort as exc:
        result.status = "aborted"
        result.final = exc.state
        result.abort = {"type": type(exc).__name__, "message": str(exc), "step": exc.step, "t": exc.t,
                        "partial": True}
        if out_dir is not None and exc.state is not None:
            save_checkpoint(os.path.join(out_dir, f"{name}.abort.npz"), exc.state,
                            {"config": cfg.to_dict(), "config_hash": cfg.content_hash(), **result.abort})
    finally:
        if sink is not None:
            sink.close()
    result.runtime = time.perf_counter() - clock
    result.rows = read_records(csv_path) if csv_path else rows
    result.states = history
    return result


def trajectory_invariants(rows):
    """Checks every accepted run must pass: finite records, non-decreasing blow-up integral."""
    finite = all(math.isfinite(v) for row in rows for v in row.values())
    integral = [row["blowup_integral"] for row in rows]
    monotone = all(b >= a for a, b in zip(integral, integral[1:]))
    return {"records_finite": finite, "blowup_integral_nondecreasing": monotone}


def _summary(cfg, result, extra=None):
    rows = result.rows
    out = {
        "config": cfg.to_dict(),
        "config_hash": cfg.content_hash(),
        "status": result.status,
        "partial": result.status != "ok",
        "abort": result.abort,
        "dt": result.dt,
        "k": result.k,
        "n_records": len(rows),
        "runtime_s": result.runtime,
        "renormalize": cfg.evolver.renormalize,
        "environment": environment_info(),
    }
    if rows:
        E0 = rows[0]["E"]
        out["final"] = rows[-1]
        out["max_manifold_dist"] = max(r["manifold_dist"] for r in rows)
        out["max_tangency"] = max(r["tangency"] for r in rows)
        out["max_rel_energy_drift"] = max(abs(r["E"] - E0) for r in rows) / E0 if E0 else float("nan")
        out["max_dissipation_residual"] = max(r["dissipation_residual"] for r in rows)
    out["invariants"] = trajectory_invariants(rows)
    out.update(extra or {})
    return out


def _write_echo(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.toml"), "w") as fh:
        fh.write(f"# config hash {cfg.content_hash()}\n")
        fh.write(dump_toml(cfg))


def run(cfg, resume=False):
    """Single run into cfg.run.output_dir; returns (exit code, summary)."""
    cfg = resolve(cfg)
    out_dir = cfg.run.output_dir
    _write_echo(cfg, out_dir)
    result = run_trajectory(cfg, out_dir, keep_states=False, resume=resume)
    summary = _summary(cfg, result)
    write_json(os.path.join(out_dir, "summary.json"), summary)
    if not result.ok:
        return EXIT_ABORT, summary
    if not all(summary["invariants"].values()):
        return EXIT_INVARIANT, summary
    return EXIT_OK, summary


# -- member execution ----------------------------------------------------------


def _member(job):
    cfg_dict, out_dir, name, keep_states, resume, initial = job
    return run_trajectory(from_dict(cfg_dict), out_dir, name, keep_states, resume, initial)


def map_members(jobs, workers=1):
    """Run (cfg, out_dir, name, keep_states, resume[, initial]) jobs; results in job order."""
    payload = []
    for job in jobs:
        cfg, out_dir, name, keep, resume = job[:5]
        initial = job[5] if len(job) > 5 else None
        payload.append((cfg.to_dict(), out_dir, name, keep, resume, initial))
    if workers <= 1 or len(payload) <= 1:
        return [_member(job) for job in payload]
    with ProcessPoolExecutor(max_workers=min(workers, len(payload))) as pool:
        return list(pool.map(_member, payload))


def _study_dir(cfg, study):
    return os.path.join(cfg.run.output_dir, study) if cfg.run.output_dir else None


def _merge_csv(results, path):
    """Concatenate member CSVs with a leading member column."""
    with open(path, "w") as out:
        header_done = False
        for res in results:
            if not res.csv_path or not os.path.exists(res.csv_path):
                continue
            with open(res.csv_path) as fh:
                lines = fh.read().splitlines()
            if not header_done:
                out.write("member," + lines[0] + "\n")
                header_done = True
            for line in lines[1:]:
                out.write(f"{res.name},{line}\n")


def _finish_study(cfg, study, report, results):
    out_dir = _study_dir(cfg, study)
    report["config"] = cfg.to_dict()
    report["config_hash"] = cfg.content_hash()
    report["members"] = [{"name": r.name, "status": r.status, "abort": r.abort, "runtime_s": r.runtime,
                          "csv": r.csv_path} for r in results]
    report["all_members_ok"] = all(r.ok for r in results)
    if out_dir is not None:
        _write_echo(cfg, out_dir)
        if results:
            _merge_csv(results, os.path.join(out_dir, "records.csv"))
        write_json(os.path.join(out_dir, "summary.json"), report)
    return report


def _sup_distance(grid, states_a, states_b, s_u, s_ut):
    """sup over common record times of ||u_a - u_b||_{H^s_u} + ||ut_a - ut_b||_{H^s_ut}."""
    if len(states_a) != len(states_b):
        raise ValueError("trajectories have different record counts")
    best = 0.0
    for a, b in zip(states_a, states_b):
        d = grid.sobolev_norm(a.u - b.u, s_u) + grid.sobolev_norm(a.u_t - b.u_t, s_ut)
        best = max(best, d)
    return best


def strictly_decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


# -- vanishing viscosity -------------------------------------------------------


def sweep_viscosity(cfg, eps_list, resume=False):
    """Runs the same data for each eps and eps = 0; reports H^2 x L^2 sup-distances.

    eps values are processed in decreasing order; ``pairwise`` holds the
    distance between consecutive values and ``to_zero`` the distance of each
    to the eps = 0 run.
    """
    cfg = resolve(cfg)
    eps_sorted = sorted({float(e) for e in eps_list}, reverse=True)
    members = eps_sorted + ([0.0] if 0.0 not in eps_sorted else [])
    out_dir = _study_dir(cfg, "sweep_eps")
    jobs = [(replace_section(cfg, "evolver", eps=e), out_dir, f"eps_{e:g}", True, resume) for e in members]
    results = map_members(jobs, cfg.run.workers)
    by_eps = dict(zip(members, results))
    grid = cfg.grid.build()
    report = {"eps": eps_sorted, "pairwise": [], "to_zero": []}
    if all(r.ok for r in results):
        zero = by_eps[0.0].states
        for a, b in zip(eps_sorted, eps_sorted[1:]):
            report["pairwise"].append({"eps": a, "eps_next": b,
                                       "distance": _sup_distance(grid, by_eps[a].states, by_eps[b].states, 2, 0)})
        for e in eps_sorted:
            if e != 0.0:
                report["to_zero"].append({"eps": e, "distance": _sup_distance(grid, by_eps[e].states, zero, 2, 0)})
        report["pairwise_decreasing"] = strictly_decreasing([p["distance"] for p in report["pairwise"]])
        report["to_zero_decreasing"] = strictly_decreasing([p["distance"] for p in report["to_zero"]])
    return _finish_study(cfg, "sweep_eps", report, results)


# -- Bona-Smith mollification rates ----------------------------------------------


def _pair_norm(grid, grad_of, vel, s):
    """||(grad a, b)||_{H^s x H^(s-1)}."""
    return math.hypot(grid.gradient_sobolev_norm(grad_of, s), grid.sobolev_norm(vel, s - 1))


def mollification_rates(grid, target, u0, u1, delta, k):
    """r1..r4 of the Bona-Smith splitting at one delta."""
    ud, vd = mollify_initial_data(grid, target, u0, u1, delta)
    du, dv = ud - u0, vd - u1
    return {
        "delta": delta,
        "r1": grid.l2_norm(du) / delta,
        "r2": _pair_norm(grid, du, dv, k - 2) / math.sqrt(delta),
        "r3": _pair_norm(grid, du, dv, k - 1),
        "r4": math.sqrt(delta) * _pair_norm(grid, ud, vd, k),
    }


def bona_smith_study(cfg, deltas, k=None):
    """Rates of the mollified data against delta; no time stepping involved.

    ``r1_bounded`` and ``r4_bounded`` mean max <= 2 x median over the deltas;
    ``r2_to_zero`` means r2 is non-increasing as delta decreases and its last
    value is below 0.1 r2 at the largest delta.
    """
    cfg = resolve(cfg)
    k = cfg.evolver.k if k is None else int(k)
    grid, target, state0 = build(cfg)
    deltas = sorted((float(d) for d in deltas), reverse=True)
    rows = [mollification_rates(grid, target, state0.u, state0.u_t, d, k) for d in deltas]
    r1 = [r["r1"] for r in rows]
    r2 = [r["r2"] for r in rows]
    r4 = [r["r4"] for r in rows]
    report = {
        "k": k,
        "rows": rows,
        "r1_bounded": max(r1) <= 2 * float(np.median(r1)),
        "r2_monotone": all(b <= a for a, b in zip(r2, r2[1:])),
        "r2_ratio": r2[-1] / r2[0] if r2[0] > 0 else 0.0,
        "r4_bounded": max(r4) <= 2 * float(np.median(r4)),
    }
    report["r2_to_zero"] = report["r2_monotone"] and r2[-1] <= 0.1 * r2[0]
    return _finish_study(cfg, "bona_smith", report, [])


# -- continuity of the flow ----------------------------------------------------


def continuity_study(cfg, radii, k=None, resume=False):
    """Perturb the data by R along one fixed tangent direction and track the H^k x H^(k-2) gap."""
    cfg = resolve(cfg)
    k = cfg.evolver.k if k is None else int(k)
    grid, target, state0 = build(cfg)
    direction = perturbation_direction(grid, target, state0, k, cfg.run.seed + 7919)
    radii = sorted({float(r) for r in radii}, reverse=True)
    out_dir = _study_dir(cfg, "continuity")
    jobs = [(cfg, out_dir, "base", True, resume)]
    for R in radii:
        pert = perturb(grid, target, state0, direction, R)
        jobs.append((cfg, out_dir, f"R_{R:g}", True, resume, pert))
    results = map_members(jobs, cfg.run.workers)
    base_states = results[0].states
    report = {"k": k, "rows": []}
    if all(r.ok for r in results):
        for R, res in zip(radii, results[1:]):
            d0 = grid.sobolev_norm(res.states[0].u - base_states[0].u, k) + grid.sobolev_norm(
                res.states[0].u_t - base_states[0].u_t, k - 2)
            report["rows"].append({"R": R, "initial_distance": d0,
                                   "distance": _sup_distance(grid, res.states, base_states, k, k - 2)})
        dist = [r["distance"] for r in report["rows"]]
        report["decreasing"] = strictly_decreasing(dist)
        report["ratios"] = [a / b if b > 0 else math.inf for a, b in zip(dist, dist[1:])]
        report["min_ratio"] = min(report["ratios"]) if report["ratios"] else math.inf
    return _finish_study(cfg, "continuity", report, results)


# -- convergence against exact solutions ----------------------------------------


def exact_solution(cfg, grid, target, state0, t):
    """Great circle: the traveling wave; flat target: the closed-form damped plate wave."""
    if target.is_flat:
        a11, a12, a21, a22 = propagator_entries(grid.k2, cfg.evolver.eps, t) if t > 0 else (1, 0, 0, 1)
        uh, vh = grid.fft(state0.u), grid.fft(state0.u_t)
        return grid.ifft(a11 * uh + a12 * vh), grid.ifft(a21 * uh + a22 * vh)
    init = cfg.initial
    if init.kind != "great_circle" or init.bump_amplitude > 0:
        raise ConfigError("convergence needs great-circle data without a bump, or a flat target")
    return exact_great_circle(grid, target, t, init.wave_vector, init.omega, init.phase)


def relative_error(grid, u, ref):
    return grid.l2_norm(u - ref) / grid.l2_norm(ref)


def convergence_study(cfg, levels=3, spatial=True):
    """eps = 0 runs at dt, dt/2, dt/4 (and M, 2M) against the exact solution at T.

    ``order_exact`` uses the errors against the exact solution;
    ``order_richardson`` uses only the numerical solutions,
    log2(|u_dt - u_dt/2| / |u_dt/2 - u_dt/4|). The spatial pair runs both grids
    at one dt below the resonance bound of the finer grid.
    """
    cfg = resolve(replace_section(cfg, "evolver", eps=0.0))
    grid, target, state0 = build(cfg)
    T = cfg.run.T
    ref_u, _ = exact_solution(cfg, grid, target, state0, T)
    dt0 = cfg.evolver.dt
    temporal, finals = [], []
    for j in range(levels):
        c = replace_section(cfg, "evolver", dt=dt0 / 2 ** j)
        res = run_trajectory(c, name=f"dt_{j}")
        if not res.ok:
            raise NumericalAbort(f"convergence run at dt = {c.evolver.dt} aborted: {res.abort}")
        finals.append(res.final)
        temporal.append({"dt": c.evolver.dt, "error": relative_error(grid, res.final.u, ref_u),
                         "runtime_s": res.runtime})
    errs = [r["error"] for r in temporal]
    diffs = [grid.l2_norm(a.u - b.u) for a, b in zip(finals, finals[1:])]
    report = {
        "T": T,
        "temporal": temporal,
        "order_exact": [_log2_ratio(a, b) for a, b in zip(errs, errs[1:])],
        "order_richardson": [_log2_ratio(a, b) for a, b in zip(diffs, diffs[1:])],
    }
    if spatial:
        fine_grid = replace(cfg.grid, points=2 * cfg.grid.points)
        dt_s = min(dt0, 0.5 * resonance_dt(fine_grid.build(), cfg.evolver.cutoff))
        errors = []
        for g in (cfg.grid, fine_grid):
            c = replace_section(replace(cfg, grid=g), "evolver", dt=dt_s)
            cg, ct, c0 = build(c)
            res = run_trajectory(c, name=f"M_{g.points}")
            ref, _ = exact_solution(c, cg, ct, c0, T)
            errors.append(relative_error(cg, res.final.u, ref) if res.ok else math.nan)
        report["spatial"] = {"M": [cfg.grid.points, fine_grid.points], "dt": dt_s, "error": errors,
                             "floor": abs(errors[0] - errors[1])}
    return _finish_study(cfg, "convergence", report, [])


def _log2_ratio(a, b):
    return math.log2(a / b) if b > 0 and a > 0 else math.inf
