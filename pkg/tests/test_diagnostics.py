import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from biwave.diagnostics import (CsvSink, DiagnosticsRecord, Monitor, blowup_report, constraint_report,
                                dissipation_residual, energy, energy_equality_residual, higher_energy,
                                profile_keys, read_records, track)
from biwave.evolver import Evolver, EvolverConfig, State
from biwave.geometry import TargetManifold
from biwave.grid import PeriodicGrid
from biwave.initial_data import great_circle, random_bump

SPHERE = TargetManifold.sphere(3)
FLAT = TargetManifold.flat(3)
G64 = PeriodicGrid(1, 64)


def gc(grid=G64):
    return State(*great_circle(grid, SPHERE))


def constant_state(grid=G64):
    c = np.broadcast_to(np.array([0.0, 0.6, 0.8]).reshape((3,) + (1,) * grid.dim), (3,) + grid.shape)
    return State(c.copy(), np.zeros((3,) + grid.shape))


def flat_mode(grid=G64, velocity=0.0):
    u = np.zeros((3,) + grid.shape)
    u[0] = np.sin(grid.coordinates[0])
    ut = np.zeros_like(u)
    ut[1] = velocity * np.cos(grid.coordinates[0])
    return State(u, ut)


def run(grid, target, state, eps, dt, T, stride=1):
    ev = Evolver(grid, target, EvolverConfig(dt=dt, eps=eps))
    return ev.evolve(state, T, record_stride=stride, keep_states=True).states


# -- energies ---------------------------------------------------------------------


def test_energy_examples():
    assert energy(G64, constant_state()) == 0.0
    assert energy(G64, gc()) == pytest.approx(5 * math.pi, rel=1e-13)
    u, _ = great_circle(G64, SPHERE)
    assert energy(G64, State(u, np.zeros_like(u))) == pytest.approx(math.pi, rel=1e-13)


def test_higher_energy_examples():
    assert higher_energy(G64, constant_state(), 3) == 0.0
    assert higher_energy(G64, gc(), 4) == pytest.approx(22 * math.pi, rel=1e-12)
    z = np.zeros((3, 64))
    ut = z.copy()
    ut[0] = np.sin(G64.coordinates[0])
    assert higher_energy(G64, State(z, ut), 4) == pytest.approx(2 * math.pi, rel=1e-13)


def test_higher_energy_budget():
    with pytest.raises(ValueError):
        higher_energy(G64, gc(), 9)
    with pytest.raises(ValueError):
        higher_energy(G64, gc(), 1)


@given(st.integers(0, 1000), st.integers(3, 8))
def test_alpha_dominates_energy_terms(seed, k):
    s = State(*random_bump(G64, SPHERE, 0.3, 5, seed, 0.0, 0.5))
    assert higher_energy(G64, s, k) >= 2 * energy(G64, s)


# -- blow-up integral -------------------------------------------------------------


def test_blowup_examples():
    states = [State(constant_state().u, constant_state().u_t, t) for t in np.linspace(0, 1, 5)]
    assert blowup_report(G64, states, 3) == 0.0
    frozen = [State(gc().u, gc().u_t, t) for t in np.linspace(0, 1, 11)]
    assert blowup_report(G64, frozen, 3) == pytest.approx(65.0, rel=1e-12)


def test_blowup_integral_nondecreasing_on_run():
    states = run(G64, SPHERE, State(*random_bump(G64, SPHERE, 0.2, 4, 2, 0.0, 0.2)), 0.0, 1e-3, 0.1, 10)
    integral = [r.blowup_integral for r in track(G64, SPHERE, states)]
    assert all(b >= a for a, b in zip(integral, integral[1:]))
    assert all(math.isfinite(v) for v in integral)


# -- constraint report ------------------------------------------------------------


def test_constraint_report_examples():
    s = State(*random_bump(G64, SPHERE, 0.3, 5, 4, 0.0, 0.5))
    dist, tang = constraint_report(G64, SPHERE, s)
    assert dist <= 1e-15 and tang <= 1e-15
    u, ut = great_circle(G64, SPHERE)
    assert constraint_report(G64, SPHERE, State(1.01 * u, ut))[0] == pytest.approx(0.01, rel=1e-12)
    assert constraint_report(G64, SPHERE, State(u, ut))[1] <= 1e-14


# -- dissipation identity ---------------------------------------------------------


def test_dissipation_flat_eps_zero():
    states = run(G64, FLAT, flat_mode(velocity=0.5), 0.0, 0.01, 1.0, 10)
    assert dissipation_residual(G64, FLAT, states, 0.0) <= 1e-12


def test_dissipation_flat_eps_half():
    # recording every step keeps the O(h^4) quadrature error of the integral below 1e-10
    states = run(G64, FLAT, flat_mode(velocity=0.5), 0.5, 0.01, 1.0, 1)
    assert dissipation_residual(G64, FLAT, states, 0.5) <= 1e-10


def test_dissipation_great_circle_eps_half_below_threshold_and_dt_convergent():
    res = []
    for dt in (4e-3, 2e-3):
        states = run(G64, SPHERE, gc(), 0.5, dt, 0.5, int(round(0.05 / dt)))
        res.append(dissipation_residual(G64, SPHERE, states, 0.5))
    assert res[0] / res[1] >= 2.0


@given(st.integers(0, 1000))
def test_dissipation_residual_at_eps_zero_is_energy_drift(seed):
    states = run(G64, SPHERE, State(*random_bump(G64, SPHERE, 0.2, 4, seed, 0.0, 0.2)), 0.0, 2e-3, 0.02, 5)
    recs = track(G64, SPHERE, states)
    for r in recs:
        assert r.dissipation_residual == abs(r.E - recs[0].E)


# -- higher-order energy equality -------------------------------------------------


def test_energy_equality_constant_trajectory():
    c = constant_state()
    states = [State(c.u, c.u_t, t) for t in np.linspace(0, 1, 4)]
    assert energy_equality_residual(G64, SPHERE, states, 3) == 0.0


def test_energy_equality_flat():
    states = run(G64, FLAT, flat_mode(velocity=0.7), 0.0, 0.01, 1.0, 10)
    assert energy_equality_residual(G64, FLAT, states, 3) <= 1e-10


@pytest.mark.parametrize("kind,stride,T", [("great_circle", 5, 0.5), ("bump", 1, 0.1)])
def test_energy_equality_refines_with_dt(kind, stride, T):
    # the record spacing shrinks with dt, so both the stepper and the trapezoid refine
    state = gc() if kind == "great_circle" else State(*random_bump(G64, SPHERE, 0.2, 4, 5, 0.0, 0.2))
    res = []
    for dt in (2e-3, 1e-3):
        states = run(G64, SPHERE, state, 0.0, dt, T, stride)
        res.append(energy_equality_residual(G64, SPHERE, states, 3))
    assert res[0] / res[1] >= 2.0


# -- rotation invariance ----------------------------------------------------------


@given(st.integers(0, 1000), st.integers(0, 1000))
def test_records_rotation_invariant(seed, rot_seed):
    q, r = np.linalg.qr(np.random.default_rng(rot_seed).normal(size=(3, 3)))
    R = q * np.sign(np.diag(r))
    rot = lambda f: np.einsum("ij,j...->i...", R, f)
    grid = PeriodicGrid(1, 32)
    s = State(*random_bump(grid, SPHERE, 0.2, 3, seed, 0.0, 0.2))
    s2 = State(s.u, s.u_t, 0.01)
    a = track(grid, SPHERE, [s, s2])
    b = track(grid, SPHERE, [State(rot(x.u), rot(x.u_t), x.t) for x in (s, s2)])
    for ra, rb in zip(a, b):
        for key, va in ra.as_row().items():
            if key == "blowup_integrand":
                continue
            assert abs(va - rb.as_row()[key]) <= 1e-12 * max(1.0, abs(va)), key
        # the integrand raises sup norms to the power 2k: compare relatively
        assert ra.blowup_integrand == pytest.approx(rb.blowup_integrand, rel=1e-12)


# -- monitor and CSV --------------------------------------------------------------


def test_record_fields_and_profile():
    rec = Monitor(G64, SPHERE, k=4)(gc())
    assert isinstance(rec, DiagnosticsRecord) and rec.is_finite()
    assert set(profile_keys(4)) == set(rec.sobolev_profile)
    assert rec.sobolev_profile["offset_H4"] == 0.0
    assert rec.sup_grad == pytest.approx(1.0, abs=1e-14) and rec.sup_ut == pytest.approx(2.0, abs=1e-14)


def test_monitor_state_dict_resumes_exactly():
    states = run(G64, SPHERE, State(*random_bump(G64, SPHERE, 0.2, 4, 6, 0.0, 0.2)), 0.1, 2e-3, 0.02, 2)
    full = track(G64, SPHERE, states, eps=0.1)
    m = Monitor(G64, SPHERE, eps=0.1)
    for s in states[:3]:
        m(s)
    fresh = Monitor(G64, SPHERE, eps=0.1)
    fresh.load_state_dict(m.state_dict())
    tail = [fresh(s) for s in states[3:]]
    assert [r.as_row() for r in tail] == [r.as_row() for r in full[3:]]


def test_monitor_rejects_k_above_budget():
    with pytest.raises(ValueError):
        Monitor(G64, SPHERE, k=9)


def test_csv_sink_roundtrip_and_resume(tmp_path):
    states = run(G64, SPHERE, gc(), 0.0, 1e-2, 0.05, 1)
    recs = track(G64, SPHERE, states)
    path = tmp_path / "r.csv"
    with CsvSink(path, 3) as sink:
        for r in recs:
            sink(r)
    rows = read_records(path)
    assert rows == [r.as_row() for r in recs]
    with CsvSink(path, 3, keep_rows=2) as sink:
        for r in recs[2:]:
            sink(r)
    assert read_records(path) == rows
    with pytest.raises(ValueError):
        CsvSink(path, 4, keep_rows=1)
