"""The invariant suite behind ``biwave verify``: seeded random inputs, one residual per check."""

import math
import time
from dataclasses import dataclass

import numpy as np

from .evolver import Evolver, EvolverConfig, State
from .geometry import TargetManifold
from .grid import PeriodicGrid
from .nonlinearity import (Nonlinearity, chain_identity_residual, evaluate_nonlinearity,
                           evaluate_regularized_nonlinearity, orthogonality_residual)
from .oracle import (check_difference_expansion, check_leibniz_expansion, fd_projector_jet,
                     great_circle_field, propagator_discrepancy, random_manifold_field,
                     reference_integrate, rotated)


@dataclass
class CheckResult:
    suite: str
    name: str
    residual: float
    tolerance: float
    seconds: float = 0.0
    passed: bool | None = None

    def __post_init__(self):
        if self.passed is None:
            self.passed = bool(math.isfinite(self.residual) and self.residual <= self.tolerance)


def _random_points(rng, n, lo=0.8, hi=1.2, L=3):
    p = rng.normal(size=(L, n))
    return p / np.linalg.norm(p, axis=0) * rng.uniform(lo, hi, size=n)


def geometry_checks(rng):
    sphere = TargetManifold.sphere(3)
    p = _random_points(rng, 10_000)
    P = sphere.projector(p)
    PP = np.einsum("ij...,jk...->ik...", P, P)
    yield "projector idempotence (1e4 points)", float(np.max(np.abs(PP - P))), 1e-14
    yield "projector symmetry", float(np.max(np.abs(P - P.transpose(1, 0, 2)))), 0.0

    worst = 0.0
    for _ in range(200):
        q = _random_points(rng, 1)[:, 0]
        for order in (1, 2, 3):
            dirs = [rng.normal(size=3) for _ in range(order)]
            exact = sphere.projector_derivative(q, order, dirs)
            approx = fd_projector_jet(sphere, q, order, dirs)
            worst = max(worst, float(np.max(np.abs(exact - approx)) / max(np.max(np.abs(exact)), 1e-300)))
    yield "jets vs nested differences, orders 1-3 (relative)", worst, 1e-6

    q = _random_points(rng, 1000, 1.0, 1.0)
    w = sphere.project(q, rng.normal(size=q.shape))
    v = sphere.project(q, rng.normal(size=q.shape))
    lhs = sphere.jet(q, [w], v) + np.sum(w * v, axis=0) * q
    yield "dP(w)v + (w.v)p on tangent pairs", float(np.max(np.abs(lhs))), 1e-14


def _band_limited(grid, rng, band=6, components=3):
    x = grid.coordinates
    out = np.zeros((components,) + grid.shape)
    for kvec in np.ndindex(*(2 * band + 1,) * grid.dim):
        kk = np.array(kvec) - band
        ph = sum(ki * xi for ki, xi in zip(kk, x))
        out += rng.normal(size=(components,) + (1,) * grid.dim) * np.cos(ph + rng.uniform(0, 2 * np.pi))
    return out


def grid_checks(rng):
    for dim in (1, 2):
        g = PeriodicGrid(dim, 64 if dim == 1 else 32)
        f = _band_limited(g, rng)
        h = _band_limited(g, rng)
        direct = g.inner_product(f, h)
        spectral = g.volume * np.sum((g.fft(f) * np.conj(g.fft(h))).real)
        yield f"Parseval ({dim}D)", abs(direct - spectral) / (g.l2_norm(f) * g.l2_norm(h)), 1e-10
        a = (1,) * dim
        b = (2,) + (0,) * (dim - 1)
        both = tuple(x + y for x, y in zip(a, b))
        lhs = g.derivative(g.derivative(f, a), b)
        rhs = g.derivative(f, both)
        yield f"derivative commutation ({dim}D)", g.sup_norm(lhs - rhs) / g.sup_norm(rhs), 1e-10
        m = g.heat_mollify(g.heat_mollify(f, 0.03), 0.05)
        yield f"mollifier semigroup ({dim}D)", g.sup_norm(m - g.heat_mollify(f, 0.08)) / g.sup_norm(f), 1e-12
        hstep = 3 * g.dx
        fg = f * h
        shifted = np.roll(h, -3, axis=-dim)
        res = g.difference_quotient(fg, hstep, 0) - (g.difference_quotient(f, hstep, 0) * shifted
                                                     + f * g.difference_quotient(h, hstep, 0))
        yield f"difference-quotient product rule ({dim}D)", g.sup_norm(res) / g.sup_norm(fg) * hstep, 1e-13


def admissible_random_field(target, rng, band=2, amplitude=0.2, margin=0.75):
    """random_manifold_field for the first drawn seed whose raw field keeps |p| >= margin * r.

    The margin keeps the nearest-point singularity away from the data, so the
    field is analytic in a strip of width bounded below.
    """
    probe = PeriodicGrid(1, 256)
    while True:
        fn = random_manifold_field(target, band=band, amplitude=amplitude, seed=int(rng.integers(1 << 30)))
        raw = fn.raw(probe.coordinates)
        if np.min(np.sqrt(np.sum(raw ** 2, axis=0))) >= margin * target.radius:
            return fn


def nonlinearity_checks(rng):
    sphere = TargetManifold.sphere(3)
    g = PeriodicGrid(1, 128)
    x = g.coordinates
    u = great_circle_field()(x)
    ut = 2.0 * np.stack([-np.sin(x[0]), np.cos(x[0]), 0 * x[0]])
    yield "orthogonality, great circle, M=128", orthogonality_residual(g, sphere, u, ut, dealias=2.0), 1e-8
    total = evaluate_nonlinearity(g, sphere, u, ut, dealias=2.0).total
    # u_tt = -4u and Lap^2 u = u are both normal, so N(u) = u_tt + Lap^2 u = -3u
    yield "N(u) = -3u on the omega = 2 great circle", g.sup_norm(total + 3 * u), 1e-9

    field = admissible_random_field(sphere, rng)
    res = []
    for M in (32, 64, 128):
        gm = PeriodicGrid(1, M)
        um = field(gm.coordinates)
        vm = sphere.project(um, np.sin(gm.coordinates[0]) * np.ones((3, 1)))
        res.append(orthogonality_residual(gm, sphere, um, vm, dealias=2.0))
    yield "orthogonality, random field, M=128", res[-1], 1e-8
    decay = min(res[0] / max(res[1], 1e-300), res[1] / max(res[2], 1e-300))
    yield "orthogonality decay per doubling (>= 4, reported as 4/decay)", 4.0 / decay, 1.0

    _, lap_res, bilap_res = chain_identity_residual(g, sphere, u)
    yield "chain identity, Lap u", lap_res, 1e-8
    yield "chain identity, Lap^2 u", bilap_res, 1e-8

    # roundoff in Lap^2 grows like M^4, so equivariance to 1e-12 is checked at M = 32
    g32 = PeriodicGrid(1, 32)
    ur = field(g32.coordinates)
    vr = sphere.project(ur, rng.normal(size=(3, 1)) * np.cos(g32.coordinates[0]))
    th = rng.uniform(0, 2 * np.pi)
    R = np.array([[1, 0, 0], [0, math.cos(th), -math.sin(th)], [0, math.sin(th), math.cos(th)]])
    rot = lambda f: np.einsum("ij,j...->i...", R, f)
    n1 = evaluate_nonlinearity(g32, sphere, rot(ur), rot(vr), dealias=2.0).total
    n2 = rot(evaluate_nonlinearity(g32, sphere, ur, vr, dealias=2.0).total)
    yield "frame equivariance under rotation, M=32", g32.sup_norm(n1 - n2), 1e-12
    ur = field(g.coordinates)
    vr = sphere.project(ur, rng.normal(size=(3, 1)) * np.cos(g.coordinates[0]))
    a = evaluate_regularized_nonlinearity(g, sphere, ur, vr, 0.0, dealias=2.0)
    b = evaluate_nonlinearity(g, sphere, ur, vr, dealias=2.0).total
    yield "eps = 0 consistency", g.sup_norm(a - b), 0.0


def oracle_checks(rng):
    worst = 0.0
    g = PeriodicGrid(1, 128)
    g2 = PeriodicGrid(2, 32)
    for eps in (0.0, 0.1, 0.5, 0.99):
        for dt in (1e-3, 1e-2):
            worst = max(worst, propagator_discrepancy(g, eps, dt), propagator_discrepancy(g2, eps, dt))
    yield "propagator vs dense expm (energy-scaled)", worst, 1e-12

    sphere = TargetManifold.sphere(3)
    fields = [great_circle_field(), admissible_random_field(sphere, rng)]
    for m in (0, 1, 2):
        for l in (0, 1):
            if m + l > 3 or m == 0:
                continue
            for i, f in enumerate(fields):
                rep = check_leibniz_expansion(sphere, f, m, l)
                label = "great circle" if i == 0 else "random field"
                yield f"Leibniz m={m} l={l} ({label}), M=128", rep.residual, 1e-7
                yield f"Leibniz m={m} l={l} ({label}) structure", 0.0 if rep.structure_ok else 1.0, 0.0
    u_fn = fields[1]
    v_fn = rotated(u_fn, 0.3)
    for eps in (0.0, 0.5):
        for m in (0, 1):
            rep = check_difference_expansion(sphere, u_fn, v_fn, m, eps=eps)
            yield f"difference expansion m={m} eps={eps}, M=128", rep.residual, 1e-7

    g32 = PeriodicGrid(1, 32)
    x = g32.coordinates
    raw = np.stack([0.1 * np.sin(x[0]), 0.1 * np.cos(2 * x[0]), np.ones_like(x[0])])
    u0 = sphere.nearest_point(raw)
    u1 = sphere.project(u0, np.stack([0.1 * np.cos(x[0]), 0 * x[0], 0.1 * np.sin(x[0])]))
    state = State(u0, u1)
    ref = reference_integrate(g32, sphere, state, 0.1)
    cfg = EvolverConfig(dt=1e-4, cutoff=1.0)
    ev = Evolver(g32, sphere, cfg).evolve(state, 0.1).final
    gap = max(g32.sup_norm(ev.u - ref.u), g32.sup_norm(ev.u_t - ref.u_t))
    yield "reference integrator vs evolver, M=32, T=0.1", gap, 1e-5


SUITES = {
    "geometry": geometry_checks,
    "grid": grid_checks,
    "nonlinearity": nonlinearity_checks,
    "oracle": oracle_checks,
}


def run_suite(seed=0, suites=None):
    rng = np.random.default_rng(seed)
    results = []
    for name, fn in SUITES.items():
        if suites and name not in suites:
            continue
        gen = fn(rng)
        while True:
            clock = time.perf_counter()
            try:
                label, residual, tol = next(gen)
            except StopIteration:
                break
            results.append(CheckResult(name, label, float(residual), tol, time.perf_counter() - clock))
    return results


def format_table(results):
    width = max(len(r.name) for r in results) if results else 10
    lines = [f"{'suite':<13}{'check':<{width + 2}}{'residual':>12}{'tol':>10}  ok"]
    for r in results:
        lines.append(f"{r.suite:<13}{r.name:<{width + 2}}{r.residual:>12.3e}{r.tolerance:>10.0e}  "
                     f"{'yes' if r.passed else 'NO'}")
    return "\n".join(lines)
