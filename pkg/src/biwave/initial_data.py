"""Initial data on N: exact great circles, random bumps, checkpoints; mollified and perturbed copies.

Every constructor returns (u0, u1) with u0 on N and u1 tangent at u0, to
roundoff. Random fields are band-limited trigonometric polynomials drawn in
Fourier space from a seeded generator, with optional power-law decay
|c_xi| ~ (1 + |xi|^2)^(-decay/2), and scaled so their sup norm is the
requested amplitude (times the target radius).
"""

import numpy as np

from .errors import OutsideTube
from .evolver import State

CONSTRAINT_TOL = 1e-12


def random_field(grid, components, band_limit, seed, decay=0.0):
    """Real band-limited field of shape (components, *grid.shape) with unit sup norm.

    Modes with every |k_i| <= band_limit (lattice index) are filled with
    complex Gaussian coefficients weighted by (1 + |xi|^2)^(-decay/2); the
    zero mode is excluded so the field has mean zero.
    """
    rng = np.random.default_rng(seed)
    band = np.ones(grid.shape, dtype=bool)
    scale = 2 * np.pi / grid.period
    for k in grid.wavenumbers:
        band = band & (np.abs(k) <= band_limit * scale + 1e-9)
    band &= grid.k2 > 0
    for nyq in grid.nyquist_mask:
        band &= ~nyq
    weight = np.where(band, (1.0 + grid.k2) ** (-0.5 * decay), 0.0)
    coef = rng.normal(size=(components,) + grid.shape) + 1j * rng.normal(size=(components,) + grid.shape)
    f = grid.ifft(weight * coef)
    peak = grid.sup_norm(f)
    return f / peak if peak > 0 else f


def _base_point(target):
    p = np.zeros(target.ambient_dim)
    if not target.is_flat:
        p[-1] = target.radius
    return p


def finalize(target, raw_u, raw_v):
    """u0 = nearest_point(raw_u), u1 = P_{u0} raw_v."""
    u0 = target.nearest_point(raw_u)
    u1 = target.project(u0, raw_v)
    return u0, u1


def great_circle(grid, target, wave_vector=(1,), omega=2.0, phase=0.0):
    """u(t, x) = r (cos th, sin th, 0, ...), th = a.x + omega t + phase, sampled at t = 0."""
    x = grid.coordinates
    a = np.asarray(wave_vector, dtype=float).reshape((-1,) + (1,) * grid.dim)
    th = np.sum(a * x, axis=0) + phase
    r = target.radius
    u0 = np.zeros((target.ambient_dim,) + grid.shape)
    u1 = np.zeros_like(u0)
    u0[0], u0[1] = r * np.cos(th), r * np.sin(th)
    u1[0], u1[1] = -omega * r * np.sin(th), omega * r * np.cos(th)
    return u0, u1


def exact_great_circle(grid, target, t, wave_vector=(1,), omega=2.0, phase=0.0):
    """The traveling wave at time t: u_tt and Lap^2 u are both normal, so it solves the equation."""
    return great_circle(grid, target, wave_vector, omega, phase + omega * t)


def random_bump(grid, target, amplitude, band_limit, seed, decay=0.0, velocity_amplitude=0.0):
    """Constant point e_L r plus a random band-limited bump, pushed onto N.

    The velocity field uses a second draw with decay - 2, so (u0, u1) have the
    H^s x H^(s-2) balance of the equation. Raises BelowInjectivityThreshold if
    the bump leaves the tube (amplitude >= 1/2 can).
    """
    L = target.ambient_dim
    shape = (L,) + grid.shape
    r = 1.0 if target.is_flat else target.radius
    raw = np.broadcast_to(_base_point(target).reshape((L,) + (1,) * grid.dim), shape).copy()
    if amplitude > 0:
        raw += amplitude * r * random_field(grid, L, band_limit, seed, decay)
    vel = np.zeros(shape)
    if velocity_amplitude > 0:
        vel = velocity_amplitude * r * random_field(grid, L, band_limit, seed + 1, max(decay - 2.0, 0.0))
    return finalize(target, raw, vel)


def initial_data(spec, grid, target):
    """Build (u0, u1) for an InitialDataSpec as a State at t = 0 (checkpoints keep their t)."""
    if spec.kind == "great_circle":
        u0, u1 = great_circle(grid, target, spec.wave_vector, spec.omega, spec.phase)
        if spec.bump_amplitude > 0:
            bump = spec.bump_amplitude * target.radius * random_field(
                grid, target.ambient_dim, spec.band_limit, spec.seed, spec.decay)
            u0, u1 = finalize(target, u0 + bump, u1)
        return State(u0, u1, 0.0)
    if spec.kind == "random_bump":
        u0, u1 = random_bump(grid, target, spec.amplitude, spec.band_limit, spec.seed,
                             spec.decay, spec.velocity_amplitude)
        return State(u0, u1, 0.0)
    if spec.kind == "from_file":
        from .io import load_checkpoint

        ck = load_checkpoint(spec.path)
        state = ck.state
        if state.u.shape != (target.ambient_dim,) + grid.shape:
            raise ValueError(f"checkpoint field shape {state.u.shape} does not match the grid and target")
        dist, tang = constraint_violation(grid, target, state.u, state.u_t)
        if dist > CONSTRAINT_TOL or tang > CONSTRAINT_TOL:
            u0, u1 = finalize(target, state.u, state.u_t)
            state = State(u0, u1, state.t)
        return state
    raise ValueError(f"unknown initial data kind {spec.kind!r}")


def constraint_violation(grid, target, u, u_t):
    dist = float(np.max(target.distance(u)))
    if target.is_flat:
        return dist, 0.0
    return dist, grid.sup_norm(target.normal_part(u, u_t))


def mollify_initial_data(grid, target, u0, u1, delta):
    """(pi(eta_d * u0), P_{eta_d * u0}(eta_d * u1)) with eta_d the periodic heat multiplier.

    Raises OutsideTube if eta_d * u0 is further from N than the injectivity threshold.
    """
    if delta == 0:
        return np.array(u0, copy=True), np.array(u1, copy=True)
    smooth_u = grid.heat_mollify(u0, delta)
    smooth_v = grid.heat_mollify(u1, delta)
    if target.is_flat:
        return smooth_u, smooth_v
    dist = float(np.max(target.distance(smooth_u)))
    if not dist < target.injectivity_threshold:
        raise OutsideTube(dist, target.injectivity_threshold)
    return target.nearest_point(smooth_u), target.project(smooth_u, smooth_v)


def perturbation_direction(grid, target, state, k, seed, band_limit=4):
    """Fixed tangent direction (w0, w1) of unit H^k x H^(k-2) size for the continuity study."""
    L = target.ambient_dim
    w0 = target.project(state.u, random_field(grid, L, band_limit, seed))
    w1 = target.project(state.u, random_field(grid, L, band_limit, seed + 1))
    size = np.hypot(grid.sobolev_norm(w0, k), grid.sobolev_norm(w1, k - 2))
    return w0 / size, w1 / size


def perturb(grid, target, state, direction, R):
    """Move (u0, u1) by R along the direction, then restore the constraint."""
    if R == 0:
        return State(np.array(state.u, copy=True), np.array(state.u_t, copy=True), state.t)
    w0, w1 = direction
    u0, u1 = finalize(target, state.u + R * w0, state.u_t + R * w1)
    return State(u0, u1, state.t)
