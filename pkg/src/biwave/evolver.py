"""Time integration of u_tt + Lap^2 u - eps Lap u_t = N_eps(u).

The linear damped-plate part is diagonal in Fourier space and is applied
exactly through the per-wavenumber 2x2 matrix exponential; the nonlinearity
is advanced with classical RK4 on (u, u_t)' = (0, N_eps(u, u_t)), and the two
flows are composed by Strang or Lie splitting.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BelowInjectivityThreshold, ConstraintEscape, NonFinite
from .nonlinearity import Nonlinearity, _check_eps

SCHEMES = ("strang", "lie")
RENORMALIZE = ("off", "project")


@dataclass(frozen=True)
class State:
    u: np.ndarray
    u_t: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if np.shape(self.u) != np.shape(self.u_t):
            raise ValueError(f"u and u_t shapes differ: {np.shape(self.u)} vs {np.shape(self.u_t)}")

    def is_finite(self):
        return bool(np.isfinite(self.u).all() and np.isfinite(self.u_t).all())


@dataclass(frozen=True)
class EvolverConfig:
    eps: float = 0.0
    dt: float | None = None
    scheme: str = "strang"
    dealias: float = 2.0
    renormalize: str = "off"
    k: int | None = None
    cutoff: float = 2.0 / 3.0

    def __post_init__(self):
        _check_eps(self.eps)
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.renormalize not in RENORMALIZE:
            raise ValueError(f"renormalize must be one of {RENORMALIZE}")
        if self.dealias < 1:
            raise ValueError("dealias must be >= 1")
        if not 0 < self.cutoff <= 1:
            raise ValueError("cutoff must lie in (0, 1]")

    def regularity(self, dim):
        k = default_k(dim) if self.k is None else self.k
        if k <= dim // 2 + 2:
            raise ValueError(f"k = {k} must exceed floor(n/2) + 2 = {dim // 2 + 2}")
        return k


def default_k(dim):
    return dim // 2 + 3


def resonance_dt(grid, cutoff=2.0 / 3.0):
    """pi / |xi_max|^2: the first step size at which a kept mode turns by pi per step."""
    return math.pi / grid.max_wavenumber(cutoff) ** 2


def default_dt(grid, u0, cutoff=2.0 / 3.0):
    """0.5 dx min(1, 1/sup|grad u0|), capped at half the resonance step."""
    sup_grad = grid.sup_norm(grid.gradient(u0))
    cfl = 0.5 * grid.dx * min(1.0, 1.0 / sup_grad if sup_grad > 0 else 1.0)
    return min(cfl, 0.5 * resonance_dt(grid, cutoff))


@dataclass(frozen=True)
class PropagatorSymbol:
    """Entries of exp(dt A_xi), A_xi = [[0, 1], [-|xi|^4, -eps |xi|^2]], on the lattice."""

    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray
    eps: float
    dt: float

    def matrix(self, index):
        return np.array([[self.a11[index], self.a12[index]], [self.a21[index], self.a22[index]]])

    def determinant(self):
        return self.a11 * self.a22 - self.a12 * self.a21


def propagator_entries(mu, eps, dt):
    """exp(dt A) for A = [[0, 1], [-mu^2, -eps mu]], elementwise in mu = |xi|^2 >= 0.

    Damped-oscillator form, valid for eps < 2; mu = 0 gives [[1, dt], [0, 1]].
    """
    mu = np.asarray(mu, dtype=float)
    rho = mu * math.sqrt(1.0 - 0.25 * eps * eps)
    damp = np.exp(-0.5 * eps * mu * dt)
    c = np.cos(rho * dt)
    s = dt * np.sinc(rho * dt / np.pi)  # sin(rho dt)/rho, -> dt at rho = 0
    half = 0.5 * eps * mu
    return (
        damp * (c + s * half),
        damp * s,
        -damp * s * mu * mu,
        damp * (c - s * half),
    )


def build_propagator(grid, eps, dt):
    _check_eps(eps)
    if not dt > 0:
        raise ValueError("dt must be positive")
    return PropagatorSymbol(*propagator_entries(grid.k2, eps, dt), eps=eps, dt=dt)


def linear_step(grid, state, symbol):
    uh, vh = grid.fft(np.stack([state.u, state.u_t]))
    u, u_t = grid.ifft(np.stack([symbol.a11 * uh + symbol.a12 * vh, symbol.a21 * uh + symbol.a22 * vh]))
    return State(u, u_t, state.t + symbol.dt)


class Evolver:
    """Splitting integrator bound to one grid, target and configuration."""

    def __init__(self, grid, target, config):
        self.grid = grid
        self.target = target
        self.config = config
        self.nonlinearity = Nonlinearity(grid, target, config.dealias)
        self._symbols = {}

    def symbol(self, dt):
        """Propagator symbol, with the low-pass truncation folded in on curved targets."""
        sym = self._symbols.get(dt)
        if sym is None:
            exact = build_propagator(self.grid, self.config.eps, dt)
            if self.config.cutoff < 1 and not self.target.is_flat:
                m = self.grid.low_pass_mask(self.config.cutoff)
                exact = replace(exact, a11=m * exact.a11, a12=m * exact.a12, a21=m * exact.a21, a22=m * exact.a22)
            sym = self._symbols[dt] = exact
        return sym

    def linear_step(self, state, dt):
        return linear_step(self.grid, state, self.symbol(dt))

    def nonlinear_step(self, state, dt):
        """One RK4 step of u_t' = N_eps(u, u_t) with u' = 0."""
        if self.target.is_flat:
            return State(state.u, state.u_t, state.t)
        rhs = self.nonlinearity.frozen(state.u, self.config.eps)
        w = state.u_t
        k1 = rhs(w)
        k2 = rhs(w + 0.5 * dt * k1)
        k3 = rhs(w + 0.5 * dt * k2)
        k4 = rhs(w + dt * k3)
        w = w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(w).all():
            raise NonFinite(f"non-finite velocity in nonlinear substep at t = {state.t}", t=state.t)
        return State(state.u, w, state.t)

    def step(self, state, dt=None):
        dt = self.config.dt if dt is None else dt
        t0 = state.t
        try:
            if self.config.scheme == "strang":
                s = self.linear_step(state, 0.5 * dt)
                s = self.nonlinear_step(s, dt)
                s = self.linear_step(s, 0.5 * dt)
            else:
                s = self.linear_step(state, dt)
                s = self.nonlinear_step(s, dt)
            if not s.is_finite():
                raise NonFinite(f"non-finite state after step from t = {t0}", t=t0)
            if self.config.renormalize == "project" and not self.target.is_flat:
                u = self.target.nearest_point(s.u)
                s = State(u, self.target.project(u, s.u_t), s.t)
        except BelowInjectivityThreshold as exc:
            raise ConstraintEscape(f"solution left the tube around N after t = {t0}: {exc}", t=t0) from exc
        except FloatingPointError as exc:
            raise NonFinite(f"floating point failure after t = {t0}: {exc}", t=t0) from exc
        return State(s.u, s.u_t, t0 + dt)

    def schedule(self, t0, T):
        """Step sizes from t0 to T: full steps of dt and one shorter final step if needed."""
        dt = self.config.dt
        span = T - t0
        n_full = max(0, int(math.floor(span / dt + 1e-9)))
        rem = span - n_full * dt
        steps = [dt] * n_full
        if rem > 1e-12 * dt:
            steps.append(rem)
        return steps

    def evolve(self, initial, T, record_stride=1, monitor=None, sink=None, keep_states=False,
               record_initial=True, on_record=None, origin=None, steps_done=0):
        """Advance from initial.t to T, landing exactly on T.

        monitor(state) -> record is called on the initial state (unless
        record_initial is False), every ``record_stride`` steps and on the
        final state; each record goes to sink(record) and
        on_record(state, record, steps_done) if given. To continue a run
        from a checkpoint pass the run's start time as ``origin`` and the
        steps already taken as ``steps_done``: the step schedule and record
        points are then those of the uninterrupted run. On NonFinite or
        ConstraintEscape the exception carries the last state that passed a
        record, the records so far and the number of steps taken.
        """
        if self.config.dt is None:
            raise ValueError("config.dt must be resolved before evolving (see default_dt)")
        if record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        steps = self.schedule(initial.t if origin is None else origin, T)
        if steps_done > len(steps):
            raise ValueError("steps_done exceeds the run length")

        traj = Trajectory()
        state = healthy = initial
        done = steps_done

        def record(s):
            rec = None
            if monitor is not None:
                rec = monitor(s)
                if not rec.is_finite():
                    raise NonFinite(f"non-finite diagnostics at t = {s.t}", t=s.t)
                traj.records.append(rec)
                if sink is not None:
                    sink(rec)
            if keep_states:
                traj.states.append(s)
            if on_record is not None:
                on_record(s, rec, done)

        def abort(cls, message, cause=None):
            exc = cls(message, step=done, t=healthy.t, state=healthy, records=traj.records)
            exc.__cause__ = cause
            return exc

        with np.errstate(over="raise", invalid="raise"):
            try:
                if record_initial:
                    record(state)
                for i in range(steps_done + 1, len(steps) + 1):
                    state = self.step(state, steps[i - 1])
                    done = i
                    if i % record_stride == 0 or i == len(steps):
                        record(state)
                        healthy = state
            except NonFinite as exc:
                raise abort(NonFinite, str(exc), exc)
            except ConstraintEscape as exc:
                raise abort(ConstraintEscape, str(exc), exc)
            except BelowInjectivityThreshold as exc:
                raise abort(ConstraintEscape, f"solution left the tube around N near t = {state.t}: {exc}", exc)
            except (FloatingPointError, OverflowError) as exc:
                raise abort(NonFinite, f"floating point failure near t = {state.t}: {exc}", exc)
        traj.final = state
        return traj


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    states: list = field(default_factory=list)
    final: State | None = None


def step(grid, target, config, state):
    return Evolver(grid, target, config).step(state)


def evolve(grid, target, config, initial, T, record_stride=1, monitor=None, sink=None):
    if config.dt is None:
        config = replace(config, dt=default_dt(grid, initial.u, config.cutoff))
    return Evolver(grid, target, config).evolve(initial, T, record_stride, monitor, sink)
