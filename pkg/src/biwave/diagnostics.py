"""Monitored quantities along a trajectory.

A :class:`Monitor` is called on successive states (the evolver's record
points) and keeps the running time integrals: the dissipation
int ||grad u_t||^2 (E plus eps times it is conserved), the blow-up integral
and the nonlinear work of the higher-order energy equality.

The dissipation integral uses the trapezoid rule with the Hermite end
correction h^2/12 (f'(a) - f'(b)); f' = 2 <grad u_t, grad u_tt> is available
because u_tt is recovered from the equation at each record. This makes the
quadrature error O(h^4) in the record spacing, so the residual measures the
time stepper and not the record stride.
"""

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .evolver import default_k
from .nonlinearity import Nonlinearity

SCALAR_FIELDS = (
    "t", "E", "dissipation_residual", "alpha", "sup_grad", "sup_ut",
    "blowup_integrand", "blowup_integral", "manifold_dist", "tangency",
    "energy_equality_residual",
)


@dataclass
class DiagnosticsRecord:
    t: float
    E: float
    dissipation_residual: float
    alpha: float
    sup_grad: float
    sup_ut: float
    blowup_integrand: float
    blowup_integral: float
    manifold_dist: float
    tangency: float
    energy_equality_residual: float
    sobolev_profile: dict = field(default_factory=dict)

    def as_row(self):
        row = {name: getattr(self, name) for name in SCALAR_FIELDS}
        row.update(self.sobolev_profile)
        return row

    def is_finite(self):
        return all(math.isfinite(v) for v in self.as_row().values())


def profile_keys(k):
    keys = [f"grad_u_H{s}" for s in range(k)]
    keys += [f"u_t_H{s}" for s in range(k - 1)]
    keys.append(f"offset_H{k}")
    return keys


def energy(grid, state):
    """E = 1/2 (||u_t||^2 + ||Lap u||^2), spectrally."""
    return 0.5 * (grid.seminorm(state.u_t, 0) ** 2 + grid.seminorm(state.u, 2) ** 2)


def higher_energy(grid, state, k):
    """alpha = ||grad u||^2 + ||Lap u||^2 + ||grad^k u||^2 + ||u_t||^2 + ||grad^(k-2) u_t||^2."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > grid.max_order:
        raise ValueError(f"k = {k} exceeds the grid derivative budget {grid.max_order}")
    u, ut = state.u, state.u_t
    return (
        grid.seminorm(u, 1) ** 2 + grid.seminorm(u, 2) ** 2 + grid.seminorm(u, k) ** 2
        + grid.seminorm(ut, 0) ** 2 + grid.seminorm(ut, k - 2) ** 2
    )


def constraint_report(grid, target, state):
    """(sup dist(u, N), sup |(I - P_u) u_t|)."""
    dist = float(np.max(target.distance(state.u)))
    if target.is_flat:
        return dist, 0.0
    tang = grid.sup_norm(target.normal_part(state.u, state.u_t, check=False))
    return dist, tang


def blowup_integrand(grid, state, k):
    return grid.sup_norm(grid.gradient(state.u)) ** (2 * k) + grid.sup_norm(state.u_t) ** (2 * k)


def _inner_seminorm(grid, f, g, order):
    """<grad^order f, grad^order g> = V sum |xi|^(2 order) Re(f_hat conj g_hat)."""
    fh = grid.fft(f)
    gh = grid.fft(g)
    return float(grid.volume * np.sum(grid.k2 ** order * (fh * np.conj(gh)).real))


class Monitor:
    """Stateful record builder; call it on the states of one trajectory in time order."""

    def __init__(self, grid, target, k=None, eps=0.0, dealias=2.0, nonlinearity=None):
        self.grid = grid
        self.target = target
        self.k = default_k(grid.dim) if k is None else int(k)
        if self.k > grid.max_order:
            raise ValueError(f"k = {self.k} exceeds the grid derivative budget {grid.max_order}")
        self.eps = float(eps)
        self.nonlinearity = nonlinearity or Nonlinearity(grid, target, dealias)
        self.reset()

    def reset(self):
        self._prev = None
        self._E0 = None
        self._Q0 = None
        self._u0 = None
        self._diss = 0.0
        self._blowup = 0.0
        self._work = 0.0

    _SCALARS = ("_E0", "_Q0", "_diss", "_blowup", "_work")

    def state_dict(self):
        """Running integrals and references, enough to resume bit-exactly."""
        return {
            "scalars": {name: getattr(self, name) for name in self._SCALARS},
            "prev": None if self._prev is None else dict(self._prev),
            "u0": self._u0,
        }

    def load_state_dict(self, data):
        for name in self._SCALARS:
            setattr(self, name, data["scalars"][name])
        self._prev = None if data["prev"] is None else dict(data["prev"])
        self._u0 = None if data["u0"] is None else np.array(data["u0"], copy=True)

    def acceleration(self, state):
        """u_tt = -Lap^2 u + eps Lap u_t + N_eps(u, u_t)."""
        g = self.grid
        acc = -g.bilaplacian(state.u)
        if self.eps:
            acc = acc + self.eps * g.laplacian(state.u_t)
        if not self.target.is_flat:
            acc = acc + self.nonlinearity.regularized(state.u, state.u_t, self.eps)
        return acc

    def _pointwise(self, state):
        g, k = self.grid, self.k
        u, ut = state.u, state.u_t
        u_tt = self.acceleration(state)
        # f = ||grad u_t||^2 and its time derivative
        f = g.seminorm(ut, 1) ** 2
        df = 2.0 * _inner_seminorm(g, ut, u_tt, 1)
        # d/dt (||grad^k u||^2 + ||grad^(k-2) u_t||^2) = 2 <grad^(k-2)(u_tt + Lap^2 u), grad^(k-2) u_t>
        work = 2.0 * _inner_seminorm(g, u_tt + g.bilaplacian(u), ut, k - 2)
        Q = g.seminorm(u, k) ** 2 + g.seminorm(ut, k - 2) ** 2
        return dict(f=f, df=df, work=work, Q=Q, E=energy(g, state), integrand=blowup_integrand(g, state, k))

    def __call__(self, state):
        g, k = self.grid, self.k
        cur = self._pointwise(state)
        cur["t"] = state.t
        if self._prev is None:
            self._E0 = cur["E"]
            self._Q0 = cur["Q"]
            self._u0 = np.array(state.u, copy=True)
        else:
            p = self._prev
            h = cur["t"] - p["t"]
            self._diss += 0.5 * h * (p["f"] + cur["f"]) + h * h / 12.0 * (p["df"] - cur["df"])
            self._blowup += 0.5 * h * (p["integrand"] + cur["integrand"])
            self._work += 0.5 * h * (p["work"] + cur["work"])
        self._prev = cur

        dist, tang = constraint_report(g, self.target, state)
        sup_grad = g.sup_norm(g.gradient(state.u))
        profile = {f"grad_u_H{s}": g.gradient_sobolev_norm(state.u, s) for s in range(k)}
        profile.update({f"u_t_H{s}": g.sobolev_norm(state.u_t, s) for s in range(k - 1)})
        profile[f"offset_H{k}"] = g.sobolev_norm(state.u - self._u0, k)
        return DiagnosticsRecord(
            t=float(state.t),
            E=cur["E"],
            dissipation_residual=abs(cur["E"] + self.eps * self._diss - self._E0),
            alpha=higher_energy(g, state, k),
            sup_grad=sup_grad,
            sup_ut=g.sup_norm(state.u_t),
            blowup_integrand=cur["integrand"],
            blowup_integral=self._blowup,
            manifold_dist=dist,
            tangency=tang,
            energy_equality_residual=abs(cur["Q"] - self._Q0 - self._work),
            sobolev_profile=profile,
        )


def track(grid, target, states, k=None, eps=0.0, dealias=2.0):
    monitor = Monitor(grid, target, k=k, eps=eps, dealias=dealias)
    return [monitor(s) for s in states]


def dissipation_residual(grid, target, states, eps, dealias=2.0):
    """|E(t) + eps int_0^t ||grad u_t||^2 - E(0)| at the last state.

    Testing the equation with u_t (which is tangent, so N_eps drops out) gives
    dE/dt = -eps ||grad u_t||^2.
    """
    return track(grid, target, states, eps=eps, dealias=dealias)[-1].dissipation_residual


def blowup_report(grid, states, k):
    """Trapezoid of ||grad u||_inf^(2k) + ||u_t||_inf^(2k) over the states."""
    total = 0.0
    prev = None
    for s in states:
        cur = (s.t, blowup_integrand(grid, s, k))
        if prev is not None:
            total += 0.5 * (cur[0] - prev[0]) * (cur[1] + prev[1])
        prev = cur
    return total


def energy_equality_residual(grid, target, states, k, eps=0.0, dealias=2.0):
    """|Q(t) - Q(0) - int_0^t W| at the last state, Q = ||grad^k u||^2 + ||grad^(k-2) u_t||^2."""
    return track(grid, target, states, k=k, eps=eps, dealias=dealias)[-1].energy_equality_residual


class CsvSink:
    """Writes one row per record; the header is fixed by k at construction."""

    def __init__(self, path, k, keep_rows=None):
        """keep_rows=n reopens an existing file, keeping its header and first n rows."""
        self.path = path
        self.columns = list(SCALAR_FIELDS) + profile_keys(k)
        if keep_rows is None:
            self._fh = open(path, "w", newline="")
            self._writer = csv.DictWriter(self._fh, fieldnames=self.columns)
            self._writer.writeheader()
        else:
            with open(path, newline="") as fh:
                lines = fh.readlines()[: keep_rows + 1]
            if not lines or lines[0].strip().split(",") != self.columns:
                raise ValueError(f"{path} does not have the expected header")
            with open(path, "w", newline="") as fh:
                fh.writelines(lines)
            self._fh = open(path, "a", newline="")
            self._writer = csv.DictWriter(self._fh, fieldnames=self.columns)

    def __call__(self, record):
        self._writer.writerow({key: repr(float(v)) for key, v in record.as_row().items()})

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_records(path):
    with open(path, newline="") as fh:
        return [{key: float(v) for key, v in row.items()} for row in csv.DictReader(fh)]


def record_fields():
    return [f.name for f in fields(DiagnosticsRecord)]
