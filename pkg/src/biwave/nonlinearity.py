"""Right-hand sides of the biharmonic wave map equation.

For u with values in N the equation reads

    u_tt + Lap^2 u = N(u) := (I - P_u)(u_tt + Lap^2 u),

and N(u) is assembled from spectral derivatives of u contracted pointwise with
projector jets. Notation in the comments: D_j(w_1..w_j)v is the jet
``target.jet(u, [w_1..w_j], v)`` (derivative slots first, applied slot last).

The jets of the extension P_p = I - pp^T/|p|^2 are not symmetric between the
applied slot and the derivative slots, so terms that coincide for a fully
symmetric family (P = d pi) split here:

    4 dP(grad u, grad Lap u)   -> D1(d_a Lap u) d_a u + 3 D1(d_a u) d_a Lap u
    2 d2P(grad u, grad u, Lap u) -> D2(Lap u, d_a u) d_a u + D2(d_a u, d_a u) Lap u
    4 d2P(grad u, grad u, hess u) -> 2 D2(d_b u, d_ab u) d_a u + 2 D2(d_b u, d_a u) d_ab u

Only the sum is independent of the extension; it equals (I - P_u) Lap^2 u plus
the velocity term D1(u_t) u_t.
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import EpsilonOutOfRange


@dataclass
class NonlinearityTerms:
    velocity: np.ndarray        # dP(u_t, u_t)
    laplacian_sq: np.ndarray    # dP(Lap u, Lap u)
    third_order: np.ndarray     # 4 dP(grad u, grad Lap u)
    hessian_sq: np.ndarray      # 2 dP(hess u, hess u)
    grad_grad_lap: np.ndarray   # 2 d2P(grad u, grad u, Lap u)
    grad_grad_hess: np.ndarray  # 4 d2P(grad u, grad u, hess u)
    quartic: np.ndarray         # d3P(grad u, grad u, grad u, grad u)

    @property
    def total(self):
        out = np.zeros_like(self.velocity)
        for f in fields(self):
            out = out + getattr(self, f.name)
        return out

    @property
    def geometric(self):
        """Everything except the velocity term, i.e. (I - P_u) Lap^2 u."""
        return self.total - self.velocity

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


class _Derivs:
    """Spatial derivatives of u (and optionally u_t) sampled on the work grid."""

    def __init__(self, grid, work, u, mult):
        n = grid.dim
        uh = grid.fft(u)
        if work is not grid:
            uh = grid.resample_spectrum(uh, work)
        d = lambda axes: work.ifft(mult(axes) * uh)
        self.u = work.ifft(uh)
        self.grad = [d((a,)) for a in range(n)]
        hess = [[None] * n for _ in range(n)]
        for a in range(n):
            for b in range(a, n):
                hess[a][b] = hess[b][a] = d((a, b))
        self.hess = hess
        self.lap = sum(hess[a][a] for a in range(n))
        self.grad_lap = [sum(d((a, b, b)) for b in range(n)) for a in range(n)]


class Nonlinearity:
    """Evaluator of N and N_eps on one grid, with optional zero-padded products.

    ``dealias`` is the oversampling factor: derivatives are interpolated onto a
    grid with dealias*M points per axis, products are formed there and the
    result is truncated back to the modes of the original grid.
    """

    def __init__(self, grid, target, dealias=1.0):
        if dealias < 1:
            raise ValueError("dealias factor must be >= 1")
        self.grid = grid
        self.target = target
        self.dealias = float(dealias)
        self.work = grid if dealias == 1 else grid.refine(dealias)
        self._mult_cache = {}

    def _mult(self, axes):
        alpha = self.work.axes_to_alpha(axes)
        m = self._mult_cache.get(alpha)
        if m is None:
            m = self._mult_cache[alpha] = self.work.multiplier(alpha)
        return m

    def _to_work(self, f):
        if self.work is self.grid:
            return np.asarray(f, dtype=float)
        return self.work.ifft(self.grid.resample_spectrum(self.grid.fft(f), self.work))

    def _to_grid(self, f):
        if self.work is self.grid:
            return f
        return self.grid.ifft(self.work.resample_spectrum(self.work.fft(f), self.grid))

    def _grad_work(self, f):
        fh = self.grid.fft(f)
        if self.work is not self.grid:
            fh = self.grid.resample_spectrum(fh, self.work)
        return self.work.ifft(fh), [self.work.ifft(self._mult((a,)) * fh) for a in range(self.grid.dim)]

    def derivatives(self, u):
        d = _Derivs(self.grid, self.work, u, self._mult)
        self.target.check(d.u)
        return d

    # -- pieces on the work grid ------------------------------------------

    def _geometric_terms(self, d):
        jet = lambda dirs, v: self.target.jet(d.u, dirs, v, check=False)
        n = self.grid.dim
        G, H, lap, G3 = d.grad, d.hess, d.lap, d.grad_lap
        third = 0.0
        gg_lap = 0.0
        for a in range(n):
            third = third + jet([G3[a]], G[a]) + 3.0 * jet([G[a]], G3[a])
            gg_lap = gg_lap + jet([lap, G[a]], G[a]) + jet([G[a], G[a]], lap)
        hess_sq = 0.0
        gg_hess = 0.0
        quartic = 0.0
        for a in range(n):
            for b in range(n):
                hess_sq = hess_sq + 2.0 * jet([H[a][b]], H[a][b])
                gg_hess = gg_hess + 2.0 * jet([G[b], H[a][b]], G[a]) + 2.0 * jet([G[b], G[a]], H[a][b])
                quartic = quartic + jet([G[b], G[b], G[a]], G[a])
        return {
            "laplacian_sq": jet([lap], lap),
            "third_order": third,
            "hessian_sq": hess_sq,
            "grad_grad_lap": gg_lap,
            "grad_grad_hess": gg_hess,
            "quartic": quartic,
        }

    def _velocity_term(self, d, ut):
        return self.target.jet(d.u, [ut], ut, check=False)

    def _eps_correction(self, d, ut, grad_ut):
        """(I - P_u) Lap u_t expanded: D2(d_a u, d_a u) u_t + 2 D1(d_a u) d_a u_t + D1(Lap u) u_t."""
        jet = lambda dirs, v: self.target.jet(d.u, dirs, v, check=False)
        out = jet([d.lap], ut)
        for a in range(self.grid.dim):
            out = out + jet([d.grad[a], d.grad[a]], ut) + 2.0 * jet([d.grad[a]], grad_ut[a])
        return out

    # -- public evaluations -------------------------------------------------

    def terms(self, u, u_t):
        d = self.derivatives(u)
        geo = self._geometric_terms(d)
        vel = self._velocity_term(d, self._to_work(u_t))
        return NonlinearityTerms(
            velocity=self._to_grid(vel), **{k: self._to_grid(v) for k, v in geo.items()}
        )

    def geometric(self, u):
        """(I - P_u) Lap^2 u through the expansion, on the original grid."""
        d = self.derivatives(u)
        geo = self._geometric_terms(d)
        return self._to_grid(sum(geo.values()))

    def eps_correction(self, u, u_t):
        d = self.derivatives(u)
        ut, grad_ut = self._grad_work(u_t)
        return self._to_grid(self._eps_correction(d, ut, grad_ut))

    def regularized(self, u, u_t, eps):
        _check_eps(eps)
        stage = self.frozen(u, eps)
        return stage(u_t)

    def frozen(self, u, eps=0.0):
        """Return u_t -> N_eps(u, u_t) with all u-only work done once.

        N_eps is affine-plus-quadratic in u_t for fixed u, so this is the
        same function, evaluated without recomputing the geometric terms.
        """
        _check_eps(eps)
        d = self.derivatives(u)
        geo = sum(self._geometric_terms(d).values())

        def stage(u_t):
            if eps:
                ut, grad_ut = self._grad_work(u_t)
                rest = self._velocity_term(d, ut) - eps * self._eps_correction(d, ut, grad_ut)
            else:
                rest = self._velocity_term(d, self._to_work(u_t))
            return self._to_grid(geo + rest)

        return stage


def _check_eps(eps):
    if not 0.0 <= eps < 1.0:
        raise EpsilonOutOfRange(f"eps must lie in [0, 1), got {eps}")


def evaluate_nonlinearity(grid, target, u, u_t, dealias=1.0):
    return Nonlinearity(grid, target, dealias).terms(u, u_t)


def evaluate_regularized_nonlinearity(grid, target, u, u_t, eps, dealias=1.0):
    _check_eps(eps)
    nl = Nonlinearity(grid, target, dealias)
    return nl.terms(u, u_t).total - eps * nl.eps_correction(u, u_t)


def intrinsic_correction(grid, target, u):
    """Euler-Lagrange difference between the intrinsic and extrinsic actions.

    P_u( A . D2(d_a u, e_j) d_a u ) + P_u( d_a[ A . D1(e_j) d_a u ] ) with
    A = D1(d_a u) d_a u summed over a, evaluated on the grid itself.
    """
    u = target.check(u)
    if target.is_flat:
        return np.zeros_like(u)
    grad = grid.gradient(u)
    jet = lambda dirs, v: target.jet(u, dirs, v, check=False)
    A = sum(jet([grad[a]], grad[a]) for a in range(grid.dim))
    L = u.shape[0]
    basis = np.eye(L).reshape((L, L) + (1,) * grid.dim)
    first = np.zeros_like(u)
    flux = np.zeros((grid.dim,) + u.shape)
    for j in range(L):
        e = np.broadcast_to(basis[j], u.shape)
        for a in range(grid.dim):
            first[j] += np.sum(A * jet([grad[a], e], grad[a]), axis=0)
            flux[a, j] = np.sum(A * jet([e], grad[a]), axis=0)
    second = grid.divergence(flux)
    return target.project(u, first + second, check=False)


def orthogonality_residual(grid, target, u, u_t, dealias=1.0):
    """sup over the grid of |P_u N(u)|."""
    total = evaluate_nonlinearity(grid, target, u, u_t, dealias).total
    return grid.sup_norm(target.project(u, total))


def chain_identity_residual(grid, target, u, u_t=None, u_tt=None):
    """Residuals of the three identities behind the expansion.

    Returns (time, laplacian, bilaplacian): sup-norm gaps between
    (I - P_u) u_tt and D1(u_t) u_t, (I - P_u) Lap u and D1(d_a u) d_a u, and
    (I - P_u) Lap^2 u and the geometric part of N. The time residual is NaN
    unless both u_t and u_tt are given.
    """
    u = target.check(u)
    nl = Nonlinearity(grid, target)
    d = nl.derivatives(u)
    lap_rhs = sum(target.jet(u, [d.grad[a]], d.grad[a], check=False) for a in range(grid.dim))
    lap_res = grid.sup_norm(target.normal_part(u, d.lap, check=False) - lap_rhs)
    bilap_rhs = sum(nl._geometric_terms(d).values())
    bilap_res = grid.sup_norm(target.normal_part(u, grid.bilaplacian(u), check=False) - bilap_rhs)
    time_res = float("nan")
    if u_t is not None and u_tt is not None:
        time_res = grid.sup_norm(
            target.normal_part(u, u_tt, check=False) - target.jet(u, [u_t], u_t, check=False)
        )
    return time_res, lap_res, bilap_res
