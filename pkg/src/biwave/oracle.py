"""Slow, independent references used by the test suite and ``verify``.

* finite-difference projector jets and a Taylor scaling-and-squaring expm;
* a method-of-lines RK4 integrator for the un-split equation written through
  P_u only (no jets beyond a finite-difference dP), for cross-checking the
  splitting evolver at low resolution;
* a small symbolic term algebra that generates the chain/product-rule
  expansions of derivatives of jet expressions, used to check the Leibniz
  formula for grad^m(d^l P_u) and the telescoped expansion of
  grad^m(N(u) - N(v)) against direct evaluation.
"""

import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .grid import PeriodicGrid
from .nonlinearity import Nonlinearity, _check_eps

# -- finite differences -----------------------------------------------------


def _nested_difference(target, p, directions, h):
    j = len(directions)
    L = target.ambient_dim
    out = np.zeros((L, L))
    for signs in product((1.0, -1.0), repeat=j):
        shift = sum(s * w for s, w in zip(signs, directions))
        out += np.prod(signs) * target.projector(p + h * shift)
    return out / (2.0 * h) ** j


def fd_projector_jet(target, p, order, directions, h=1e-3):
    """d^jP_p(w_1..w_j, .) as an L x L matrix by nested central differences.

    One Richardson step (steps 2h and h) removes the O(h^2) term; h is the
    finest step, which sets the roundoff floor eps / h^order.
    """
    p = np.asarray(p, dtype=float)
    directions = [np.asarray(w, dtype=float) for w in directions]
    if len(directions) != order:
        raise ValueError("need exactly `order` directions")
    if order == 0:
        return target.projector(p)
    coarse = _nested_difference(target, p, directions, 2.0 * h)
    fine = _nested_difference(target, p, directions, h)
    return (4.0 * fine - coarse) / 3.0


def fd_first_jet(target, p, w, v, h=1e-3):
    """dP_p(w) v pointwise on fields, by Richardson-corrected central differences."""

    def central(step):
        return (target.project(p + step * w, v, check=False) - target.project(p - step * w, v, check=False)) / (2 * step)

    return (4.0 * central(h / 2) - central(h)) / 3.0


def _balance(A):
    """Parlett-Reinsch diagonal balancing with powers of two: returns (D^-1 A D, d)."""
    A = A.copy()
    n = A.shape[0]
    d = np.ones(n)
    converged = False
    while not converged:
        converged = True
        for i in range(n):
            c = np.sum(np.abs(A[:, i])) - abs(A[i, i])
            r = np.sum(np.abs(A[i, :])) - abs(A[i, i])
            if c == 0 or r == 0:
                continue
            f = 1.0
            while c < r / 2:
                c, r, f = c * 2, r / 2, f * 2
            while c >= r * 2:
                c, r, f = c / 2, r * 2, f / 2
            if f != 1.0:
                converged = False
                d[i] *= f
                A[:, i] *= f
                A[i, :] /= f
    return A, d


def dense_expm(A, t=1.0, tol=1e-17):
    """exp(tA) for a small dense matrix.

    Balancing, then Taylor series on A / 2^s with ||A / 2^s|| <= 1/2, then s
    squarings. Balancing matters for the plate symbol, whose off-diagonal
    entries differ by |xi|^4.
    """
    A = np.asarray(A, dtype=float) * t
    B, d = _balance(A)
    norm = np.max(np.sum(np.abs(B), axis=1)) if B.size else 0.0
    s = int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    B = B / 2.0 ** s
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for n in range(1, 60):
        term = term @ B / n
        out = out + term
        if np.max(np.abs(term)) <= tol * np.max(np.abs(out)):
            break
    for _ in range(s):
        out = out @ out
    # undo the similarity: exp(A) = D exp(D^-1 A D) D^-1
    return out * d[:, None] / d[None, :]


def plate_symbol(mu, eps):
    """A_xi = [[0, 1], [-mu^2, -eps mu]] for mu = |xi|^2."""
    return np.array([[0.0, 1.0], [-mu * mu, -eps * mu]])


def propagator_discrepancy(grid, eps, dt):
    """Max entry gap between build_propagator and dense_expm over the lattice.

    Both matrices are compared after the similarity D M D^-1, D = diag(max(mu, 1), 1),
    which maps each block to energy-normalized coordinates (an isometry at eps = 0),
    so entries are O(1) regardless of |xi|.
    """
    from .evolver import build_propagator

    sym = build_propagator(grid, eps, dt)
    worst = 0.0
    for mu in np.unique(np.round(grid.k2, 12)):
        idx = np.unravel_index(np.argmin(np.abs(grid.k2 - mu)), grid.shape)
        d = max(float(mu), 1.0)
        scale = np.array([[1.0, d], [1.0 / d, 1.0]])
        exact = dense_expm(plate_symbol(float(grid.k2[idx]), eps), dt)
        worst = max(worst, float(np.max(np.abs(exact - sym.matrix(idx)) * scale)))
    return worst


def periodic_fd_derivative(grid, f, axis, order=1):
    """8th-order central finite differences on the periodic grid (orders 1 and 2)."""
    weights = {
        1: ([1, 2, 3, 4], [4 / 5, -1 / 5, 4 / 105, -1 / 280]),
        2: ([1, 2, 3, 4], [8 / 5, -1 / 5, 8 / 315, -1 / 560]),
    }
    offs, ws = weights[order]
    f = np.asarray(f, dtype=float)
    ax = f.ndim - grid.dim + axis
    if order == 1:
        out = sum(w * (np.roll(f, -o, axis=ax) - np.roll(f, o, axis=ax)) for o, w in zip(offs, ws))
        return out / grid.dx
    out = -205 / 72 * f + sum(w * (np.roll(f, -o, axis=ax) + np.roll(f, o, axis=ax)) for o, w in zip(offs, ws))
    return out / grid.dx ** 2


def intrinsic_correction_fd(grid, target, u, h=1e-3):
    """Intrinsic correction assembled with finite-difference jets and FD derivatives."""
    u = np.asarray(u, dtype=float)
    L = u.shape[0]
    n = grid.dim
    grad = [periodic_fd_derivative(grid, u, a) for a in range(n)]

    def d1(w, v):
        return fd_first_jet(target, u, w, v, h)

    def d2(w1, w2, v):
        def central(step):
            up = fd_first_jet(target, u + step * w1, w2, v, h)
            down = fd_first_jet(target, u - step * w1, w2, v, h)
            return (up - down) / (2 * step)
        return (4.0 * central(h / 2) - central(h)) / 3.0

    A = sum(d1(grad[a], grad[a]) for a in range(n))
    first = np.zeros_like(u)
    second = np.zeros_like(u)
    for j in range(L):
        e = np.zeros_like(u)
        e[j] = 1.0
        for a in range(n):
            first[j] += np.sum(A * d2(grad[a], e, grad[a]), axis=0)
            second[j] += periodic_fd_derivative(grid, np.sum(A * d1(e, grad[a]), axis=0), a)
    return target.project(u, first + second, check=False)


# -- reference integrator -----------------------------------------------------


def reference_rhs(grid, target, u, u_t, eps, h=1e-3):
    """u_tt = -P_u(Lap^2 u - eps Lap u_t) + dP_u(u_t) u_t (finite-difference dP)."""
    linear = grid.bilaplacian(u) - eps * grid.laplacian(u_t)
    if target.is_flat:
        return -linear
    return -target.project(u, linear, check=False) + fd_first_jet(target, u, u_t, u_t, h)


def reference_integrate(grid, target, initial, T, eps=0.0, dt_ref=None):
    """Method-of-lines RK4 on the un-split system; explicit in the stiff Lap^2 part.

    Meant for M <= 32. The default step is 2/|xi_max|^4 scaled by 0.5 (the
    RK4 stability interval on the imaginary axis reaches about 2.8).
    """
    _check_eps(eps)
    from .evolver import State

    if grid.points > 32:
        raise ValueError("reference_integrate is budgeted for M <= 32")
    kmax2 = float(np.max(grid.k2))
    if dt_ref is None:
        dt_ref = 1.0 / max(kmax2 ** 2 + eps * kmax2, 1.0)
    span = T - initial.t
    n = max(1, int(math.ceil(span / dt_ref - 1e-9)))
    h = span / n
    u, v = np.array(initial.u, dtype=float), np.array(initial.u_t, dtype=float)

    def f(u, v):
        return v, reference_rhs(grid, target, u, v, eps)

    for _ in range(n):
        k1u, k1v = f(u, v)
        k2u, k2v = f(u + 0.5 * h * k1u, v + 0.5 * h * k1v)
        k3u, k3v = f(u + 0.5 * h * k2u, v + 0.5 * h * k2v)
        k4u, k4v = f(u + h * k3u, v + h * k3v)
        u = u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return State(u, v, T)


# -- term algebra -------------------------------------------------------------
#
# A Factor is a field name with a sorted tuple of partial-derivative axes.
# Names starting with "e" are constant basis fields. A Monomial is
# coef * s^spow * D_q(base)(slots...) applied, with base "u", "v" or "seg"
# (the segment point v + s (u - v), integrated over s in [0, 1]).


@dataclass(frozen=True, order=True)
class Factor:
    field: str
    derivs: tuple = ()

    @property
    def constant(self):
        return self.field.startswith("e")

    def d(self, axis):
        return Factor(self.field, tuple(sorted(self.derivs + (axis,))))

    def rename(self, table):
        return Factor(table.get(self.field, self.field), self.derivs)


@dataclass(frozen=True)
class Monomial:
    coef: float
    base: str
    slots: tuple
    applied: Factor
    spow: int = 0

    @property
    def order(self):
        return len(self.slots)

    def key(self):
        return (self.base, tuple(sorted(self.slots)), self.applied, self.spow)


def simplify(monos, tol=0.0):
    acc = defaultdict(float)
    for m in monos:
        acc[m.key()] += m.coef
    return [Monomial(c, base, slots, applied, spow) for (base, slots, applied, spow), c in acc.items() if abs(c) > tol]


def _base_directions(base, axis):
    """d_axis of the base point, as (Factor, extra power of s) pairs."""
    if base == "seg":
        return [(Factor("v", (axis,)), 0), (Factor("w", (axis,)), 1)]
    return [(Factor(base, (axis,)), 0)]


def differentiate(monos, axis):
    out = []
    for m in monos:
        for direction, ds in _base_directions(m.base, axis):
            out.append(Monomial(m.coef, m.base, (direction,) + m.slots, m.applied, m.spow + ds))
        for i, f in enumerate(m.slots):
            if not f.constant:
                slots = m.slots[:i] + (f.d(axis),) + m.slots[i + 1:]
                out.append(Monomial(m.coef, m.base, slots, m.applied, m.spow))
        if not m.applied.constant:
            out.append(Monomial(m.coef, m.base, m.slots, m.applied.d(axis), m.spow))
    return simplify(out)


class FieldTable:
    """Named fields on one grid with cached spectral derivatives."""

    def __init__(self, grid, fields):
        self.grid = grid
        self.fields = {k: np.asarray(v, dtype=float) for k, v in fields.items()}
        self._cache = {}

    def __call__(self, factor):
        key = (factor.field, factor.derivs)
        if key not in self._cache:
            if factor.constant:
                L = next(iter(self.fields.values())).shape[0]
                e = np.zeros((L,) + (1,) * self.grid.dim)
                e[int(factor.field[1:])] = 1.0
                self._cache[key] = e
            else:
                f = self.fields[factor.field]
                alpha = self.grid.axes_to_alpha(factor.derivs)
                self._cache[key] = self.grid.derivative(f, alpha) if factor.derivs else f
        return self._cache[key]


def evaluate(monos, table, target, nodes=12):
    """Sum of the monomials on the grid; 'seg' terms by Gauss-Legendre in s."""
    shape = next(iter(table.fields.values())).shape
    out = np.zeros(shape)
    seg = [m for m in monos if m.base == "seg"]
    for m in monos:
        if m.base == "seg":
            continue
        p = table.fields[m.base]
        out += m.coef * target.jet(p, [table(f) for f in m.slots], table(m.applied), check=False)
    if seg:
        x, w = np.polynomial.legendre.leggauss(nodes)
        s_nodes, weights = 0.5 * (x + 1.0), 0.5 * w
        v, dw = table.fields["v"], table.fields["w"]
        for s, wt in zip(s_nodes, weights):
            p = v + s * dw
            for m in seg:
                out += wt * s ** m.spow * m.coef * target.jet(p, [table(f) for f in m.slots], table(m.applied), check=False)
    return out


def nonlinearity_monomials(dim, eps=0.0):
    """N_eps(u) as monomials in the fields 'u' and 'ut', base 'u'.

    Mirrors the split expansion used by the evaluator (derivative slots first).
    """
    u = lambda *axes: Factor("u", tuple(sorted(axes)))
    ut = lambda *axes: Factor("ut", tuple(sorted(axes)))
    M = lambda c, slots, applied: Monomial(float(c), "u", tuple(slots), applied)
    ax = range(dim)
    out = [M(1, [ut()], ut())]
    for a in ax:
        for b in ax:
            out.append(M(1, [u(a, b, b)], u(a)))
            out.append(M(3, [u(a)], u(a, b, b)))
            out.append(M(1, [u(b, b), u(a)], u(a)))
            out.append(M(1, [u(a), u(a)], u(b, b)))
            out.append(M(1, [u(a, a)], u(b, b)))
            out.append(M(2, [u(a, b)], u(a, b)))
            out.append(M(2, [u(b), u(a, b)], u(a)))
            out.append(M(2, [u(b), u(a)], u(a, b)))
            out.append(M(1, [u(b), u(b), u(a)], u(a)))
    if eps:
        for a in ax:
            out.append(M(-eps, [u(a), u(a)], ut()))
            out.append(M(-2 * eps, [u(a)], ut(a)))
            for b in ax:
                out.append(M(-eps, [u(b, b)], ut()))
    return simplify(out)


def telescope(monos):
    """T(u) - T(v) for each monomial T with base 'u', as monomials in u, v, w = u - v.

    D_q(u)(F_1..F_q) G - D_q(v)(F_1..F_q) G|_v is split into the jet difference
    int_0^1 D_{q+1}(v + s w)(w, F_1(u)..F_q(u)) G(u) ds plus one term per slot
    with F_i(u) - F_i(v) = F_i(w), earlier slots at v, later ones at u.
    """
    to_v = {"u": "v", "ut": "vt"}
    to_w = {"u": "w", "ut": "wt"}
    out = []
    for m in monos:
        if m.base != "u":
            raise ValueError("telescope expects base 'u'")
        args = list(m.slots) + [m.applied]
        out.append(Monomial(m.coef, "seg", (Factor("w"),) + m.slots, m.applied))
        for i in range(len(args)):
            new = [a.rename(to_v) for a in args[:i]] + [args[i].rename(to_w)] + args[i + 1:]
            out.append(Monomial(m.coef, "v", tuple(new[:-1]), new[-1]))
    return out


def leibniz_monomials(l, m_axes, slot_fields, applied_field):
    """d_{a_1}..d_{a_m} of D_l(u)(e..)e as monomials (coefficients by iterated chain rule)."""
    monos = [Monomial(1.0, "u", tuple(Factor(f) for f in slot_fields), Factor(applied_field))]
    for a in m_axes:
        monos = differentiate(monos, a)
    return monos


def leibniz_structure_ok(monos, l, m):
    """Each term is d^(j+l)P_u(grad^(m_1+1) u, .., grad^(m_j+1) u) with sum (m_i + 1) = m."""
    for mono in monos:
        varying = [f for f in mono.slots if not f.constant]
        if len(mono.slots) - len(varying) != l or not mono.applied.constant:
            return False
        if any(f.field != "u" or len(f.derivs) < 1 for f in varying):
            return False
        if sum(len(f.derivs) for f in varying) != m:
            return False
    return True


# -- expansion checks -----------------------------------------------------------


@dataclass
class ExpansionCheckReport:
    expansion: str
    m: int
    residuals: dict = field(default_factory=dict)   # resolution -> sup residual
    n_terms: int = 0
    structure_ok: bool = True

    @property
    def resolutions(self):
        return sorted(self.residuals)

    @property
    def residual(self):
        return self.residuals[max(self.residuals)]

    def decay_factors(self):
        r = [self.residuals[M] for M in self.resolutions]
        return [a / b if b > 0 else math.inf for a, b in zip(r, r[1:])]


def check_leibniz_expansion(target, u_fn, m, l, resolutions=(32, 64, 128), dim=1, period=2 * np.pi):
    """grad^m(d^l P_u) via spectral differentiation vs the symbolic chain-rule sum.

    u_fn maps grid coordinates (dim, *shape) to a manifold-valued field.
    """
    if m > 2 or m + l > 3 or m < 0 or l < 0:
        raise ValueError("need m <= 2 and m + l <= 3")
    L = target.ambient_dim
    report = ExpansionCheckReport("leibniz", m)
    for M in resolutions:
        grid = PeriodicGrid(dim, M, period)
        u = target.check(u_fn(grid.coordinates))
        table = FieldTable(grid, {"u": u})
        worst = 0.0
        n_terms = 0
        for slot_idx in product(range(L), repeat=l):
            basis = [np.eye(L)[i].reshape((L,) + (1,) * dim) for i in slot_idx]
            for k in range(L):
                applied = np.eye(L)[k].reshape((L,) + (1,) * dim)
                field_val = target.jet(u, basis, applied, check=False) if l else target.project(u, np.broadcast_to(applied, u.shape), check=False)
                for axes in product(range(dim), repeat=m):
                    lhs = grid.derivative(field_val, grid.axes_to_alpha(axes)) if m else field_val
                    monos = leibniz_monomials(l, axes, [f"e{i}" for i in slot_idx], f"e{k}")
                    n_terms = max(n_terms, len(monos))
                    if not leibniz_structure_ok(monos, l, m):
                        report.structure_ok = False
                    rhs = evaluate(monos, table, target)
                    worst = max(worst, grid.sup_norm(lhs - rhs))
        report.residuals[M] = worst
        report.n_terms = n_terms
    return report


def check_difference_expansion(target, u_fn, v_fn, m, eps=0.0, resolutions=(32, 64, 128), dim=1,
                               period=2 * np.pi, ut_fn=None, vt_fn=None):
    """grad^m(N_eps(u) - N_eps(v)): direct evaluation vs the telescoped term families.

    Velocities default to zero; with eps > 0 the viscous correction terms are
    included on both sides.
    """
    if m not in (0, 1):
        raise ValueError("m must be 0 or 1")
    _check_eps(eps)
    monos = telescope(nonlinearity_monomials(dim, eps))
    report = ExpansionCheckReport("difference" if not eps else "difference-eps", m, n_terms=len(monos))
    for M in resolutions:
        grid = PeriodicGrid(dim, M, period)
        x = grid.coordinates
        u = target.check(u_fn(x))
        v = target.check(v_fn(x))
        ut = np.zeros_like(u) if ut_fn is None else ut_fn(x)
        vt = np.zeros_like(v) if vt_fn is None else vt_fn(x)
        nl = Nonlinearity(grid, target)
        direct = nl.regularized(u, ut, eps) - nl.regularized(v, vt, eps)
        table = FieldTable(grid, {"u": u, "v": v, "w": u - v, "ut": ut, "vt": vt, "wt": ut - vt})
        worst = 0.0
        for axes in product(range(dim), repeat=m):
            lhs = grid.derivative(direct, grid.axes_to_alpha(axes)) if m else direct
            terms = monos
            for a in axes:
                terms = differentiate(terms, a)
            worst = max(worst, grid.sup_norm(lhs - evaluate(terms, table, target)))
        report.residuals[M] = worst
    return report


# -- analytic test fields -------------------------------------------------------


def great_circle_field(a=1, radius=1.0, L=3):
    a = np.atleast_1d(np.asarray(a, dtype=float))

    def fn(x):
        th = np.tensordot(a, x, axes=(0, 0)) if x.shape[0] == a.size else a[0] * x[0]
        out = np.zeros((L,) + th.shape)
        out[0], out[1] = radius * np.cos(th), radius * np.sin(th)
        return out

    return fn


def rotated(fn, angle, axes=(0, 2)):
    """The field R fn with R a rotation by `angle` in the given ambient plane."""
    c, s = math.cos(angle), math.sin(angle)

    def out(x):
        f = fn(x).copy()
        i, j = axes
        fi, fj = f[i].copy(), f[j].copy()
        f[i], f[j] = c * fi - s * fj, s * fi + c * fj
        return f

    return out


def random_manifold_field(target, dim=1, band=3, amplitude=0.3, seed=0):
    """nearest_point(e_L + amplitude * trigonometric polynomial), analytic in x."""
    rng = np.random.default_rng(seed)
    L = target.ambient_dim
    modes = [k for k in product(range(-band, band + 1), repeat=dim) if any(k)]
    coef = rng.normal(size=(len(modes), L, 2)) / len(modes) ** 0.5

    def raw(x):
        out = np.zeros((L,) + x.shape[1:])
        out[-1] = target.radius if not target.is_flat else 0.0
        for k, c in zip(modes, coef):
            ph = sum(ki * xi for ki, xi in zip(k, x))
            cs = c.reshape((L, 2) + (1,) * dim)
            out += amplitude * (cs[:, 0] * np.cos(ph) + cs[:, 1] * np.sin(ph))
        return out

    def fn(x):
        return target.nearest_point(raw(x))

    fn.raw = raw
    return fn
