"""Target manifolds: nearest-point map, tangent projectors and their jets.

Points and vectors are arrays whose *first* axis holds the L ambient
components; any trailing axes (grid points) are broadcast pointwise.

For the round sphere the projector family is the rational extension

    P_p = I - p p^T / |p|^2,

which is idempotent and symmetric for every admissible p. Its jets are
evaluated in closed form from the product ``p * (p.v) * (1/|p|^2)``: each
derivative direction is routed to one of the three factors and the scalar
factor ``1/|p|^2`` is differentiated with Faa di Bruno over singleton/pair
blocks (|p|^2 is quadratic). Derivative slots commute; the applied slot does
not commute with them for this extension, so argument order matters.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from math import factorial

import numpy as np

from .errors import BelowInjectivityThreshold, UnsupportedOrder

MAX_JET_ORDER = 5  # orders 4 and 5 are only needed by the oracle's difference checks


def _dot(a, b):
    return (a * b).sum(axis=0)


@lru_cache(maxsize=None)
def _routings(j):
    """Assignments of j directions to factors 0 (p), 1 (p.v), 2 (1/|p|^2).

    Factors 0 and 1 are linear in p, so each takes at most one direction.
    """
    out = []
    for route in product(range(3), repeat=j):
        if route.count(0) <= 1 and route.count(1) <= 1:
            out.append(route)
    return tuple(out)


@lru_cache(maxsize=None)
def _pair_partitions(items):
    """Partitions of a tuple of indices into blocks of size one or two."""
    if not items:
        return ((),)
    first, rest = items[0], items[1:]
    out = []
    for tail in _pair_partitions(rest):
        out.append(((first,),) + tail)
    for i, other in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for tail in _pair_partitions(remaining):
            out.append(((first, other),) + tail)
    return tuple(out)


def _inv_sq_derivative(inv_pows, a, c, idx):
    """Derivative of p -> 1/|p|^2 along the directions listed in idx.

    inv_pows[m] = |p|^(-2m), a[i] = p.w_i and c[i][j] = w_i.w_j are
    precomputed pointwise.
    """
    if not idx:
        return inv_pows[1]
    total = 0.0
    for blocks in _pair_partitions(tuple(idx)):
        m = len(blocks)
        term = (-1) ** m * factorial(m) * 2.0 ** m * inv_pows[m + 1]
        for block in blocks:
            term = term * (a[block[0]] if len(block) == 1 else c[block[0]][block[1]])
        total = total + term
    return total


@lru_cache(maxsize=None)
def _jet_plan(j):
    """Routings grouped by the vector factor: {vec: [(lin, rest), ...]}.

    vec/lin are a direction index or None (meaning p, resp. p.v).
    """
    plan = {}
    for route in _routings(j):
        vec = route.index(0) if 0 in route else None
        lin = route.index(1) if 1 in route else None
        rest = tuple(i for i, r in enumerate(route) if r == 2)
        plan.setdefault(vec, []).append((lin, rest))
    return tuple((vec, tuple(terms)) for vec, terms in plan.items())


@dataclass(frozen=True)
class TargetManifold:
    """Embedded target N in R^L: either a round sphere of given radius or R^L itself."""

    kind: str
    ambient_dim: int
    radius: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sphere", "flat"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "sphere" and self.ambient_dim < 2:
            raise ValueError("sphere target needs ambient_dim >= 2")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @classmethod
    def sphere(cls, ambient_dim=3, radius=1.0):
        return cls("sphere", int(ambient_dim), float(radius))

    @classmethod
    def flat(cls, ambient_dim=3):
        return cls("flat", int(ambient_dim))

    @property
    def is_flat(self):
        return self.kind == "flat"

    @property
    def injectivity_threshold(self):
        return 0.5 * self.radius if self.kind == "sphere" else np.inf

    def check(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "sphere":
            norms = np.sqrt(_dot(p, p))
            low = np.min(norms)
            if not low >= self.injectivity_threshold:
                raise BelowInjectivityThreshold(low, self.injectivity_threshold)
        return p

    def nearest_point(self, p):
        p = self.check(p)
        if self.is_flat:
            return p.copy()
        return self.radius * p / np.sqrt(_dot(p, p))

    def distance(self, p):
        """Pointwise Euclidean distance to N (no tube check)."""
        p = np.asarray(p, dtype=float)
        if self.is_flat:
            return np.zeros(p.shape[1:])
        return np.abs(np.sqrt(_dot(p, p)) - self.radius)

    def project(self, p, v, check=True):
        """Apply P_p to v pointwise."""
        p = self.check(p) if check else np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.is_flat:
            return v.copy()
        return v - p * (_dot(p, v) / _dot(p, p))

    def normal_part(self, p, v, check=True):
        """Apply I - P_p to v pointwise."""
        return np.asarray(v, dtype=float) - self.project(p, v, check=check)

    def projector(self, p):
        """P_p as an (L, L, ...) array; for a single point a plain matrix."""
        p = self.check(p)
        eye = np.eye(self.ambient_dim).reshape((self.ambient_dim,) * 2 + (1,) * (p.ndim - 1))
        if self.is_flat:
            return np.broadcast_to(eye, (self.ambient_dim,) * 2 + p.shape[1:]).copy()
        return eye - p[:, None] * p[None, :] / _dot(p, p)

    def jet(self, p, directions, v, check=True):
        """d^jP_p(w_1, ..., w_j) applied to v, pointwise; j = len(directions).

        The directions are the derivative slots, v is the slot the projector
        acts on. Order zero returns P_p v.
        """
        j = len(directions)
        if j > MAX_JET_ORDER:
            raise UnsupportedOrder(f"jet order {j} exceeds {MAX_JET_ORDER}")
        if j == 0:
            return self.project(p, v, check=check)
        p = self.check(p) if check else np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.is_flat:
            return np.zeros(np.broadcast(p, v, *directions).shape)
        ws = [np.asarray(w, dtype=float) for w in directions]
        s = _dot(p, p)
        inv = 1.0 / s
        inv_pows = [None, inv]
        for _ in range(j):
            inv_pows.append(inv_pows[-1] * inv)
        a = [_dot(p, w) for w in ws]
        b = [_dot(w, v) for w in ws]
        c = [[_dot(wi, wk) if k > i else None for k, wk in enumerate(ws)] for i, wi in enumerate(ws)]
        for i in range(j):
            for k in range(i):
                c[i][k] = c[k][i]
        pv = _dot(p, v)
        phi = {}
        out = 0.0
        for vec, terms in _jet_plan(j):
            scalar = 0.0
            for lin, rest in terms:
                f = phi.get(rest)
                if f is None:
                    f = phi[rest] = _inv_sq_derivative(inv_pows, a, c, rest)
                scalar = scalar + (pv if lin is None else b[lin]) * f
            out = out + (p if vec is None else ws[vec]) * scalar
        # P = I - Q, so every jet of order >= 1 is minus the jet of Q
        return -out

    def projector_derivative(self, p, order, directions):
        """d^jP_p(w_1, ..., w_j, .) as an L x L matrix at a single point."""
        if order not in (1, 2, 3):
            raise UnsupportedOrder(f"projector derivative order must be 1, 2 or 3, got {order}")
        if len(directions) != order:
            raise ValueError("need exactly `order` directions")
        p = np.asarray(p, dtype=float)
        basis = np.eye(self.ambient_dim)
        return np.stack([self.jet(p, directions, e) for e in basis], axis=1)


def nearest_point(target, p):
    return target.nearest_point(p)


def projector(target, p):
    return target.projector(p)


def projector_derivative(target, p, order, directions):
    return target.projector_derivative(p, order, directions)
