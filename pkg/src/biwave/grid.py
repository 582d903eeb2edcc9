"""Uniform grids on the flat torus and the spectral calculus on them.

Fields are plain numpy arrays whose trailing ``dim`` axes are the grid axes;
leading axes (ambient components, gradient index, ...) are carried along.
Fourier coefficients are grid means, f_hat(xi) = V^-1 int f e^{-i xi.x} dx,
so a single mode sin(x) has coefficients of modulus 1/2.
"""

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np
import scipy.fft as sfft

from .errors import NegativeDelta, NonLatticeShift, OrderTooHigh


@dataclass(frozen=True)
class PeriodicGrid:
    dim: int
    points: int
    period: float = 2 * np.pi
    max_order: int = 8

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D tori are supported")
        if self.points < 8 or self.points % 2:
            raise ValueError("points per axis must be even and at least 8")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @property
    def shape(self):
        return (self.points,) * self.dim

    @property
    def axes(self):
        return tuple(range(-self.dim, 0))

    @property
    def dx(self):
        return self.period / self.points

    @property
    def volume(self):
        return self.period ** self.dim

    @property
    def cell_volume(self):
        return self.dx ** self.dim

    def refine(self, factor):
        m = int(round(self.points * factor))
        m += m % 2
        return PeriodicGrid(self.dim, m, self.period, self.max_order)

    @cached_property
    def coordinates(self):
        x = np.arange(self.points) * self.dx
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))

    @cached_property
    def wavenumbers(self):
        """One broadcastable wavenumber array per axis (Nyquist entry negative)."""
        k = np.fft.fftfreq(self.points, d=self.dx) * 2 * np.pi
        out = []
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.points
            out.append(k.reshape(shape))
        return out

    @cached_property
    def nyquist_mask(self):
        """Per-axis boolean arrays marking the Nyquist index."""
        idx = np.arange(self.points) == self.points // 2
        out = []
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.points
            out.append(idx.reshape(shape))
        return out

    def low_pass_mask(self, fraction):
        """1.0 on modes with every |k_i| <= fraction * M/2 (Nyquist excluded if fraction < 1)."""
        if not 0 < fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        if fraction == 1:
            return np.ones(self.shape)
        limit = fraction * self.points / 2 * (2 * np.pi / self.period)
        mask = np.ones(self.shape)
        for k in self.wavenumbers:
            mask = mask * (np.abs(k) <= limit + 1e-9)
        return mask

    def max_wavenumber(self, fraction=1.0):
        """Largest |xi| (Euclidean) carried by modes passing low_pass_mask(fraction)."""
        return float(np.sqrt(np.max(self.k2 * self.low_pass_mask(fraction))))

    @cached_property
    def k2(self):
        return sum(np.broadcast_to(k ** 2, self.shape) for k in self.wavenumbers)

    # -- transforms -------------------------------------------------------

    def fft(self, f):
        return sfft.fftn(f, axes=self.axes, norm="forward")

    def ifft(self, fh):
        return sfft.ifftn(fh, axes=self.axes, norm="forward").real

    def multiplier(self, alpha):
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.dim or min(alpha) < 0:
            raise ValueError(f"multi-index {alpha} does not match dim {self.dim}")
        if sum(alpha) > self.max_order:
            raise OrderTooHigh(f"|alpha| = {sum(alpha)} exceeds max order {self.max_order}")
        mult = np.ones(self.shape, dtype=complex)
        for axis, a in enumerate(alpha):
            if a == 0:
                continue
            factor = (1j * self.wavenumbers[axis]) ** a
            if a % 2:
                factor = np.where(self.nyquist_mask[axis], 0.0, factor)
            mult = mult * factor
        return mult

    # -- differential operators -------------------------------------------

    def derivative(self, f, alpha):
        if sum(alpha) == 0:
            return np.array(f, dtype=float, copy=True)
        return self.ifft(self.multiplier(alpha) * self.fft(f))

    def unit_index(self, axis, order=1):
        alpha = [0] * self.dim
        alpha[axis] = order
        return tuple(alpha)

    def gradient(self, f):
        fh = self.fft(f)
        return np.stack([self.ifft(self.multiplier(self.unit_index(a)) * fh) for a in range(self.dim)])

    def divergence(self, g):
        """Sum over the leading gradient index of d_alpha g[alpha]."""
        return sum(self.derivative(g[a], self.unit_index(a)) for a in range(self.dim))

    def laplacian(self, f):
        return self.ifft(-self.k2 * self.fft(f))

    def bilaplacian(self, f):
        return self.ifft(self.k2 ** 2 * self.fft(f))

    def multi_indices(self, order):
        """All ordered tuples of axes of the given length."""
        return list(product(range(self.dim), repeat=order))

    def axes_to_alpha(self, axes):
        alpha = [0] * self.dim
        for a in axes:
            alpha[a] += 1
        return tuple(alpha)

    # -- norms and integrals ----------------------------------------------

    def integrate(self, f):
        """Componentwise integral over the torus."""
        return np.sum(f, axis=self.axes) * self.cell_volume

    def inner_product(self, f, g):
        return float(np.sum(f * g) * self.cell_volume)

    def l2_norm(self, f):
        return np.sqrt(self.inner_product(f, f))

    def sobolev_norm(self, f, s):
        """(V sum (1 + |xi|^2)^s |f_hat|^2)^(1/2), summed over leading axes."""
        fh = self.fft(f)
        weight = (1.0 + self.k2) ** s
        return float(np.sqrt(self.volume * np.sum(weight * np.abs(fh) ** 2)))

    def seminorm(self, f, order):
        """||nabla^order f||_{L^2}, all ordered partial derivatives of that order."""
        fh = self.fft(f)
        return float(np.sqrt(self.volume * np.sum(self.k2 ** order * np.abs(fh) ** 2)))

    def gradient_sobolev_norm(self, f, s):
        """||nabla f||_{H^s}."""
        fh = self.fft(f)
        weight = (1.0 + self.k2) ** s * self.k2
        return float(np.sqrt(self.volume * np.sum(weight * np.abs(fh) ** 2)))

    def sup_norm(self, f):
        """Max over grid points of the Euclidean norm across all leading axes."""
        f = np.asarray(f, dtype=float)
        lead = f.ndim - self.dim
        if lead == 0:
            return float(np.max(np.abs(f)))
        pointwise = np.sqrt(np.sum(f ** 2, axis=tuple(range(lead))))
        return float(np.max(pointwise))

    # -- smoothing and shifts ---------------------------------------------

    def heat_mollify(self, f, delta):
        if delta < 0:
            raise NegativeDelta(f"delta must be non-negative, got {delta}")
        if delta == 0:
            return np.array(f, dtype=float, copy=True)
        return self.ifft(np.exp(-delta * self.k2) * self.fft(f))

    def difference_quotient(self, f, h, axis):
        shift = h / self.dx
        n = int(round(shift))
        if h == 0 or abs(shift - n) > 1e-9 * max(1.0, abs(shift)):
            raise NonLatticeShift(f"h = {h} is not a non-zero multiple of dx = {self.dx}")
        f = np.asarray(f, dtype=float)
        return (np.roll(f, -n, axis=f.ndim - self.dim + axis) - f) / h

    # -- resampling ---------------------------------------------------------

    def _band_blocks(self, m_to):
        """Slice pairs (src, dst) covering modes with |k| < min(M, M')/2."""
        m_from = self.points
        h = min(m_from, m_to) // 2
        per_axis = [(slice(0, h), slice(0, h)), (slice(m_from - h + 1, m_from), slice(m_to - h + 1, m_to))]
        return [tuple(zip(*combo)) for combo in product(per_axis, repeat=self.dim)]

    def resample_spectrum(self, fh, other):
        """Map mean-normalized coefficients onto another grid of the same torus.

        Modes with |k| < min(M, M')/2 are copied; Nyquist modes are dropped.
        """
        lead = fh.shape[:fh.ndim - self.dim]
        out = np.zeros(lead + other.shape, dtype=complex)
        pre = (Ellipsis,)
        for src, dst in self._band_blocks(other.points):
            out[pre + dst] = fh[pre + src]
        return out

    def resample(self, f, other):
        return other.ifft(self.resample_spectrum(self.fft(f), other))


def derivative(grid, f, alpha):
    return grid.derivative(f, alpha)


def laplacian(grid, f):
    return grid.laplacian(f)


def bilaplacian(grid, f):
    return grid.bilaplacian(f)


def sobolev_norm(grid, f, s):
    return grid.sobolev_norm(f, s)


def sup_norm(grid, f):
    return grid.sup_norm(f)


def heat_mollify(grid, f, delta):
    return grid.heat_mollify(f, delta)


def difference_quotient(grid, f, h, axis):
    return grid.difference_quotient(f, h, axis)
