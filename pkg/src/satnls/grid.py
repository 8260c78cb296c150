"""Periodic grids, the scaled discrete Fourier transform and spectral norms.

The box is ``[-L/2, L/2)^d`` with ``n`` points per axis.  The transform is
scaled so that it approximates the continuum transform

    u_hat(xi) = (2 pi)^{-d/2} \\int e^{-i x.xi} u(x) dx

and the discrete Parseval identity

    sum_x |u(x)|^2 dx^d == sum_k |u_hat(xi_k)|^2 dxi^d

holds up to roundoff.  Spectral arrays are kept in FFT-standard order
(``numpy.fft.fftfreq`` layout); ``SpectralGrid.logical_order`` gives the
permutation to the ``[-n/2, n/2)`` presentation.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

MAX_POINTS = 2**24


@dataclass(frozen=True)
class SpectralGrid:
    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension d must be 1, 2 or 3, got {self.d}")
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 4, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"box length L must be positive, got {self.L}")
        if self.n**self.d > MAX_POINTS:
            raise ValueError(
                f"grid has {self.n**self.d} points, above the cap of {MAX_POINTS}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def dxi(self) -> float:
        return 2 * np.pi / self.L

    @property
    def xi_max(self) -> float:
        """Nyquist frequency pi n / L."""
        return np.pi * self.n / self.L

    @property
    def cell(self) -> float:
        """Physical volume element dx^d."""
        return self.dx**self.d

    @property
    def dual_cell(self) -> float:
        return self.dxi**self.d

    @cached_property
    def x(self) -> np.ndarray:
        """1-D node coordinates, shared by every axis."""
        return -self.L / 2 + self.dx * np.arange(self.n)

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer mode numbers per axis in FFT order."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(int)

    @cached_property
    def xi(self) -> np.ndarray:
        """1-D frequency lattice in FFT order."""
        return self.dxi * self.modes

    @cached_property
    def logical_order(self) -> np.ndarray:
        """Index permutation taking FFT order to increasing frequency."""
        return np.argsort(self.modes, kind="stable")

    def lattice(self) -> np.ndarray:
        """Per-axis frequencies listed in logical order [-n/2, n/2)."""
        return self.xi[self.logical_order]

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x] * self.d), indexing="ij"))

    @cached_property
    def freqs(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.xi] * self.d), indexing="ij"))

    @cached_property
    def xi2(self) -> np.ndarray:
        """|xi|^2 on the full lattice (FFT order)."""
        out = np.zeros(self.shape)
        for k in self.freqs:
            out = out + k**2
        return out

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| on the physical grid."""
        out = np.zeros(self.shape)
        for c in self.coords:
            out = out + c**2
        return np.sqrt(out)

    @cached_property
    def _phase(self) -> np.ndarray:
        # e^{i xi_k L/2} = (-1)^k per axis, from the box offset x_0 = -L/2
        sign = np.where(self.modes % 2 == 0, 1.0, -1.0)
        out = np.ones(self.shape)
        for axis in range(self.d):
            sh = [1] * self.d
            sh[axis] = self.n
            out = out * sign.reshape(sh)
        return out

    @property
    def forward_scale(self) -> float:
        return self.cell / (2 * np.pi) ** (self.d / 2)

    @property
    def inverse_scale(self) -> float:
        return self.dual_cell * self.n**self.d / (2 * np.pi) ** (self.d / 2)

    def describe(self) -> str:
        return f"d={self.d},n={self.n},L={self.L!r}"


def make_grid(d: int, n: int, L: float) -> SpectralGrid:
    return SpectralGrid(int(d), int(n), float(L))


@dataclass(frozen=True)
class Field:
    """Complex samples of a function on ``grid`` (row-major, shape ``grid.shape``)."""

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.size != self.grid.n**self.grid.d:
            raise ValueError(
                f"field has {values.size} values, grid {self.grid.describe()} "
                f"needs {self.grid.n**self.grid.d}"
            )
        object.__setattr__(self, "values", values.reshape(self.grid.shape))

    def spectral(self) -> np.ndarray:
        return forward_transform(self)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar) -> "Field":
        return Field(self.grid, self.values * scalar)

    __rmul__ = __mul__


def forward_transform(f: Field) -> np.ndarray:
    g = f.grid
    return g.forward_scale * g._phase * np.fft.fftn(f.values)


def inverse_transform(coeffs: np.ndarray, grid: SpectralGrid) -> Field:
    coeffs = np.asarray(coeffs)
    if coeffs.shape != grid.shape:
        if coeffs.size != grid.n**grid.d:
            raise ValueError(
                f"coefficient array of size {coeffs.size} does not match grid "
                f"{grid.describe()}"
            )
        coeffs = coeffs.reshape(grid.shape)
    return Field(grid, grid.inverse_scale * np.fft.ifftn(grid._phase * coeffs))


def symbol_values(grid: SpectralGrid, m) -> np.ndarray:
    """Evaluate a symbol on the lattice.

    ``m`` is either an array already laid out like the lattice or a
    callable taking the tuple of frequency component arrays.
    """
    if callable(m):
        vals = m(*grid.freqs)
        return np.broadcast_to(np.asarray(vals), grid.shape)
    vals = np.asarray(m)
    if vals.shape != grid.shape:
        raise ValueError(f"symbol array shape {vals.shape} != grid shape {grid.shape}")
    return vals


def multiply_spectral(values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """Raw-array multiplier application; the transform scaling cancels."""
    return np.fft.ifftn(symbol * np.fft.fftn(values))


def apply_multiplier(f: Field, m: Callable | np.ndarray) -> Field:
    return Field(f.grid, multiply_spectral(f.values, symbol_values(f.grid, m)))


def spectral_density(f: Field) -> np.ndarray:
    """|u_hat(xi_k)|^2 dxi^d for every lattice point (FFT order)."""
    g = f.grid
    return np.abs(np.fft.fftn(f.values)) ** 2 * (g.cell / g.n**g.d)


def sobolev_norm(f: Field, s: float, homogeneous: bool = False) -> float:
    """H^s norm with weight <xi> = (1+|xi|^2)^{1/2}, or |xi| if homogeneous."""
    g = f.grid
    dens = spectral_density(f)
    if homogeneous:
        if s < 0:
            raise ValueError("homogeneous Sobolev norm needs s >= 0 on the torus")
        if s == 0:
            weight = np.ones(g.shape)
        else:
            weight = g.xi2**s
    else:
        weight = (1.0 + g.xi2) ** s
    return float(np.sqrt(np.sum(weight * dens)))


def lp_norm(f: Field, p: float) -> float:
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    a = np.abs(f.values)
    if np.isinf(p):
        return float(a.max())
    return float((np.sum(a**p) * f.grid.cell) ** (1.0 / p))


def inner(f: Field, g: Field) -> complex:
    """L^2 inner product, conjugate-linear in the first slot."""
    return complex(np.vdot(f.values, g.values) * f.grid.cell)
