"""Model ingredients: cut-off profiles, dispersion symbols, saturated potentials
and the conserved quantities of the saturated equations

    i u_t + P_h(D) u = eps * V(u) * u,

with ``V`` one of ``|u|^{2 sigma}``, ``(Pi_h |u|^2)^sigma`` or ``f_h(|u|^2)^sigma``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .grid import Field, SpectralGrid, multiply_spectral, spectral_density

PROFILES = ("smooth-compact", "gaussian", "sharp")
SCHEMES = ("none", "cutoff", "plateau", "rational-sat")
SYMBOLS = ("laplacian", "rational", "arctan")

GAUSSIAN_TAIL_RATE = 4.0


class GuardError(ValueError):
    """A resolution guard is violated for the grid in use."""


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    a = _bump(t)
    b = _bump(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


@dataclass(frozen=True)
class CutoffProfile:
    kind: str = "smooth-compact"

    def __post_init__(self):
        if self.kind not in PROFILES:
            raise ValueError(f"unknown cut-off profile {self.kind!r}; expected one of {PROFILES}")

    @property
    def smooth(self) -> bool:
        return self.kind != "sharp"

    def radial(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        if self.kind == "sharp":
            return (r <= 1.0).astype(float)
        if self.kind == "gaussian":
            return np.where(r <= 1.0, 1.0, np.exp(-GAUSSIAN_TAIL_RATE * (r - 1.0) ** 2))
        # g(2-r) / (g(2-r) + g(r-1)) equals 1 - smooth_step(r-1)
        return 1.0 - smooth_step(r - 1.0)


def chi_eval(profile: CutoffProfile, xi) -> np.ndarray | float:
    """chi at frequency vectors ``xi`` (last axis holds the components)."""
    xi = np.asarray(xi, dtype=float)
    r = np.abs(xi) if xi.ndim == 0 else np.linalg.norm(xi, axis=-1)
    out = profile.radial(r)
    return float(out) if np.ndim(out) == 0 else out


def cutoff_radius(h: float) -> float:
    return 2.0 / h


def check_cutoff_resolution(grid: SpectralGrid, h: float) -> None:
    limit = 2.0 / 3.0 * grid.xi_max
    if cutoff_radius(h) > limit:
        # smallest power-of-two n with 2/h <= (2/3) pi n / L
        need = 3.0 * grid.L / (np.pi * h)
        n_req = 1 << int(np.ceil(np.log2(need)))
        raise GuardError(
            f"cut-off radius 2/h = {cutoff_radius(h):.6g} exceeds (2/3)*xi_max = "
            f"{limit:.6g} on grid {grid.describe()}; use n >= {n_req}"
        )


@lru_cache(maxsize=64)
def _chi_on_grid(grid: SpectralGrid, h: float, kind: str) -> np.ndarray:
    return CutoffProfile(kind).radial(h * np.sqrt(grid.xi2))


@lru_cache(maxsize=64)
def _chi_on_rgrid(grid: SpectralGrid, h: float, kind: str) -> np.ndarray:
    # half-spectrum layout for rfftn on real inputs
    axes = [grid.xi] * (grid.d - 1) + [grid.xi[: grid.n // 2 + 1].copy()]
    axes[-1][-1] = abs(axes[-1][-1])
    mesh = np.meshgrid(*axes, indexing="ij")
    r = np.sqrt(sum(m**2 for m in mesh))
    return CutoffProfile(kind).radial(h * r)


def project_low(f: Field, h: float, profile: CutoffProfile = CutoffProfile()) -> Field:
    """Pi_h: the multiplier with symbol chi(h xi)."""
    if not 0 < h <= 1:
        raise ValueError(f"h must lie in (0, 1], got {h}")
    check_cutoff_resolution(f.grid, h)
    return Field(f.grid, multiply_spectral(f.values, _chi_on_grid(f.grid, h, profile.kind)))


def project_low_real(values: np.ndarray, grid: SpectralGrid, h: float, kind: str) -> np.ndarray:
    """Pi_h on a real array through the real transform, so the output is exactly real."""
    chi = _chi_on_rgrid(grid, h, kind)
    axes = tuple(range(grid.d))
    return np.fft.irfftn(chi * np.fft.rfftn(values, axes=axes), s=grid.shape, axes=axes)


@dataclass(frozen=True)
class DispersionSymbol:
    kind: str = "laplacian"
    h: float | None = None
    # claimed (alpha, beta); reported, never asserted
    claimed_orders: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in SYMBOLS:
            raise ValueError(f"unknown dispersion symbol {self.kind!r}; expected one of {SYMBOLS}")
        if self.kind != "laplacian":
            if self.h is None or not 0 < self.h <= 1:
                raise ValueError(f"{self.kind} dispersion needs h in (0, 1], got {self.h}")
            if self.claimed_orders is None:
                object.__setattr__(self, "claimed_orders", (1.0, 2.0))

    def of_xi2(self, xi2):
        xi2 = np.asarray(xi2, dtype=float)
        if self.kind == "laplacian":
            return -xi2
        if self.kind == "rational":
            return -xi2 / (1.0 + self.h * xi2)
        return -np.arctan(self.h * xi2) / self.h

    def on_grid(self, grid: SpectralGrid) -> np.ndarray:
        return self.of_xi2(grid.xi2)


def dispersion_eval(sym: DispersionSymbol, xi) -> np.ndarray | float:
    xi = np.asarray(xi, dtype=float)
    xi2 = xi**2 if xi.ndim == 0 else np.sum(xi**2, axis=-1)
    out = sym.of_xi2(xi2)
    return float(out) if np.ndim(out) == 0 else out


def plateau(s):
    """f(s) = s on [0,1], 2 on [2, inf), smooth and monotone between."""
    s = np.asarray(s, dtype=float)
    return s + (2.0 - s) * smooth_step(s - 1.0)


@dataclass(frozen=True)
class SaturationScheme:
    kind: str = "none"
    h: float | None = None
    profile: CutoffProfile = field(default_factory=CutoffProfile)

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown saturation scheme {self.kind!r}; expected one of {SCHEMES}")
        if self.kind != "none" and (self.h is None or not 0 < self.h <= 1):
            raise ValueError(f"scheme {self.kind!r} needs h in (0, 1], got {self.h}")

    def f_h(self, rho):
        """Pointwise saturation of the density (plateau / rational variants)."""
        rho = np.asarray(rho, dtype=float)
        if self.kind == "plateau":
            return plateau(self.h * rho) / self.h
        if self.kind == "rational-sat":
            return rho / (1.0 + self.h * rho)
        if self.kind == "none":
            return rho
        raise ValueError("f_h is defined for the physical saturations only")

    def check(self, grid: SpectralGrid) -> None:
        if self.kind == "cutoff":
            check_cutoff_resolution(grid, self.h)


@dataclass(frozen=True)
class ModelParams:
    sigma: int = 1
    epsilon: int = 1
    scheme: SaturationScheme = field(default_factory=SaturationScheme)
    dispersion: DispersionSymbol = field(default_factory=DispersionSymbol)

    def __post_init__(self):
        if int(self.sigma) != self.sigma or self.sigma < 1:
            raise ValueError(f"sigma must be an integer >= 1, got {self.sigma}")
        if self.epsilon not in (1, -1):
            raise ValueError(f"epsilon must be +1 or -1, got {self.epsilon}")

    def critical_index(self, d: int) -> float:
        return d / 2 - 1 / self.sigma

    def without_saturation(self) -> "ModelParams":
        return ModelParams(self.sigma, self.epsilon, SaturationScheme(), DispersionSymbol())


def potential_values(values: np.ndarray, grid: SpectralGrid, params: ModelParams) -> np.ndarray:
    rho = (values.real**2 + values.imag**2)
    sch = params.scheme
    if sch.kind == "none":
        base = rho
    elif sch.kind == "cutoff":
        base = project_low_real(rho, grid, sch.h, sch.profile.kind)
    else:
        base = sch.f_h(rho)
    return base if params.sigma == 1 else base**params.sigma


def nonlinear_potential(f: Field, params: ModelParams) -> Field:
    """Real potential V such that the right-hand side is eps * V * u."""
    params.scheme.check(f.grid)
    return Field(f.grid, potential_values(f.values, f.grid, params))


def mass(f: Field) -> float:
    return float(np.sum(np.abs(f.values) ** 2) * f.grid.cell)


def kinetic_energy(f: Field, sym: DispersionSymbol) -> float:
    """-<u, P(D) u> = sum_k (-P(xi_k)) |u_hat_k|^2 dxi^d  (>= 0)."""
    return float(np.sum(-sym.on_grid(f.grid) * spectral_density(f)))


def _require(params: ModelParams, kinds: tuple[str, ...], what: str) -> None:
    if params.scheme.kind not in kinds:
        raise ValueError(f"{what} needs scheme in {kinds}, got {params.scheme.kind!r}")


def cutoff_interaction(f: Field, params: ModelParams) -> float:
    """double integral of K_h(x-y) |u(y)|^2 |u(x)|^2, as sum chi(h xi)|rho_hat|^2 dxi^d."""
    g = f.grid
    rho = np.abs(f.values) ** 2
    dens = np.abs(np.fft.fftn(rho)) ** 2 * (g.cell / g.n**g.d)
    chi = _chi_on_grid(g, params.scheme.h, params.scheme.profile.kind)
    return float(np.sum(chi * dens))


def energy_cubic_cutoff(f: Field, params: ModelParams) -> float:
    """Conserved energy of the cubic frequency-cut-off model."""
    if params.sigma != 1:
        raise ValueError("the cut-off model is Hamiltonian only for sigma = 1")
    _require(params, ("cutoff",), "energy_cubic_cutoff")
    return kinetic_energy(f, params.dispersion) + 0.5 * params.epsilon * cutoff_interaction(f, params)


# Gauss-Legendre nodes for the piecewise antiderivative of f_h^sigma
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_TRANSITION_PIECES = 64


def _integrate_pieces(func, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    return half * (func(nodes) @ _GL_W)


def saturated_antiderivative(rho, scheme: SaturationScheme, sigma: int) -> np.ndarray:
    """F_h(rho) = int_0^rho f_h(y)^sigma dy, elementwise."""
    rho = np.asarray(rho, dtype=float)
    h = scheme.h
    if scheme.kind == "rational-sat" and sigma == 1:
        return (rho - np.log1p(h * rho) / h) / h
    if scheme.kind == "none":
        return rho ** (sigma + 1) / (sigma + 1)
    if scheme.kind not in ("plateau", "rational-sat"):
        raise ValueError("F_h is defined for the physical saturations only")

    def integrand(y):
        return scheme.f_h(y) ** sigma

    flat = rho.ravel()
    # Composite Gauss-Legendre on sorted sample values plus the kinks of f_h;
    # cumulative sums then give F_h at every sample.
    breaks = [flat, np.array([0.0])]
    top = flat.max(initial=0.0)
    if scheme.kind == "plateau":
        breaks.append(np.linspace(1.0 / h, 2.0 / h, _TRANSITION_PIECES + 1))
    else:
        breaks.append(np.geomspace(1e-3 / h, max(top, 1e-3 / h), 64))
    knots = np.unique(np.concatenate(breaks))
    knots = knots[knots <= top] if top > 0 else np.array([0.0])
    if knots.size < 2:
        return np.zeros_like(rho)
    cum = np.concatenate([[0.0], np.cumsum(_integrate_pieces(integrand, knots[:-1], knots[1:]))])
    idx = np.searchsorted(knots, flat)
    return cum[idx].reshape(rho.shape)


def energy_saturated(f: Field, params: ModelParams) -> float:
    """Conserved energy of the physically saturated model."""
    _require(params, ("plateau", "rational-sat"), "energy_saturated")
    return kinetic_energy(f, params.dispersion) + params.epsilon * saturated_potential_term(f, params)


def saturated_potential_term(f: Field, params: ModelParams) -> float:
    rho = np.abs(f.values) ** 2
    return float(np.sum(saturated_antiderivative(rho, params.scheme, params.sigma)) * f.grid.cell)


def energy_nls(f: Field, params: ModelParams) -> float:
    """Energy of the unsaturated power nonlinearity (any sigma)."""
    s = params.sigma
    pot = np.sum(np.abs(f.values) ** (2 * s + 2)) * f.grid.cell / (s + 1)
    return kinetic_energy(f, params.dispersion) + params.epsilon * float(pot)


def model_energy(f: Field, params: ModelParams) -> float:
    """Conserved energy for whichever model ``params`` describe (NaN if none).

    The frequency cut-off model with sigma >= 2 has no known conserved
    energy and reports NaN.
    """
    kind = params.scheme.kind
    if kind == "none":
        return energy_nls(f, params)
    if kind == "cutoff":
        return energy_cubic_cutoff(f, params) if params.sigma == 1 else float("nan")
    return energy_saturated(f, params)
