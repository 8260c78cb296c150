"""Split-step time integration of i u_t + P_h(D) u = eps V(u) u.

Both substeps are solved exactly: the dispersive one is a unimodular
Fourier multiplier and the potential one is a pointwise phase rotation,
because V is real and depends on |u| only.  The discrete L^2 norm is
therefore conserved up to roundoff for every model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .grid import Field, SpectralGrid, sobolev_norm, spectral_density
from .operators import ModelParams, mass, model_energy, potential_values

log = logging.getLogger(__name__)

BOUNDARY_LEAK_START = 1e-8
BOUNDARY_LEAK_ABORT = 1e-6
BLOWUP_FACTOR = 1e3
# a collapsing solution outruns any fixed lattice before its H1 norm can grow 1e3-fold
RESOLUTION_BAND = 2.0 / 3.0
RESOLUTION_ABORT = 1e-6
RESOLUTION_GROWTH = 1e3
DATUM_KINDS = ("gaussian", "sech", "concentrated", "prescribed-regularity", "plane-wave", "from-file")
# data that are periodic by construction; the torus-vs-R^d leak check is meaningless for them
PERIODIC_DATA = ("prescribed-regularity", "plane-wave")


class SimulationAborted(RuntimeError):
    """Raised when a run is stopped by a guard; carries the partial diagnostics."""

    def __init__(self, reason: str, step: int, t: float, series: "DiagnosticsSeries | None" = None):
        super().__init__(f"{reason} (step {step}, t={t:.6g})")
        self.reason = reason
        self.step = step
        self.t = t
        self.series = series


@dataclass(frozen=True)
class InitialDatum:
    kind: str = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    center: tuple[float, ...] = ()
    wave_vector: tuple[float, ...] = ()
    h_c: float = 0.1
    s: float = 1.0
    seed: int = 0
    delta: float = 0.1
    mode: tuple[int, ...] = ()
    path: str = ""

    def __post_init__(self):
        if self.kind not in DATUM_KINDS:
            raise ValueError(f"unknown datum kind {self.kind!r}; expected one of {DATUM_KINDS}")

    def _vec(self, v, d):
        return np.zeros(d) if len(v) == 0 else np.broadcast_to(np.asarray(v, float), (d,))

    def realize(self, grid: SpectralGrid) -> Field:
        d = grid.d
        if self.kind in ("gaussian", "sech", "concentrated"):
            c = self._vec(self.center, d)
            k = self._vec(self.wave_vector, d)
            shifted = [x - ci for x, ci in zip(grid.coords, c)]
            r2 = sum(x**2 for x in shifted)
            wave = np.exp(1j * sum(ki * x for ki, x in zip(k, shifted)))
            if self.kind == "gaussian":
                return Field(grid, self.amplitude * np.exp(-r2 / (2 * self.width**2)) * wave)
            if self.kind == "sech":
                return Field(grid, self.amplitude / np.cosh(np.sqrt(r2) / self.width) * wave)
            # h^{s-d/2} a(x/h) with a the unit Gaussian profile
            hc = self.h_c
            return Field(grid, self.amplitude * hc ** (self.s - d / 2) * np.exp(-r2 / (2 * hc**2)) * wave)
        if self.kind == "prescribed-regularity":
            from .experiments import generate_prescribed_regularity

            return generate_prescribed_regularity(grid, self.s, self.seed, self.delta)
        if self.kind == "plane-wave":
            m = self._vec(self.mode, d)
            phase = sum(grid.dxi * mi * x for mi, x in zip(m, grid.coords))
            return Field(grid, self.amplitude * np.exp(1j * phase))
        from .io import read_snapshot

        snap_grid, _, values = read_snapshot(self.path)
        if snap_grid != grid:
            raise ValueError(
                f"snapshot {self.path} is on grid {snap_grid.describe()}, config asks {grid.describe()}"
            )
        return Field(grid, values)


@dataclass(frozen=True)
class SimulationConfig:
    grid: SpectralGrid
    params: ModelParams
    dt: float
    T: float
    datum: InitialDatum = field(default_factory=InitialDatum)
    diagnostics_every: int = 1
    splitting: str = "strang"
    norms: tuple[float, ...] = ()
    boundary_guard: bool | None = None  # None: decided by the datum kind
    blowup_factor: float = BLOWUP_FACTOR

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T >= 0:
            raise ValueError(f"T must be non-negative, got {self.T}")
        if abs(self.T / self.dt - round(self.T / self.dt)) > 1e-9 * max(1.0, self.T / self.dt):
            raise ValueError(f"T/dt = {self.T / self.dt!r} is not an integer step count")
        if self.diagnostics_every < 1:
            raise ValueError("diagnostics_every must be >= 1")
        if self.splitting not in ("strang", "lie"):
            raise ValueError(f"splitting must be 'strang' or 'lie', got {self.splitting!r}")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def guards_boundary(self) -> bool:
        if self.boundary_guard is None:
            return self.datum.kind not in PERIODIC_DATA
        return self.boundary_guard

    def with_(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)


@dataclass
class DiagnosticsSeries:
    norms: tuple[float, ...] = ()
    times: list[float] = field(default_factory=list)
    mass: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    h1_norm: list[float] = field(default_factory=list)
    hs: dict[float, list[float]] = field(default_factory=dict)
    boundary_leak: list[float] = field(default_factory=list)
    high_band: list[float] = field(default_factory=list)
    error: list[float] = field(default_factory=list)

    def __post_init__(self):
        for s in self.norms:
            self.hs.setdefault(s, [])

    def __len__(self):
        return len(self.times)

    def record(self, t: float, f: Field, params: ModelParams) -> None:
        self.times.append(float(t))
        self.mass.append(mass(f))
        self.energy.append(model_energy(f, params))
        self.h1_norm.append(sobolev_norm(f, 1.0))
        for s in self.norms:
            self.hs[s].append(sobolev_norm(f, s))
        self.boundary_leak.append(boundary_leak(f))
        self.high_band.append(high_band_fraction(f))

    def mass_drift(self) -> float:
        if not self.mass:
            return 0.0
        m0 = self.mass[0]
        return max(abs(m / m0 - 1.0) for m in self.mass) if m0 else 0.0

    def energy_drift(self) -> float:
        e = np.asarray(self.energy)
        return float(np.max(np.abs(e - e[0]))) if e.size else 0.0


def boundary_leak(f: Field) -> float:
    """Fraction of mass within L/8 of the box boundary (sup-norm distance)."""
    g = f.grid
    edge = g.L / 2 - g.L / 8
    near = np.zeros(g.shape, dtype=bool)
    for c in g.coords:
        near |= np.abs(c) >= edge
    dens = np.abs(f.values) ** 2
    total = dens.sum()
    return float(dens[near].sum() / total) if total > 0 else 0.0


def high_band_fraction(f: Field) -> float:
    """Fraction of mass in modes with |xi| > (2/3) xi_max."""
    g = f.grid
    dens = spectral_density(f)
    total = dens.sum()
    if total == 0:
        return 0.0
    return float(dens[np.sqrt(g.xi2) > RESOLUTION_BAND * g.xi_max].sum() / total)


def _propagator(grid: SpectralGrid, params: ModelParams, tau: float) -> np.ndarray:
    return np.exp(1j * tau * params.dispersion.on_grid(grid))


def dispersion_step(f: Field, sym, tau: float) -> Field:
    """Exact flow of i u_t + P(D) u = 0 over time ``tau``."""
    prop = np.exp(1j * tau * sym.on_grid(f.grid))
    return Field(f.grid, np.fft.ifftn(prop * np.fft.fftn(f.values)))


def nonlinear_step(f: Field, params: ModelParams, tau: float) -> Field:
    """Exact flow of i u_t = eps V(u) u; |u| is unchanged pointwise."""
    V = potential_values(f.values, f.grid, params)
    return Field(f.grid, f.values * np.exp(-1j * params.epsilon * tau * V))


def strang_step(f: Field, config: SimulationConfig, dt: float | None = None) -> Field:
    dt = config.dt if dt is None else dt
    p = config.params
    if config.splitting == "lie":
        return dispersion_step(nonlinear_step(f, p, dt), p.dispersion, dt)
    g = nonlinear_step(f, p, dt / 2)
    g = dispersion_step(g, p.dispersion, dt)
    return nonlinear_step(g, p, dt / 2)


def _check_start(config: SimulationConfig, u0: Field) -> None:
    config.params.scheme.check(config.grid)
    if config.guards_boundary:
        leak = boundary_leak(u0)
        if leak > BOUNDARY_LEAK_START:
            raise SimulationAborted(
                f"initial boundary leak {leak:.3g} exceeds {BOUNDARY_LEAK_START:g}; enlarge L", 0, 0.0
            )


def _march(u: np.ndarray, config: SimulationConfig, steps: int, on_row=None) -> np.ndarray:
    """Advance raw values ``steps`` times; ``on_row(step, values)`` at the cadence."""
    grid, p, dt = config.grid, config.params, config.dt
    eps = p.epsilon
    full = _propagator(grid, p, dt)
    every = config.diagnostics_every
    if config.splitting == "lie":
        for k in range(1, steps + 1):
            u = u * np.exp(-1j * eps * dt * potential_values(u, grid, p))
            u = np.fft.ifftn(full * np.fft.fftn(u))
            if on_row is not None and (k % every == 0 or k == steps):
                on_row(k, u)
        return u
    # V after the dispersive substep is reused by the next step's first half,
    # since the potential substep leaves |u| unchanged.
    V = potential_values(u, grid, p)
    for k in range(1, steps + 1):
        u = u * np.exp(-0.5j * eps * dt * V)
        u = np.fft.ifftn(full * np.fft.fftn(u))
        V = potential_values(u, grid, p)
        u = u * np.exp(-0.5j * eps * dt * V)
        if on_row is not None and (k % every == 0 or k == steps):
            on_row(k, u)
    return u


def evolve(config: SimulationConfig, u0: Field | None = None,
           reference: dict[int, np.ndarray] | None = None) -> tuple[Field, DiagnosticsSeries]:
    """Run ``config`` from its datum (or ``u0``) up to ``config.T``.

    Raises ``SimulationAborted`` when the boundary-leak or blow-up guard
    fires, with the diagnostics gathered so far attached.  The blow-up
    detector trips on non-finite values, on H1 growth beyond
    ``config.blowup_factor``, or when the spectrum reaches the outer third
    of the lattice (mass fraction above 1e-6, or 1e3 times its initial value).
    ``reference`` maps step numbers to fields to compare against; the L^2
    distance is then stored in ``series.error``.
    """
    grid = config.grid
    u0 = config.datum.realize(grid) if u0 is None else u0
    _check_start(config, u0)
    series = DiagnosticsSeries(norms=tuple(config.norms))
    series.record(0.0, u0, config.params)
    if reference is not None and 0 in reference:
        series.error.append(float(np.sqrt(np.sum(np.abs(u0.values - reference[0]) ** 2) * grid.cell)))
    h1_0 = series.h1_norm[0]
    band_limit = max(RESOLUTION_ABORT, RESOLUTION_GROWTH * series.high_band[0])

    def on_row(k, u):
        t = k * config.dt
        f = Field(grid, u)
        if not np.all(np.isfinite(u)):
            raise SimulationAborted("non-finite values", k, t, series)
        series.record(t, f, config.params)
        if reference is not None and k in reference:
            series.error.append(float(np.sqrt(np.sum(np.abs(u - reference[k]) ** 2) * grid.cell)))
        if not np.isfinite(series.h1_norm[-1]) or series.h1_norm[-1] > config.blowup_factor * h1_0:
            raise SimulationAborted(
                f"blow-up detector: H1 norm {series.h1_norm[-1]:.4g} > "
                f"{config.blowup_factor:g} x initial {h1_0:.4g}", k, t, series)
        if series.high_band[-1] > band_limit:
            raise SimulationAborted(
                f"blow-up detector: lost resolution, high-band mass fraction "
                f"{series.high_band[-1]:.3g} > {band_limit:.3g} (H1 growth "
                f"{series.h1_norm[-1] / h1_0:.3g}x)", k, t, series)
        if config.guards_boundary and series.boundary_leak[-1] > BOUNDARY_LEAK_ABORT:
            raise SimulationAborted(
                f"boundary leak {series.boundary_leak[-1]:.3g} exceeds {BOUNDARY_LEAK_ABORT:g}", k, t, series)

    u = _march(u0.values.astype(complex), config, config.steps, on_row)
    return Field(grid, u), series


def trajectory(config: SimulationConfig, sample_steps, u0: Field | None = None) -> dict[int, np.ndarray]:
    """Fields at the requested step numbers (no diagnostics, no guards after t=0)."""
    u0 = config.datum.realize(config.grid) if u0 is None else u0
    _check_start(config, u0)
    wanted = sorted({int(k) for k in sample_steps})
    out: dict[int, np.ndarray] = {}
    if 0 in wanted:
        out[0] = u0.values.astype(complex)
    u = u0.values.astype(complex)
    done = 0
    for k in wanted:
        if k == 0:
            continue
        u = _march(u, config.with_(diagnostics_every=max(1, k - done)), k - done)
        if not np.all(np.isfinite(u)):
            raise SimulationAborted("non-finite values", k, k * config.dt)
        out[k] = u.copy()
        done = k
    return out


REFERENCE_REFINEMENT = 8


def reference_config(config: SimulationConfig, refinement: int = REFERENCE_REFINEMENT) -> SimulationConfig:
    return config.with_(
        params=config.params.without_saturation(),
        dt=config.dt / refinement,
        diagnostics_every=config.diagnostics_every * refinement,
    )


def reference_solution(config: SimulationConfig, refinement: int = REFERENCE_REFINEMENT,
                       sample_steps=None) -> Field | dict[int, np.ndarray]:
    """Unsaturated solution on the same grid with dt / refinement.

    Without ``sample_steps`` the field at T is returned.  Otherwise the
    fields at the given coarse step numbers are returned, keyed by those
    numbers, so they line up with a run of ``config``.
    """
    ref = reference_config(config, refinement)
    if sample_steps is None:
        return evolve(ref)[0]
    fine = trajectory(ref, [refinement * k for k in sample_steps])
    return {k // refinement: v for k, v in fine.items()}


def load_field(path: str | Path, grid: SpectralGrid) -> Field:
    return InitialDatum(kind="from-file", path=str(path)).realize(grid)
