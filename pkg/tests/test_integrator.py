import numpy as np
import pytest

from satnls.grid import Field, forward_transform, make_grid
from satnls.integrator import (
    DiagnosticsSeries,
    InitialDatum,
    SimulationAborted,
    SimulationConfig,
    boundary_leak,
    dispersion_step,
    evolve,
    high_band_fraction,
    load_field,
    nonlinear_step,
    reference_solution,
    strang_step,
    trajectory,
)
from satnls.io import write_snapshot
from satnls.operators import (
    DispersionSymbol,
    GuardError,
    ModelParams,
    SaturationScheme,
    potential_values,
)

SCHEMES = [
    SaturationScheme(),
    SaturationScheme("cutoff", 0.25),
    SaturationScheme("plateau", 0.5),
    SaturationScheme("rational-sat", 0.5),
]
SYMBOLS = [DispersionSymbol(), DispersionSymbol("rational", 0.25), DispersionSymbol("arctan", 0.25)]


@pytest.fixture
def grid():
    return make_grid(1, 512, 40.0)


def gaussian_config(grid, params=ModelParams(), dt=0.01, T=1.0, **kw):
    return SimulationConfig(grid, params, dt, T, InitialDatum("gaussian"), **kw)


# ---------------------------------------------------------------- substeps


def test_dispersion_step_zero_and_plane_wave(grid):
    sym = DispersionSymbol("rational", 0.3)
    rng = np.random.default_rng(0)
    f = Field(grid, rng.normal(size=grid.shape) + 0j)
    np.testing.assert_allclose(dispersion_step(f, sym, 0.0).values, f.values, atol=1e-14)
    xi = 3 * grid.dxi
    A = 0.8 - 0.3j
    w = Field(grid, A * np.exp(1j * xi * grid.x))
    expected = w.values * np.exp(1j * 0.7 * (-xi**2 / (1 + 0.3 * xi**2)))
    np.testing.assert_allclose(dispersion_step(w, sym, 0.7).values, expected, atol=1e-12)
    back = dispersion_step(dispersion_step(f, sym, 0.37), sym, -0.37)
    np.testing.assert_allclose(back.values, f.values, atol=1e-12)


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.kind)
def test_nonlinear_step_keeps_modulus(grid, scheme):
    rng = np.random.default_rng(1)
    f = Field(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))
    out = nonlinear_step(f, ModelParams(2, -1, scheme), 0.3)
    np.testing.assert_allclose(np.abs(out.values), np.abs(f.values), rtol=1e-13)
    z = Field(grid, np.zeros(grid.shape, complex))
    assert np.all(nonlinear_step(z, ModelParams(1, 1, scheme), 0.3).values == 0)


@pytest.mark.parametrize("eps", [1, -1])
def test_nonlinear_step_constant_closed_form(grid, eps):
    c = 1.1 * np.exp(0.2j)
    f = Field(grid, np.full(grid.shape, c))
    out = nonlinear_step(f, ModelParams(1, eps), 0.25)
    np.testing.assert_allclose(out.values, c * np.exp(-1j * eps * 0.25 * abs(c) ** 2), atol=1e-14)


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.kind)
@pytest.mark.parametrize("sym", SYMBOLS, ids=lambda s: s.kind)
def test_strang_plane_wave_exact(scheme, sym):
    g = make_grid(1, 64, 2 * np.pi)
    A, j, dt = 1.3, 4, 0.05
    xi = j * g.dxi
    params = ModelParams(2, -1, scheme, sym)
    cfg = SimulationConfig(g, params, dt, 1.0, InitialDatum("plane-wave", amplitude=A, mode=(j,)))
    u0 = cfg.datum.realize(g)
    V_A = potential_values(u0.values, g, params)[0]
    exact = u0.values * np.exp(1j * dt * sym.of_xi2(xi**2)) * np.exp(1j * dt * V_A)
    np.testing.assert_allclose(strang_step(u0, cfg).values, exact, atol=1e-12)


@pytest.mark.parametrize("splitting", ["strang", "lie"])
def test_step_reversibility(grid, splitting):
    params = ModelParams(1, 1, SaturationScheme("cutoff", 0.25), DispersionSymbol("arctan", 0.25))
    cfg = gaussian_config(grid, params, splitting=splitting)
    u0 = cfg.datum.realize(grid)
    one = strang_step(strang_step(u0, cfg), cfg, -cfg.dt)
    if splitting == "lie":
        # the lie composition is undone by the reversed order
        one = strang_step(u0, cfg)
        one = nonlinear_step(dispersion_step(one, params.dispersion, -cfg.dt), params, -cfg.dt)
    np.testing.assert_allclose(one.values, u0.values, atol=1e-11)


def test_flow_reversibility_many_steps(grid):
    params = ModelParams(1, -1, SaturationScheme("rational-sat", 0.5))
    cfg = gaussian_config(grid, params, dt=0.01)
    u = cfg.datum.realize(grid)
    u0 = u
    for _ in range(200):
        u = strang_step(u, cfg)
    for _ in range(200):
        u = strang_step(u, cfg, -cfg.dt)
    assert np.max(np.abs(u.values - u0.values)) < 1e-9


# ---------------------------------------------------------------- evolution


def test_t_zero_single_row(grid):
    cfg = gaussian_config(grid, T=0.0)
    u, series = evolve(cfg)
    assert len(series) == 1
    np.testing.assert_array_equal(u.values, cfg.datum.realize(grid).values)


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.kind)
@pytest.mark.parametrize("sym", SYMBOLS, ids=lambda s: s.kind)
def test_mass_conserved(scheme, sym):
    g = make_grid(1, 512, 64.0)
    cfg = SimulationConfig(g, ModelParams(1, 1, scheme, sym), 0.002, 2.0,
                           InitialDatum("gaussian", amplitude=1.2), diagnostics_every=100)
    _, series = evolve(cfg)
    assert series.mass_drift() <= 1e-11


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.kind)
def test_plane_wave_hundred_steps(scheme):
    g = make_grid(1, 64, 2 * np.pi)
    A, j, dt = 0.9, 3, 0.01
    params = ModelParams(1, 1, scheme, DispersionSymbol("rational", 0.5))
    cfg = SimulationConfig(g, params, dt, 100 * dt, InitialDatum("plane-wave", amplitude=A, mode=(j,)))
    u, _ = evolve(cfg)
    u0 = cfg.datum.realize(g)
    V_A = potential_values(u0.values, g, params)[0]
    P = params.dispersion.of_xi2((j * g.dxi) ** 2)
    exact = u0.values * np.exp(1j * cfg.T * (P - V_A))
    assert np.max(np.abs(u.values - exact)) < 1e-10


@pytest.mark.parametrize("scheme", SCHEMES[1:], ids=lambda s: s.kind)
def test_gauge_invariance(grid, scheme):
    cfg = gaussian_config(grid, ModelParams(1, -1, scheme), T=0.5)
    u0 = cfg.datum.realize(grid)
    theta = np.exp(1.1j)
    a, _ = evolve(cfg, u0)
    b, _ = evolve(cfg, Field(grid, theta * u0.values))
    np.testing.assert_allclose(b.values, theta * a.values, atol=1e-13)


def test_cutoff_potential_band_limited_along_run(grid):
    h = 0.5
    params = ModelParams(1, 1, SaturationScheme("cutoff", h))
    cfg = gaussian_config(grid, params, T=0.5, diagnostics_every=10)
    traj = trajectory(cfg, range(0, 51, 10))
    outside = np.sqrt(grid.xi2) > 2 / h
    for u in traj.values():
        V = Field(grid, potential_values(u, grid, params))
        spec = np.abs(forward_transform(V)) ** 2
        assert spec[outside].sum() <= 1e-12 * spec.sum()


def test_diagnostics_cadence_and_norms(grid):
    cfg = gaussian_config(grid, T=0.1, diagnostics_every=3, norms=(0.5, 2.0))
    _, series = evolve(cfg)
    np.testing.assert_allclose(series.times, [0, 0.03, 0.06, 0.09, 0.1], atol=1e-12)
    assert set(series.hs) == {0.5, 2.0}
    assert all(len(v) == len(series) for v in series.hs.values())
    assert series.hs[2.0][0] > series.h1_norm[0] > series.hs[0.5][0]


def test_reference_solution_nested_refinement(grid):
    params = ModelParams(1, 1, SaturationScheme("cutoff", 0.25))
    # the dt/8 vs dt/16 gap is (3/4) C (dt/8)^2; dt = 0.002 brings it under 1e-8
    cfg = gaussian_config(grid, params, dt=0.002, T=1.0)
    r8 = reference_solution(cfg)
    r16 = reference_solution(cfg, refinement=16)
    diff = np.sqrt(np.sum(np.abs(r8.values - r16.values) ** 2) * grid.cell)
    assert diff <= 1e-8
    plain, _ = evolve(cfg.with_(params=ModelParams(), dt=cfg.dt / 8))
    np.testing.assert_array_equal(plain.values, r8.values)


def test_reference_solution_snapshots_line_up(grid):
    cfg = gaussian_config(grid, T=0.2, dt=0.02)
    snaps = reference_solution(cfg, sample_steps=[0, 5, 10])
    assert sorted(snaps) == [0, 5, 10]
    final = reference_solution(cfg)
    np.testing.assert_allclose(snaps[10], final.values, atol=1e-13)


# ---------------------------------------------------------------- guards


def test_start_guard_boundary(grid):
    cfg = SimulationConfig(grid, ModelParams(), 0.01, 0.1, InitialDatum("gaussian", width=6.0))
    with pytest.raises(SimulationAborted, match="initial boundary leak"):
        evolve(cfg)


def test_start_guard_resolution():
    g = make_grid(1, 64, 2 * np.pi)
    cfg = SimulationConfig(g, ModelParams(1, 1, SaturationScheme("cutoff", 0.01)), 0.01, 0.1,
                           InitialDatum("plane-wave", mode=(1,)))
    with pytest.raises(GuardError):
        evolve(cfg)


def test_boundary_leak_abort_midrun():
    g = make_grid(1, 512, 20.0)
    # a fast wave packet reaches the edge of the box
    cfg = SimulationConfig(g, ModelParams(), 0.01, 2.0, InitialDatum("gaussian", wave_vector=(5.0,)))
    with pytest.raises(SimulationAborted, match="boundary leak") as info:
        evolve(cfg)
    assert info.value.series is not None and info.value.step > 0


def test_boundary_guard_auto_for_periodic_data(grid):
    assert not SimulationConfig(grid, ModelParams(), 0.1, 1.0, InitialDatum("plane-wave")).guards_boundary
    assert SimulationConfig(grid, ModelParams(), 0.1, 1.0, InitialDatum("gaussian")).guards_boundary
    assert not SimulationConfig(grid, ModelParams(), 0.1, 1.0, InitialDatum("gaussian"),
                                boundary_guard=False).guards_boundary


def test_blowup_detector_on_h1_growth(grid):
    # any growth past a tiny factor trips the detector
    cfg = SimulationConfig(grid, ModelParams(1, -1), 0.01, 1.0, InitialDatum("gaussian", amplitude=2.0),
                           blowup_factor=1.01)
    with pytest.raises(SimulationAborted, match="blow-up detector: H1"):
        evolve(cfg)


def test_blowup_detector_on_lost_resolution():
    g = make_grid(1, 1024, 30.0)
    cfg = SimulationConfig(g, ModelParams(3, -1), 1e-4, 0.05, InitialDatum("sech", amplitude=2.0),
                           diagnostics_every=10)
    with pytest.raises(SimulationAborted, match="lost resolution") as info:
        evolve(cfg)
    assert info.value.t < 0.05


def test_non_finite_detected(grid):
    cfg = gaussian_config(grid, T=0.02)
    bad = cfg.datum.realize(grid).values.copy()
    bad[3] = np.nan
    with pytest.raises(SimulationAborted, match="non-finite"):
        evolve(cfg, Field(grid, bad))


def test_indicators(grid):
    f = Field(grid, np.exp(-grid.x**2))
    assert boundary_leak(f) < 1e-30
    flat = Field(grid, np.ones(grid.shape))
    assert boundary_leak(flat) == pytest.approx(0.25, abs=2 / grid.n)
    assert high_band_fraction(f) < 1e-20
    top = Field(grid, np.exp(1j * grid.dxi * 200 * grid.x))
    assert high_band_fraction(top) == pytest.approx(1.0)
    assert high_band_fraction(Field(grid, np.zeros(grid.shape))) == 0.0


# ---------------------------------------------------------------- config types and data


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(T=-1.0), dict(dt=0.3, T=1.0),
                                dict(diagnostics_every=0), dict(splitting="yoshida")])
def test_config_validation(grid, kw):
    args = dict(dt=0.1, T=1.0)
    args.update(kw)
    dt, T = args.pop("dt"), args.pop("T")
    with pytest.raises(ValueError):
        SimulationConfig(grid, ModelParams(), dt, T, **args)


def test_step_count_tolerance(grid):
    assert SimulationConfig(grid, ModelParams(), 0.1, 0.3).steps == 3


def test_datum_kinds(grid):
    d = InitialDatum("concentrated", h_c=0.5, s=0.3, amplitude=1.0)
    u = d.realize(grid)
    assert np.abs(u.values).max() == pytest.approx(0.5 ** (0.3 - 0.5), rel=1e-6)
    pr = InitialDatum("prescribed-regularity", s=1.0, seed=3).realize(grid)
    assert np.sum(np.abs(pr.values) ** 2) * grid.cell == pytest.approx(1.0)
    pw = InitialDatum("plane-wave", amplitude=2.0, mode=(3,)).realize(grid)
    np.testing.assert_allclose(np.abs(pw.values), 2.0)
    sech = InitialDatum("sech", amplitude=1.5).realize(grid)
    assert np.abs(sech.values).max() == pytest.approx(1.5, rel=1e-3)
    with pytest.raises(ValueError):
        InitialDatum("triangle")


def test_from_file_datum(tmp_path, grid):
    f = InitialDatum("gaussian", wave_vector=(1.0,)).realize(grid)
    path = write_snapshot(tmp_path / "u.npz", grid, 0.5, f.values)
    back = load_field(path, grid)
    np.testing.assert_array_equal(back.values, f.values)
    with pytest.raises(ValueError, match="grid"):
        load_field(path, make_grid(1, 256, 40.0))


def test_series_drifts():
    s = DiagnosticsSeries()
    assert s.mass_drift() == 0.0 and s.energy_drift() == 0.0
    s.mass += [2.0, 2.0 * (1 + 1e-9)]
    s.energy += [1.0, 1.5, 0.25]
    assert s.mass_drift() == pytest.approx(1e-9)
    assert s.energy_drift() == pytest.approx(0.75)
