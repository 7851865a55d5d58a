import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prager_synge import gas_analytic as ga
from prager_synge.euler import (ROSTER, SchemeId, SolverConfig, SolverDivergenceError, run_ensemble,
                                run_scheme, run_scheme_with_source, steady_residual)
from prager_synge.euler.diagnostics import fit_shock_angle, shock_crossings
from prager_synge.euler.physics import (conserved, flux_x, hllc_x, hllc_x_fast, muscl_hllc_x, primitive,
                                        steger_warming)
from prager_synge.euler.schemes import G, interior
from prager_synge.euler.solver import Marcher
from prager_synge.grid_field import GridFunction, l2_norm, make_grid

GAMMA = 1.4
GAS = ga.GasModel()


def random_states(rng, n):
    return (rng.uniform(0.2, 3.0, n), rng.uniform(-3, 3, n), rng.uniform(-3, 3, n), rng.uniform(0.2, 5.0, n))


# -- point kernels --------------------------------------------------------------------

def test_split_fluxes_sum_to_physical_flux():
    rng = np.random.default_rng(1)
    W = random_states(rng, 500)
    total = steger_warming(*W, GAMMA, +1) + steger_warming(*W, GAMMA, -1)
    assert np.allclose(total, flux_x(*W, GAMMA), rtol=1e-13, atol=1e-12)


def test_split_flux_is_fully_upwind_when_supersonic():
    W = (np.array([1.0]), np.array([3.0]), np.array([0.4]), np.array([1 / 1.4]))
    assert np.all(steger_warming(*W, GAMMA, -1) == 0.0)


def test_hllc_is_consistent():
    rng = np.random.default_rng(2)
    W = random_states(rng, 300)
    assert np.allclose(hllc_x(*W, *W, GAMMA), flux_x(*W, GAMMA), rtol=1e-13, atol=1e-12)


def test_hllc_resolves_a_stationary_contact():
    L = (np.array([1.0]), np.array([0.0]), np.array([0.3]), np.array([1.0]))
    R = (np.array([0.125]), np.array([0.0]), np.array([-0.7]), np.array([1.0]))
    F = hllc_x(*L, *R, GAMMA)
    assert np.allclose(F[:, 0], [0.0, 1.0, 0.0, 0.0], atol=1e-14)


def test_compiled_hllc_is_bit_identical_to_numpy():
    rng = np.random.default_rng(3)
    L, R = random_states(rng, 2000), random_states(rng, 2000)
    assert np.array_equal(hllc_x(*L, *R, GAMMA), hllc_x_fast(*L, *R, GAMMA))


def _minmod(a, b):
    if a * b <= 0:
        return 0.0
    return a if abs(a) < abs(b) else b


def _van_leer(a, b):
    return 0.0 if a * b <= 0 else 2 * a * b / (a + b)


@pytest.mark.parametrize("limiter, lim", [("minmod", _minmod), ("van_leer", _van_leer)])
def test_muscl_faces_match_per_face_loop(limiter, lim):
    rng = np.random.default_rng(4)
    rows, cols = 3, 9
    W = np.stack([rng.uniform(0.5, 2.0, (rows, cols)), rng.uniform(-1, 1, (rows, cols)),
                  rng.uniform(-1, 1, (rows, cols)), rng.uniform(0.5, 2.0, (rows, cols))])
    out = muscl_hllc_x(W, GAMMA, limiter)
    assert out.shape == (4, rows, cols - 3)
    for j in range(rows):
        for f in range(cols - 3):
            i = f + 1  # left cell of the face
            left = [W[k, j, i] + 0.5 * lim(W[k, j, i] - W[k, j, i - 1], W[k, j, i + 1] - W[k, j, i]) for k in range(4)]
            right = [W[k, j, i + 1] - 0.5 * lim(W[k, j, i + 1] - W[k, j, i], W[k, j, i + 2] - W[k, j, i + 1])
                     for k in range(4)]
            ref = hllc_x(*(np.array([v]) for v in left), *(np.array([v]) for v in right), GAMMA)[:, 0]
            assert np.allclose(out[:, j, f], ref, rtol=1e-13, atol=1e-13)


# -- configs ----------------------------------------------------------------------------

def uniform_pattern(mach=2.5, direction=0.3):
    return ga.build_uniform(ga.freestream_state(mach, GAS, direction))


@pytest.mark.parametrize("kw", [{"cfl": 0.0}, {"cfl": 1.5}, {"limiter": "superbee"}, {"init": "zero"},
                                {"steady_tol": 0.0}, {"scheme": "RK4"}])
def test_bad_solver_configs(kw):
    args = {"scheme": "S1", "grid": make_grid(4, 4), "inflow": uniform_pattern()}
    args.update(kw)
    with pytest.raises(ValueError):
        SolverConfig(**args)


def test_default_cfl_and_digest():
    g = make_grid(4, 4)
    a = SolverConfig("S2H", g, uniform_pattern())
    assert a.cfl == SchemeId.S2H.default_cfl
    assert a.digest() == SolverConfig("S2H", g, uniform_pattern()).digest()
    assert a.digest() != SolverConfig("S2H", g, uniform_pattern(), cfl=0.3).digest()


# -- marching invariants -----------------------------------------------------------------

@pytest.mark.parametrize("scheme", ROSTER)
def test_freestream_is_preserved(scheme):
    cfg = SolverConfig(scheme, make_grid(16, 12), uniform_pattern())
    m = Marcher(cfg)
    U = m.initial()
    U0 = interior(U).copy()
    for _ in range(200):
        U, _, _ = m.step(U)
    assert np.max(np.abs(interior(U) - U0)) <= 1e-12


@pytest.mark.parametrize("scheme", ["S1", "S2H", "LW"])
def test_mass_update_balances_boundary_flux(scheme, edney1):
    g = make_grid(30, 30)
    m = Marcher(SolverConfig(scheme, g, edney1))
    U = m.initial()
    for _ in range(15):
        mass0 = interior(U)[0].sum() * g.cell_area
        U, _, inflow = m.step(U)
        mass1 = interior(U)[0].sum() * g.cell_area
        assert abs((mass1 - mass0) - inflow[0]) <= 1e-11


def test_zero_source_is_bit_identical(edney1, grid24):
    cfg = SolverConfig("S2H", grid24, edney1, max_steps=60)
    a, la = run_scheme(cfg)
    b, lb = run_scheme_with_source(cfg, GridFunction(grid24, np.zeros((24, 24, 4))))
    assert np.array_equal(a.values, b.values) and la.residuals == lb.residuals


def test_runs_are_deterministic(edney1, grid24):
    cfg = SolverConfig("MC4", grid24, edney1, max_steps=80)
    a, _ = run_scheme(cfg)
    b, _ = run_scheme(cfg)
    assert np.array_equal(a.values, b.values)


def smooth_conserved(X, Y):
    rho = 1.0 + 0.1 * np.sin(2 * np.pi * X) * np.cos(np.pi * Y)
    u = 2.5 + 0.1 * np.cos(np.pi * Y)
    v = 0.1 * np.sin(np.pi * X)
    p = (1.0 + 0.05 * np.cos(2 * np.pi * X * Y)) / GAMMA
    return conserved(rho, u, v, p, GAMMA)


def test_manufactured_source_recovers_target():
    g = make_grid(16, 16)
    target = GridFunction(g, np.moveaxis(smooth_conserved(*g.centers()), 0, -1))
    cfg = SolverConfig("S1", g, smooth_conserved, steady_tol=1e-11, max_steps=20_000)
    src = -steady_residual(cfg, target)
    noise = 1 + 0.01 * np.random.default_rng(0).standard_normal(target.values.shape)
    got, lg = run_scheme_with_source(cfg, src, GridFunction(g, target.values * noise))
    assert lg.converged
    assert l2_norm(got - target, "conserved") / l2_norm(target, "conserved") < 1e-8


def test_response_is_linear_in_small_sources(edney1):
    g = make_grid(16, 16)
    cfg = SolverConfig("S1", g, edney1, steady_tol=1e-12, max_steps=20_000)
    base, _ = run_scheme(cfg)
    rng = np.random.default_rng(8)
    src = GridFunction(g, rng.standard_normal((16, 16, 4)) * 1e-4)
    norms = []
    for s in (1.0, 0.5, 0.25):
        c, lg = run_scheme_with_source(cfg, s * src, base)
        assert lg.converged
        norms.append(l2_norm(c - base, "conserved"))
    assert norms[1] / norms[0] == pytest.approx(0.5, rel=0.1)
    assert norms[2] / norms[0] == pytest.approx(0.25, rel=0.1)


def test_s1_residual_matches_cellwise_stencil():
    g = make_grid(7, 5)
    rng = np.random.default_rng(9)
    rho, u, v, p = rng.uniform(0.8, 1.2, (5, 7)), rng.uniform(2, 3, (5, 7)), rng.uniform(-0.3, 0.3, (5, 7)), \
        rng.uniform(0.6, 0.8, (5, 7))
    f = GridFunction(g, np.moveaxis(conserved(rho, u, v, p, GAMMA), 0, -1))
    cfg = SolverConfig("S1", g, uniform_pattern(2.5, 0.0))
    R = steady_residual(cfg, f).values
    U = Marcher(cfg).padded(f)
    Wp = primitive(U, GAMMA)

    def fx(j, i, sign):
        return steger_warming(*(np.array([w[j, i]]) for w in Wp), GAMMA, sign)[:, 0]

    def gy(j, i, sign):
        r, uu, vv, pp = (np.array([w[j, i]]) for w in Wp)
        return steger_warming(r, vv, uu, pp, GAMMA, sign)[[0, 2, 1, 3], 0]

    for j in range(5):
        for i in range(7):
            J, I = j + G, i + G
            east = fx(J, I, +1) + fx(J, I + 1, -1)
            west = fx(J, I - 1, +1) + fx(J, I, -1)
            north = gy(J, I, +1) + gy(J + 1, I, -1)
            south = gy(J - 1, I, +1) + gy(J, I, -1)
            ref = -(east - west) / g.hx - (north - south) / g.hy
            assert np.allclose(R[j, i], ref, rtol=1e-13, atol=1e-13)


def test_divergence_is_reported_with_step_and_cell(edney6):
    cfg = SolverConfig("MC", make_grid(20, 20), edney6, cfl=1.0, max_steps=5000)
    with pytest.raises(SolverDivergenceError) as info:
        run_scheme(cfg)
    assert info.value.step >= 1 and "MC" in str(info.value)


def test_non_convergence_is_flagged(edney1, grid24):
    f, lg = run_scheme(SolverConfig("S1", grid24, edney1, max_steps=5))
    assert lg.status == "max_steps" and not lg.converged and lg.steps == 5
    assert lg.to_csv().count("\n") == 6


# -- ensembles ------------------------------------------------------------------------------

def test_ensemble_rejects_duplicates_and_mixed_grids(edney1):
    a = SolverConfig("S1", make_grid(4, 4), edney1, max_steps=2)
    with pytest.raises(ValueError):
        run_ensemble([a, a])
    with pytest.raises(ValueError):
        run_ensemble([a, SolverConfig("S2H", make_grid(5, 4), edney1, max_steps=2)])
    with pytest.raises(ValueError):
        run_ensemble([])


def test_singleton_and_partial_ensembles(edney6):
    g = make_grid(20, 20)
    ok = SolverConfig("S1", g, edney6, max_steps=10)
    bad = SolverConfig("MC", g, edney6, cfl=1.0, max_steps=5000)
    ens = run_ensemble([ok])
    assert ens.labels == ["S1"]
    ens = run_ensemble([ok, bad])
    assert ens.labels == ["S1"]
    assert ens.provenance["MC"].status == "diverged" and ens.provenance["MC"].error


# -- diagnostics ----------------------------------------------------------------------------

def test_shock_fit_on_exact_projection():
    pat = ga.build_single_wedge(ga.freestream_state(4.0, GAS), math.radians(20.0), GAS, origin=(0.0, 0.0))
    f = ga.project_pattern(pat, make_grid(200, 200))
    x, y = shock_crossings(f, 0.5 * (1.0 + pat.regions["shocked"].rho))
    assert x.size > 100
    angle = fit_shock_angle(f, 1.0, pat.regions["shocked"].rho)
    assert angle == pytest.approx(pat.params["beta"], abs=math.radians(0.2))


@settings(max_examples=50, deadline=None)
@given(st.floats(1.2, 6.0), st.floats(-math.pi, math.pi))
def test_any_uniform_state_has_zero_residual(mach, direction):
    pat = ga.build_uniform(ga.freestream_state(mach, GAS, direction))
    g = make_grid(6, 5)
    f = ga.project_pattern(pat, g)
    for s in ("S1", "S2H"):
        assert np.max(np.abs(steady_residual(SolverConfig(s, g, pat), f).values)) <= 1e-12
