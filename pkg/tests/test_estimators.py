import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from prager_synge.defect_correction import BasisEntry, ErrorBasis
from prager_synge.estimators import (EstimatorError, alpha_from_beta, angle_estimate, angle_report,
                                     basis_size_table, distance_matrix, effectivity_index, ensemble_width,
                                     orthogonal_superposition, prager_synge_solution, recompute_radius,
                                     triangle_estimate, width_estimate)
from prager_synge.euler import SchemeId
from prager_synge.grid_field import GridFunction, angle_between, l2_norm, make_grid


def vec_grid(dim):
    return make_grid(dim, 1, (0.0, float(dim), 0.0, 1.0))


def gf(grid, v):
    return GridFunction(grid, np.asarray(v, dtype=float).reshape(1, -1))


def members_from(vectors):
    g = vec_grid(len(vectors[0]))
    return {f"m{k}": gf(g, v) for k, v in enumerate(vectors)}, g


def basis_from(errors, grid, deltas=None):
    """Basis whose approximation-error estimates are the given vectors."""
    b = ErrorBasis(grid)
    for k, e in errors.items():
        d = deltas[k] if deltas is not None else e
        b.entries[k] = BasisEntry(d, e, e, SchemeId.S1)
    return b


# -- effectivity ---------------------------------------------------------------------------

def test_effectivity_index_values():
    assert effectivity_index(0.7, 0.7) == 1.0
    assert effectivity_index(0.28, 0.25) == pytest.approx(1.12, abs=1e-12)
    assert effectivity_index(0.28, 0.27) == pytest.approx(1.03, abs=0.01)
    with pytest.raises(ValueError):
        effectivity_index(0.3, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_effectivity_is_the_plain_quotient(a, b):
    assert effectivity_index(a, b) == a / b


# -- width -------------------------------------------------------------------------------------

def test_width_matches_exhaustive_pairs():
    vecs = [[0, 0, 0, 0, 0], [3, 4, 0, 0, 0], [0, 0, 0, 0, 12]]
    fields, _ = members_from(vecs)
    d, pair = ensemble_width(fields)
    brute = max(np.linalg.norm(np.subtract(a, b)) for a, b in itertools.combinations(vecs, 2))
    assert d == pytest.approx(brute, rel=1e-15) and d == pytest.approx(13.0)
    assert pair == ("m1", "m2")


def test_width_ties_break_lexicographically():
    fields, _ = members_from([[0, 0], [1, 0], [0, 1], [1, 1]])
    _, pair = ensemble_width(fields)
    assert pair == ("m0", "m3")


def test_width_of_identical_members_warns(caplog):
    fields, g = members_from([[1, 2, 3], [1, 2, 3]])
    truth = gf(g, [0, 0, 0])
    rep = width_estimate(fields, truth=truth)
    assert rep.metadata["d_max"] == 0.0
    assert all(v == 0.0 for v in rep.effectivity.values())
    assert any("zero" in n for n in rep.notes) and "zero" in caplog.text


def test_width_needs_two_members():
    fields, _ = members_from([[1, 2]])
    with pytest.raises(ValueError):
        ensemble_width(fields)


# -- triangle ------------------------------------------------------------------------------------

def test_triangle_detects_the_outlier_cluster():
    fields, g = members_from([[4, 0, 0], [0.2, 0.1, 0], [0.1, -0.2, 0.1], [-0.1, 0.1, 0.2]])
    rep = triangle_estimate(fields, truth=gf(g, [0, 0, 0]))
    assert rep.metadata["verdict"] == "ordering detected" and rep.metadata["outlier"] == "m0"
    assert set(rep.estimates) == {"m1", "m2", "m3"}
    for k, est in rep.estimates.items():
        assert est >= rep.true_errors[k]


def test_triangle_equidistant_members_give_no_ordering():
    fields, _ = members_from(np.eye(3).tolist())
    rep = triangle_estimate(fields)
    assert rep.metadata["verdict"] == "no ordering" and rep.estimates == {}


def test_triangle_needs_three_members():
    fields, _ = members_from([[0.0], [1.0]])
    with pytest.raises(ValueError):
        triangle_estimate(fields)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_triangle_premise_implies_enclosure(seed):
    rng = np.random.default_rng(seed)
    e2 = rng.standard_normal(8)
    e1 = rng.standard_normal(8)
    e1 *= 2.0 * np.linalg.norm(e2) / np.linalg.norm(e1) * rng.uniform(1.0, 5.0)
    assert np.linalg.norm(e1 - e2) >= np.linalg.norm(e2)


# -- angle bound ----------------------------------------------------------------------------------

def test_angle_bound_for_orthogonal_equal_errors():
    fields, g = members_from([[1.0, 0.0], [0.0, 1.0]])
    M = angle_estimate(fields["m0"], fields["m1"], math.pi / 2)
    assert M == pytest.approx(2.2, rel=1e-14)


@pytest.mark.parametrize("alpha", [0.0, -0.1, math.pi])
def test_angle_bound_rejects_degenerate_alpha(alpha):
    fields, _ = members_from([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        angle_estimate(fields["m0"], fields["m1"], alpha)


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_angle_bound_encloses_both_errors(seed):
    rng = np.random.default_rng(seed)
    g = vec_grid(20)
    e1, e2 = rng.standard_normal(20), rng.standard_normal(20) * rng.uniform(0.1, 3)
    u1, u2 = gf(g, e1), gf(g, e2)
    alpha = angle_between(u1, u2)
    assume(alpha >= math.radians(5))
    M = angle_estimate(u1, u2, alpha)
    assert M >= max(np.linalg.norm(e1), np.linalg.norm(e2))


def test_alpha_from_beta():
    fields, g = members_from([[1, 0, 0], [0, 1, 0], [1, 0, 0]])
    b = basis_from(fields, g)
    assert alpha_from_beta(b, ("m0", "m1")) == pytest.approx(math.pi / 6)
    with pytest.raises(KeyError):
        alpha_from_beta(b, ("m0", "zz"))


def test_angle_report_tables_and_degenerate_pairs():
    fields, g = members_from([[1.0, 0.2, 0.0], [0.1, 1.0, 0.0], [1.0, 0.2, 0.5]])
    deltas = {"m0": gf(g, [1, 0, 0]), "m1": gf(g, [0, 1, 0]), "m2": gf(g, [1, 0, 0])}
    rep = angle_report(fields, basis_from(fields, g, deltas), truth=gf(g, [0, 0, 0]))
    assert rep.alpha[0, 1] == pytest.approx(math.pi / 6)
    assert math.isnan(rep.matrices["bound"][0, 2])
    assert any("m0-m2" in n for n in rep.notes)
    expect = 1.1 * np.linalg.norm([0.9, -0.8, 0.0]) / math.sin(math.pi / 12)
    assert rep.matrices["bound"][0, 1] == pytest.approx(expect, rel=1e-14)
    assert rep.matrices["ieff_row"][0, 1] == pytest.approx(expect / rep.true_errors["m0"], rel=1e-14)
    json.loads(rep.to_json())


# -- orthogonal superposition -----------------------------------------------------------------------

def span_oracle(e0, errors):
    """Endpoint of the normalised steepest descent from uniform weights: the
    iterate stays in span{1, c}, so w is proportional to 1 - (sum c / |c|^2) c."""
    c = np.array([e0 @ e for e in errors])
    w = np.ones(len(c)) - c.sum() / (c @ c) * c
    return w / w.sum()


def test_superposition_matches_closed_form_endpoint():
    rng = np.random.default_rng(21)
    g = vec_grid(10)
    errs = [rng.standard_normal(10) for _ in range(5)]
    fields = {f"m{k}": gf(g, e) for k, e in enumerate(errs)}
    basis = basis_from(fields, g)
    sol = orthogonal_superposition(basis, fields, "m0", angle_tol=1e-12, max_iter=100_000)
    assert sol.converged
    w = span_oracle(errs[0], errs[1:])
    u_perp = sum(wk * e for wk, e in zip(w, errs[1:]))
    got = sum(sol.weights[f"m{k}"] * errs[k] for k in range(1, 5))
    assert np.linalg.norm(got - u_perp) <= 1e-6
    assert sol.radius == pytest.approx(np.linalg.norm(errs[0] - u_perp), rel=1e-6)


def test_superposition_invariants():
    rng = np.random.default_rng(22)
    g = vec_grid(12)
    fields = {f"m{k}": gf(g, rng.standard_normal(12)) for k in range(6)}
    sol = orthogonal_superposition(basis_from(fields, g), fields, "m2", angle_tol=1e-8)
    eps = [h[0] for h in sol.history]
    assert all(b <= a for a, b in zip(eps, eps[1:]))
    assert all(abs(h[1] - 1.0) <= 1e-12 for h in sol.history)
    assert recompute_radius(sol, fields) == pytest.approx(sol.radius, abs=1e-12)


def test_superposition_picks_the_orthogonal_member():
    fields, g = members_from([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]])
    sol = orthogonal_superposition(basis_from(fields, g), fields, "m0", angle_tol=1e-10)
    assert sol.converged
    assert sol.weights["m1"] == pytest.approx(1.0, abs=1e-9)
    assert sol.weights["m2"] == pytest.approx(0.0, abs=1e-9)
    assert sol.achieved_angle_phi == pytest.approx(math.pi / 2, abs=1e-9)


def test_superposition_argument_checks():
    fields, g = members_from([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]])
    b = basis_from(fields, g)
    with pytest.raises(KeyError):
        orthogonal_superposition(b, fields, "zz")
    with pytest.raises(ValueError):
        orthogonal_superposition(b, fields, "m0", ["m0", "m1"])


def test_parallel_errors_fail_every_center():
    fields, g = members_from([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(EstimatorError, match="every center failed"):
        prager_synge_solution(basis_from(fields, g), fields, max_iter=200)


def test_enclosure_with_exact_errors():
    rng = np.random.default_rng(23)
    g = vec_grid(15)
    truth = gf(g, np.zeros(15))
    for _ in range(20):
        fields = {f"m{k}": gf(g, rng.standard_normal(15) * rng.uniform(0.2, 2.0)) for k in range(5)}
        sol, rep = prager_synge_solution(basis_from(fields, g), fields, truth=truth, angle_tol=1e-6)
        assert sol.radius >= l2_norm(fields[sol.center_label]) * (1 - 1e-9)
        assert rep.metadata["center"] == sol.center_label


def test_argmax_center_is_scale_invariant():
    rng = np.random.default_rng(24)
    g = vec_grid(15)
    fields = {f"m{k}": gf(g, rng.standard_normal(15)) for k in range(5)}
    scaled = {k: 3.7 * v for k, v in fields.items()}
    a, _ = prager_synge_solution(basis_from(fields, g), fields)
    b, _ = prager_synge_solution(basis_from(scaled, g), scaled)
    assert a.center_label == b.center_label
    assert b.radius == pytest.approx(3.7 * a.radius, rel=1e-6)


def test_report_rows_are_quotients_and_runs_are_pure():
    rng = np.random.default_rng(25)
    g = vec_grid(15)
    fields = {f"m{k}": gf(g, rng.standard_normal(15)) for k in range(6)}
    truth = gf(g, rng.standard_normal(15) * 0.01)
    b = basis_from(fields, g)
    sol, rep = prager_synge_solution(b, fields, truth=truth)
    for r in rep.rows():
        if r["effectivity"] is not None:
            assert r["effectivity"] == pytest.approx(r["estimate"] / r["true_error"], rel=1e-12)
    _, again = prager_synge_solution(b, fields, truth=truth)
    assert rep.to_json() == again.to_json()
    assert rep.metadata["min_effectivity"] <= rep.metadata["max_effectivity"]


def test_basis_size_table_uses_prefixes():
    rng = np.random.default_rng(26)
    g = vec_grid(15)
    fields = {f"m{k}": gf(g, rng.standard_normal(15)) for k in range(6)}
    order = list(fields)
    table = basis_size_table(basis_from(fields, g), fields, order, (2, 3, 4, 5), truth=gf(g, np.zeros(15)))
    assert table.labels == ["N=2", "N=3", "N=4", "N=5"]
    assert table.extra["N=3"]["members"] == "m0 m1 m2 m3"
    with pytest.raises(ValueError):
        basis_size_table(basis_from(fields, g), fields, order, (6,))


def test_distance_matrix_is_symmetric():
    fields, _ = members_from([[0, 1], [2, 3], [5, -1]])
    D = distance_matrix(fields, list(fields))
    assert np.array_equal(D, D.T) and np.all(np.diag(D) == 0)


def test_report_serialisation_round_trip():
    fields, g = members_from([[4, 0, 0], [0.2, 0.1, 0], [0.1, -0.2, 0.1]])
    rep = width_estimate(fields, truth=gf(g, [0, 0, 0]))
    data = json.loads(rep.to_json())
    assert data["method"] == "width" and len(data["rows"]) == 3
    lines = rep.to_csv().splitlines()
    assert lines[0] == "label,estimate,true_error,effectivity" and len(lines) == 4
