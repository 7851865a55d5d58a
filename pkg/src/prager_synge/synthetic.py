"""Randomised checks of the provable estimator bounds on synthetic vectors.

Each trial builds error vectors with a known truth (the origin), wraps them
as grid functions on a ``dim x 1`` grid with unit cells and runs the real
estimator code on them.
"""
from __future__ import annotations

import math

import numpy as np

from .estimators import angle_estimate, ensemble_width, triangle_estimate
from .grid_field import GridFunction, angle_between, l2_norm, make_grid


def _grid(dim: int):
    return make_grid(dim, 1, (0.0, float(dim), 0.0, 1.0))


def _gf(grid, v) -> GridFunction:
    return GridFunction(grid, np.asarray(v, dtype=float).reshape(1, -1))


def angle_bound_trials(rng: np.random.Generator, trials: int = 10_000, dim: int = 100,
                       min_angle: float = math.radians(5.0)) -> dict:
    """Pairs of random errors with exact angle at least ``min_angle``: the
    angle bound must dominate both error norms."""
    grid = _grid(dim)
    zero = _gf(grid, np.zeros(dim))
    passed = done = 0
    worst = math.inf
    while done < trials:
        e1 = rng.standard_normal(dim) * rng.uniform(0.1, 10.0)
        e2 = rng.standard_normal(dim) * rng.uniform(0.1, 10.0)
        if rng.random() < 0.5:
            # bias toward small angles, where the bound is tightest
            e2 = e1 * rng.uniform(0.2, 2.0) + e2 * rng.uniform(0.01, 0.3) * np.linalg.norm(e1) / np.linalg.norm(e2)
        u1, u2 = _gf(grid, e1), _gf(grid, e2)
        alpha = angle_between(u1 - zero, u2 - zero)
        if alpha < min_angle or alpha >= math.pi:
            continue
        done += 1
        M = angle_estimate(u1, u2, alpha)
        ratio = M / max(l2_norm(u1), l2_norm(u2))
        worst = min(worst, ratio)
        passed += bool(ratio > 1.0)
    return {"trials": trials, "passed": int(passed), "min_bound_ratio": float(worst)}


def triangle_trials(rng: np.random.Generator, trials: int = 10_000, dim: int = 100) -> dict:
    """Errors with ``||e1|| >= 2 ||e_k||`` for the others: the outlier
    distance must bound every remaining member's error."""
    grid = _grid(dim)
    passed = 0
    worst = math.inf
    for _ in range(trials):
        n = int(rng.integers(3, 6))
        errs = [rng.standard_normal(dim) for _ in range(n)]
        norms = [np.linalg.norm(e) for e in errs]
        small = rng.uniform(0.1, 1.0, n - 1)
        big = 2.0 * small.max() * rng.uniform(1.0, 3.0)
        errs = [errs[0] / norms[0] * big] + [e / s * t for e, s, t in zip(errs[1:], norms[1:], small)]
        members = {f"m{k}": _gf(grid, e) for k, e in enumerate(errs)}
        ok = True
        for k, e in list(members.items())[1:]:
            d = l2_norm(members["m0"] - e)
            worst = min(worst, d / l2_norm(e))
            ok = ok and d >= l2_norm(e)
        passed += bool(ok)
    return {"trials": trials, "passed": int(passed), "min_bound_ratio": float(worst)}


def width_orthogonal_trials(rng: np.random.Generator, trials: int = 1_000, dim: int = 100) -> dict:
    """Mutually orthogonal errors: the ensemble width must dominate every
    member's error."""
    grid = _grid(dim)
    passed = 0
    worst = math.inf
    for _ in range(trials):
        n = int(rng.integers(2, 8))
        q, _ = np.linalg.qr(rng.standard_normal((dim, n)))
        scales = rng.uniform(0.01, 10.0, n)
        members = {f"m{k}": _gf(grid, q[:, k] * scales[k]) for k in range(n)}
        d_max, _ = ensemble_width(members)
        ratio = d_max / scales.max()
        worst = min(worst, ratio)
        passed += bool(d_max >= scales.max() * (1 - 1e-12))
    return {"trials": trials, "passed": int(passed), "min_bound_ratio": float(worst)}


def equidistant_triangle(dim: int = 3) -> str:
    """Verdict for three mutually equidistant members (expected: no ordering)."""
    grid = _grid(dim)
    members = {f"m{k}": _gf(grid, np.eye(dim)[k]) for k in range(3)}
    return triangle_estimate(members).metadata["verdict"]


def run_suite(seed: int, trials: int = 10_000) -> dict:
    rng = np.random.default_rng(seed)
    out = {
        "seed": seed,
        "angle_bound": angle_bound_trials(rng, trials),
        "triangle": triangle_trials(rng, trials),
        "width_orthogonal": width_orthogonal_trials(rng, max(1, trials // 10)),
    }
    out["all_passed"] = all(v["passed"] == v["trials"] for v in out.values() if isinstance(v, dict))
    return out
