"""Ensemble-based error estimators: ensemble width, triangle-inequality
clustering, the angle bound, and the orthogonal-superposition search that
yields a hypersphere (center and radius) enclosing the exact solution."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .grid_field import GridFunction, UndefinedAngleError, angle_between, distance, dot, l2_norm

log = logging.getLogger(__name__)


class EstimatorError(RuntimeError):
    """An estimator could not produce a result."""


class DegenerateWeightsError(EstimatorError):
    """Weight normalisation sum collapsed to zero."""


def _members(ensemble) -> dict:
    """Accept a SolutionEnsemble or a plain label -> GridFunction mapping."""
    return dict(ensemble.members) if hasattr(ensemble, "members") else dict(ensemble)


def effectivity_index(estimate: float, true_norm: float) -> float:
    if not true_norm > 0.0:
        raise ValueError(f"effectivity index needs a positive true error norm, got {true_norm}")
    return estimate / true_norm


def distance_matrix(fields: Mapping[str, GridFunction], labels: Sequence[str], mask=None) -> np.ndarray:
    n = len(labels)
    D = np.zeros((n, n))
    for a, b in itertools.combinations(range(n), 2):
        D[a, b] = D[b, a] = distance(fields[labels[a]], fields[labels[b]], mask)
    return D


# -- reports ----------------------------------------------------------------------

def _num(x):
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def _matrix(M):
    return None if M is None else [[_num(v) for v in row] for row in np.asarray(M)]


@dataclass
class EstimateReport:
    method: str
    labels: list
    estimates: dict
    true_errors: dict = field(default_factory=dict)
    effectivity: dict = field(default_factory=dict)
    distances: np.ndarray | None = None
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    extra: dict = field(default_factory=dict)       # label -> {column: value}
    matrices: dict = field(default_factory=dict)    # further named label x label tables
    metadata: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def attach_truth(self, fields: Mapping[str, GridFunction], truth: GridFunction, mask=None):
        """Fill true error norms and effectivity indices for every labelled row."""
        for k in self.labels:
            if k not in fields:
                continue
            e = distance(fields[k], truth, mask)
            self.true_errors[k] = e
            est = self.estimates.get(k)
            if est is None:
                continue
            if e > 0.0:
                self.effectivity[k] = effectivity_index(est, e)
            else:
                self.notes.append(f"{k}: zero true error, effectivity undefined")
        return self

    def columns(self) -> list[str]:
        extra = []
        for row in self.extra.values():
            extra += [c for c in row if c not in extra]
        return ["label", "estimate", "true_error", "effectivity"] + extra

    def rows(self) -> list[dict]:
        out = []
        for k in self.labels:
            row = {"label": k, "estimate": self.estimates.get(k),
                   "true_error": self.true_errors.get(k), "effectivity": self.effectivity.get(k)}
            row.update(self.extra.get(k, {}))
            out.append(row)
        return out

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "labels": list(self.labels),
            "rows": [{c: (_num(v) if isinstance(v, (float, int, np.floating)) and not isinstance(v, bool) else v)
                      for c, v in r.items()} for r in self.rows()],
            "distances": _matrix(self.distances),
            "alpha": _matrix(self.alpha),
            "beta": _matrix(self.beta),
            "matrices": {k: _matrix(v) for k, v in self.matrices.items()},
            "metadata": self.metadata,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.columns(), lineterminator="\n")
        w.writeheader()
        for r in self.rows():
            w.writerow({c: ("" if r.get(c) is None else (repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c]))
                        for c in self.columns()})
        return buf.getvalue()


# -- ensemble width ------------------------------------------------------------------

def ensemble_width(ensemble, mask=None) -> tuple[float, tuple[str, str]]:
    """Largest pairwise distance and the (sorted-label) pair attaining it."""
    fields = _members(ensemble)
    if len(fields) < 2:
        raise ValueError("ensemble width needs at least two members")
    best, pair = -1.0, None
    for a, b in itertools.combinations(sorted(fields), 2):
        d = distance(fields[a], fields[b], mask)
        if d > best:
            best, pair = d, (a, b)
    return best, pair


def width_estimate(ensemble, mask=None, truth: GridFunction | None = None) -> EstimateReport:
    fields = _members(ensemble)
    d_max, pair = ensemble_width(fields, mask)
    labels = list(fields)
    rep = EstimateReport("width", labels, {k: d_max for k in labels},
                         distances=distance_matrix(fields, labels, mask),
                         metadata={"d_max": d_max, "pair": list(pair)})
    if d_max == 0.0:
        rep.notes.append("ensemble width is zero: members coincide, the estimate is void")
        log.warning("ensemble width is zero")
    if truth is not None:
        rep.attach_truth(fields, truth, mask)
    return rep


# -- triangle inequality clustering -----------------------------------------------------

def triangle_estimate(ensemble, mask=None, truth: GridFunction | None = None,
                      ratio: float = 2.0) -> EstimateReport:
    """Outlier-based bound.

    The outlier ``o`` maximises its distance to the nearest other member.  If
    that distance is at least ``ratio`` times every distance among the
    remaining members, each remaining member ``k`` gets the estimate
    ``d(o, k)``; otherwise the verdict is "no ordering" and no estimates are
    produced.
    """
    fields = _members(ensemble)
    labels = list(fields)
    if len(labels) < 3:
        raise ValueError("triangle estimate needs at least three members")
    D = distance_matrix(fields, labels, mask)
    n = len(labels)
    nearest = [min(D[k, j] for j in range(n) if j != k) for k in range(n)]
    top = max(nearest)
    o = min((labels[k] for k in range(n) if nearest[k] == top))
    oi = labels.index(o)
    rest = [k for k in range(n) if k != oi]
    spread = max(D[a, b] for a, b in itertools.combinations(rest, 2))
    fired = top >= ratio * spread
    meta = {"outlier": o, "min_outlier_distance": top, "max_remaining_distance": spread,
            "ratio": ratio, "verdict": "ordering detected" if fired else "no ordering"}
    estimates = {labels[k]: D[oi, k] for k in rest} if fired else {}
    rep = EstimateReport("triangle", labels, estimates, distances=D, metadata=meta)
    if truth is not None:
        rep.attach_truth(fields, truth, mask)
    return rep


# -- angle bound ---------------------------------------------------------------------

def angle_estimate(u1: GridFunction, u2: GridFunction, alpha: float, mask=None, factor: float = 1.1) -> float:
    """``factor * ||u1 - u2|| / sin(alpha / 2)``, an upper bound for both
    members' errors when ``alpha`` bounds the angle between them from below."""
    if not 0.0 < alpha < math.pi:
        raise ValueError(f"alpha must lie in (0, pi), got {alpha}; the bound diverges as alpha -> 0")
    d = distance(u1, u2, mask)
    if d == 0.0:
        raise ValueError("angle bound needs two distinct members")
    return factor * d / math.sin(0.5 * alpha)


def alpha_from_beta(basis, pair: tuple[str, str], mask=None, divisor: float = 3.0) -> float:
    """Conservative error angle: a third of the truncation-error angle."""
    a, b = pair
    for k in pair:
        if k not in basis:
            raise KeyError(f"{k!r} has no error-basis entry")
    return angle_between(basis[a].delta, basis[b].delta, mask) / divisor


def angle_report(ensemble, basis, mask=None, truth: GridFunction | None = None,
                 factor: float = 1.1, divisor: float = 3.0) -> EstimateReport:
    """Angle bound for every pair of basis members.

    ``matrices["bound"]`` holds the pairwise bound; the per-label estimate is
    the tightest bound over partners.  With truth, ``matrices["ieff_row"]``
    divides by the row member's true error and ``matrices["ieff_col"]`` by the
    column member's.
    """
    fields = _members(ensemble)
    labels = [k for k in basis.labels if k in fields]
    n = len(labels)
    if n < 2:
        raise ValueError("angle estimate needs two basis members")
    beta = np.zeros((n, n))
    bound = np.full((n, n), np.nan)
    notes = []
    for a, b in itertools.combinations(range(n), 2):
        try:
            beta[a, b] = beta[b, a] = angle_between(basis[labels[a]].delta, basis[labels[b]].delta, mask)
        except UndefinedAngleError:
            beta[a, b] = beta[b, a] = np.nan
            notes.append(f"{labels[a]}-{labels[b]}: zero truncation estimate")
            continue
        alpha = beta[a, b] / divisor
        try:
            bound[a, b] = bound[b, a] = angle_estimate(fields[labels[a]], fields[labels[b]], alpha, mask, factor)
        except ValueError as exc:
            notes.append(f"{labels[a]}-{labels[b]}: {exc}")
    estimates = {}
    for k in range(n):
        row = bound[k][~np.isnan(bound[k])]
        if row.size:
            estimates[labels[k]] = float(row.min())
    rep = EstimateReport("angle", labels, estimates, distances=distance_matrix(fields, labels, mask),
                         alpha=beta / divisor, beta=beta, matrices={"bound": bound},
                         metadata={"factor": factor, "divisor": divisor}, notes=notes)
    if truth is not None:
        rep.attach_truth(fields, truth, mask)
        err = np.array([rep.true_errors[k] for k in labels])
        with np.errstate(divide="ignore", invalid="ignore"):
            rep.matrices["ieff_row"] = bound / err[:, None]
            rep.matrices["ieff_col"] = bound / err[None, :]
        true_alpha = np.zeros((n, n))
        for a, b in itertools.combinations(range(n), 2):
            try:
                true_alpha[a, b] = true_alpha[b, a] = angle_between(fields[labels[a]] - truth,
                                                                    fields[labels[b]] - truth, mask)
            except UndefinedAngleError:
                true_alpha[a, b] = true_alpha[b, a] = np.nan
        rep.matrices["alpha_true"] = true_alpha
    return rep


# -- orthogonal superposition ----------------------------------------------------------

@dataclass
class PragerSyngeSolution:
    center_label: str
    center: GridFunction
    radius: float
    weights: dict
    achieved_angle_phi: float
    iterations: int
    converged: bool
    discrepancy: float
    history: list = field(default_factory=list, repr=False)  # (eps, weight sum) per accepted step


def orthogonal_superposition(basis, ensemble, basic_label: str, labels: Sequence[str] | None = None, *,
                             mask=None, angle_tol: float = math.radians(2.0),
                             max_iter: int = 10_000) -> PragerSyngeSolution:
    """Affine weights ``w`` (summing to one) that make the combined error
    estimate ``sum w_k approx_k`` orthogonal to the center's estimate, found by
    steepest descent on ``eps = (approx_0, sum w_k approx_k)**2 / 2``.

    The step size halves whenever ``eps`` would grow and grows by 1.2 after
    each accepted step.  The result carries ``converged=False`` when the
    angle tolerance is not met within ``max_iter`` iterations.
    """
    fields = _members(ensemble)
    if basic_label not in fields or basic_label not in basis:
        raise KeyError(f"{basic_label!r} must be both an ensemble member and a basis entry")
    if labels is None:
        labels = [k for k in basis.labels if k != basic_label and k in fields]
    labels = [k for k in labels if k != basic_label]
    if len(labels) < 2:
        raise ValueError("orthogonal superposition needs at least two basis members besides the center")
    d0 = basis[basic_label].approx
    n0 = l2_norm(d0, mask)
    if n0 == 0.0:
        raise EstimatorError(f"zero approximation-error estimate for center {basic_label}")
    approx = [basis[k].approx for k in labels]
    c = np.array([dot(d0, a, mask) for a in approx])
    gram = np.array([[dot(a, b, mask) for b in approx] for a in approx])
    norms = np.sqrt(np.diag(gram))

    def state(w):
        s = float(c @ w)
        q = float(w @ gram @ w)
        phi = math.acos(max(-1.0, min(1.0, s / (n0 * math.sqrt(q))))) if q > 0.0 else float("nan")
        return 0.5 * s * s, phi

    def normalised(w):
        total = float(w.sum())
        if abs(total) < 1e-10:
            raise DegenerateWeightsError(f"weight sum collapsed ({total:.3e}) for center {basic_label}")
        return w / total

    w = np.full(len(labels), 1.0 / len(labels))
    eps, phi = state(w)
    history = [(eps, float(w.sum()))]
    tau = 1.0 / (n0 * n0 * float(norms.max()) ** 2 + 1e-300)
    it = 0
    while not abs(phi - 0.5 * math.pi) < angle_tol and it < max_iter:
        it += 1
        trial = normalised(w - tau * float(c @ w) * c)
        e_new, phi_new = state(trial)
        if e_new > eps or math.isnan(phi_new):
            tau *= 0.5
            continue
        w, eps, phi = trial, e_new, phi_new
        history.append((eps, float(w.sum())))
        tau *= 1.2
    ok = abs(phi - 0.5 * math.pi) < angle_tol
    combo = sum((float(wk) * fields[k] for wk, k in zip(w[1:], labels[1:])), float(w[0]) * fields[labels[0]])
    radius = distance(fields[basic_label], combo, mask)
    return PragerSyngeSolution(basic_label, fields[basic_label], radius,
                               {k: float(wk) for k, wk in zip(labels, w)}, phi, it, ok, eps, history)


def recompute_radius(sol: PragerSyngeSolution, ensemble, mask=None) -> float:
    fields = _members(ensemble)
    items = list(sol.weights.items())
    combo = float(items[0][1]) * fields[items[0][0]]
    for k, w in items[1:]:
        combo = combo + float(w) * fields[k]
    return distance(sol.center, combo, mask)


def prager_synge_solution(basis, ensemble, labels: Sequence[str] | None = None, *, mask=None,
                          truth: GridFunction | None = None, angle_tol: float = math.radians(2.0),
                          max_iter: int = 10_000) -> tuple[PragerSyngeSolution, EstimateReport]:
    """Try every member as center; keep the try with the largest radius.

    The report lists each center's radius, angle and status; with truth it
    also gives per-center effectivity indices and their minimum and maximum.
    """
    fields = _members(ensemble)
    if labels is None:
        labels = [k for k in basis.labels if k in fields]
    labels = list(labels)
    tries, failures = {}, {}
    for k in labels:
        try:
            sol = orthogonal_superposition(basis, fields, k, labels, mask=mask,
                                           angle_tol=angle_tol, max_iter=max_iter)
        except (EstimatorError, ValueError) as exc:
            failures[k] = str(exc)
            continue
        if sol.converged:
            tries[k] = sol
        else:
            failures[k] = f"orthogonality not reached (phi = {math.degrees(sol.achieved_angle_phi):.3f} deg " \
                          f"after {sol.iterations} iterations)"
    if not tries:
        raise EstimatorError("every center failed: " + "; ".join(f"{k}: {v}" for k, v in failures.items()))
    best = max(sorted(tries), key=lambda k: tries[k].radius)
    sol = tries[best]
    rep = EstimateReport("prager_synge", labels, {k: s.radius for k, s in tries.items()},
                         distances=distance_matrix(fields, labels, mask),
                         metadata={"center": best, "radius": sol.radius, "basis_size": len(labels) - 1,
                                   "angle_tol_deg": math.degrees(angle_tol), "failures": failures,
                                   "weights": {k: s.weights for k, s in tries.items()}})
    for k in labels:
        if k in tries:
            s = tries[k]
            rep.extra[k] = {"phi_deg": math.degrees(s.achieved_angle_phi), "iterations": s.iterations,
                            "status": "converged"}
        else:
            rep.extra[k] = {"status": "failed"}
    if truth is not None:
        rep.attach_truth(fields, truth, mask)
        eff = [rep.effectivity[k] for k in tries if k in rep.effectivity]
        if eff:
            rep.metadata["min_effectivity"] = min(eff)
            rep.metadata["max_effectivity"] = max(eff)
    for k, why in failures.items():
        rep.notes.append(f"{k}: {why}")
    return sol, rep


def basis_size_table(basis, ensemble, order: Sequence[str], sizes: Sequence[int] = (2, 3, 4, 5), *,
                     mask=None, truth: GridFunction | None = None, **kw) -> EstimateReport:
    """Prager&Synge solutions on growing prefixes of ``order``: size ``N``
    uses the first ``N + 1`` members (each center plus ``N`` others)."""
    order = [k for k in order if k in basis]
    rows, extra, meta = {}, {}, {}
    for n in sizes:
        if n + 1 > len(order):
            raise ValueError(f"basis size {n} needs {n + 1} usable members, have {len(order)}")
        sol, rep = prager_synge_solution(basis, ensemble, order[:n + 1], mask=mask, truth=truth, **kw)
        key = f"N={n}"
        rows[key] = sol.radius
        extra[key] = {"center": sol.center_label, "members": " ".join(order[:n + 1])}
        if truth is not None:
            extra[key]["max_effectivity"] = rep.metadata.get("max_effectivity")
            extra[key]["min_effectivity"] = rep.metadata.get("min_effectivity")
        meta[key] = rep.to_dict()
    return EstimateReport("prager_synge_sizes", list(rows), rows, extra=extra, metadata={"runs": meta})
