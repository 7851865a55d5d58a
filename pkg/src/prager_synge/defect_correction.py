"""Truncation-error estimates from cross-scheme residuals and their conversion
into approximation-error estimates by a defect-correction solve.

A member ``u_i`` produced by scheme ``i`` is inserted into the steady discrete
operator ``A u = f`` of a *reference* scheme; the defect ``delta_i = A u_i - f``
estimates the truncation error.  Re-solving scheme ``i`` with source
``-delta_i`` (warm-started from ``u_i``) gives ``corrected_i``, which moves
toward the exact solution, and ``approx_i = u_i - corrected_i`` estimates the
approximation error ``u_i - exact``.

Near shocks the cross-scheme defect is of order ``jump / h`` and the full
correction can drive low-dissipation schemes to negative pressure.  The solve
is therefore posed for a small disturbance: the source is ``-s * delta_i`` and
the response is rescaled by ``1 / s``.  ``s = 1`` recovers the plain
nonlinear correction; small ``s`` gives its linearisation about ``u_i``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy import ndimage

from .euler import SchemeId, SolutionEnsemble, SolverConfig, SolverDivergenceError
from .euler import run_scheme_with_source, steady_residual
from .grid_field import GridFunction, angle_between, l2_norm

log = logging.getLogger(__name__)


@dataclass
class BasisEntry:
    delta: GridFunction
    approx: GridFunction
    corrected: GridFunction
    scheme: SchemeId
    steps: int = 0


@dataclass
class ErrorBasis:
    grid: object
    entries: dict = field(default_factory=dict)    # label -> BasisEntry
    reference_scheme: SchemeId = SchemeId.S2H
    excluded: dict = field(default_factory=dict)   # label -> reason

    @property
    def labels(self) -> list[str]:
        return list(self.entries)

    def __contains__(self, label) -> bool:
        return label in self.entries

    def __getitem__(self, label) -> BasisEntry:
        return self.entries[label]


def _with_scheme(config: SolverConfig, scheme, label=None, cfl=None) -> SolverConfig:
    sid = SchemeId(scheme)
    return replace(config, scheme=sid, cfl=cfl if cfl is not None else sid.default_cfl, label=label)


def estimate_truncation(u: GridFunction, reference, config: SolverConfig,
                        producer=None) -> GridFunction:
    """Defect ``A u - f`` of the ``reference`` scheme's steady operator at
    ``u`` (the negated pseudo-time residual ``du/dt``).

    ``config`` supplies grid, boundary data and gas; its scheme is replaced.
    """
    reference = SchemeId(reference)
    if producer is not None and SchemeId(producer) == reference:
        log.warning("truncation estimate with the producing scheme %s as reference is uninformative",
                    reference.value)
    return -steady_residual(_with_scheme(config, reference), u)


def shock_cells(u: GridFunction, threshold: float = 0.1, radius: int = 0) -> np.ndarray:
    """Boolean ``(ny, nx)`` mask of cells whose relative density jump to a
    neighbour exceeds ``threshold``, dilated by ``radius`` cells."""
    rho = u.component(0)
    jump = np.zeros(rho.shape, dtype=bool)
    dx = np.abs(np.diff(rho, axis=1)) / np.minimum(rho[:, 1:], rho[:, :-1]) > threshold
    dy = np.abs(np.diff(rho, axis=0)) / np.minimum(rho[1:], rho[:-1]) > threshold
    jump[:, 1:] |= dx
    jump[:, :-1] |= dx
    jump[1:] |= dy
    jump[:-1] |= dy
    if radius > 0:
        jump = ndimage.binary_dilation(jump, iterations=radius)
    return jump


def scaled_correction(u, delta, solve: Callable, amplitude: float = 1.0, offset=None):
    """Generic core of :func:`defect_correct` for any steady solver.

    ``solve(source, start)`` must return ``(c, info)`` with ``c`` steady for
    the problem forced by ``source``.  The source is ``-amplitude * delta``
    (minus ``offset`` when given) and the response is extrapolated to unit
    amplitude.  Works on grid functions and plain arrays alike.
    """
    if not 0.0 < amplitude <= 1.0:
        raise ValueError(f"amplitude must lie in (0, 1], got {amplitude}")
    source = -(amplitude * delta)
    if offset is not None:
        source = source - offset
    c, info = solve(source, u)
    if amplitude == 1.0:
        return c, info
    return u + (c - u) * (1.0 / amplitude), info


def defect_correct(u: GridFunction, delta: GridFunction, config: SolverConfig, amplitude: float = 1.0,
                   rebase: bool = False):
    """Solve ``config``'s scheme with source ``-amplitude * delta`` from ``u``.

    Returns ``(corrected, ConvergenceLog)`` where ``corrected`` is the
    response extrapolated to unit amplitude, ``u + (c - u) / amplitude``.
    With ``rebase`` the scheme's own residual at ``u`` is added to the
    source, so ``u`` is a steady state of the unperturbed problem even when
    ``config``'s scheme did not produce it.
    """
    offset = steady_residual(config, u) if rebase else None
    return scaled_correction(u, delta, lambda src, start: run_scheme_with_source(config, src, start=start),
                             amplitude, offset)


def _member_config(ensemble: SolutionEnsemble, label: str, base: SolverConfig) -> SolverConfig:
    rec = ensemble.provenance.get(label)
    if rec is not None:
        c = rec.config
        return replace(base, scheme=SchemeId(c["scheme"]), cfl=c["cfl"], limiter=c["limiter"], label=label)
    return _with_scheme(base, label, label=label)


def _basis_job(args):
    label, u, reference, cfg, mask_radius, amplitude, rebase = args
    delta = estimate_truncation(u, reference, cfg)
    if mask_radius is not None:
        keep = ~shock_cells(u, radius=mask_radius)
        delta = GridFunction(delta.grid, delta.values * keep[:, :, None])
    try:
        corrected, lg = defect_correct(u, delta, cfg, amplitude, rebase)
    except SolverDivergenceError as exc:
        return label, delta, None, None, str(exc)
    if not lg.converged:
        return label, delta, None, None, f"defect solve not converged ({lg.status})"
    return label, delta, corrected, lg.steps, None


def build_error_basis(ensemble: SolutionEnsemble, reference="S2H", base_config: SolverConfig | None = None,
                      shared_base=None, mask_radius: int | None = None, workers: int = 1,
                      configs: Mapping[str, SolverConfig] | None = None,
                      amplitude: float = 0.1) -> ErrorBasis:
    """Error basis for every member of ``ensemble``.

    Each defect solve reuses the member's own scheme unless ``shared_base``
    names one scheme for all of them.  Members produced by the reference
    scheme itself, and members whose defect solve fails, are recorded in
    ``excluded``.
    """
    reference = SchemeId(reference)
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    if base_config is None and configs is None:
        raise ValueError("need base_config or per-member configs")
    basis = ErrorBasis(ensemble.grid, reference_scheme=reference)
    jobs = []
    for label in ensemble.labels:
        if configs is not None and label in configs:
            cfg = configs[label]
        else:
            cfg = _member_config(ensemble, label, base_config)
        if cfg.scheme == reference:
            log.warning("member %s was produced by the reference scheme; excluded", label)
            basis.excluded[label] = "produced by the reference scheme"
            continue
        if shared_base is not None:
            cfg = _with_scheme(cfg, shared_base, label=label)
        jobs.append((label, ensemble[label], reference, cfg, mask_radius, amplitude, shared_base is not None))

    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_basis_job, jobs))
    else:
        results = [_basis_job(j) for j in jobs]

    for (label, u, _, cfg, *_), (_, delta, corrected, steps, err) in zip(jobs, results):
        if err is not None:
            log.error("defect solve for %s failed: %s", label, err)
            basis.excluded[label] = err
            continue
        basis.entries[label] = BasisEntry(delta, u - corrected, corrected, cfg.scheme, steps)
    return basis


def truncation_angle_table(basis: ErrorBasis, mask=None) -> tuple[list[str], np.ndarray]:
    """Pairwise angles between truncation estimates; zero-norm deltas are
    dropped with a warning.  Returns ``(labels, matrix)``."""
    labels = []
    for k in basis.labels:
        if l2_norm(basis[k].delta, mask) == 0.0:
            log.warning("zero truncation estimate for %s; left out of the angle table", k)
            continue
        labels.append(k)
    if len(labels) < 2:
        raise ValueError("angle table needs at least two nonzero truncation estimates")
    n = len(labels)
    B = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            B[a, b] = B[b, a] = angle_between(basis[labels[a]].delta, basis[labels[b]].delta, mask)
    return labels, B


def angle_table_csv(labels: list[str], table: np.ndarray, degrees: bool = True) -> str:
    scale = 180.0 / math.pi if degrees else 1.0
    rows = ["," + ",".join(labels)]
    for k, row in zip(labels, table):
        rows.append(k + "," + ",".join(repr(float(v * scale)) for v in row))
    return "\n".join(rows) + "\n"
