"""Pseudo-time marching to steady state and ensemble assembly."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..gas_analytic import FlowPattern, GasModel, pattern_conserved
from ..grid_field import Grid, GridFunction
from .physics import primitive
from .schemes import G, SchemeId, interior, make_scheme, spectral_radii

log = logging.getLogger(__name__)


class SolverDivergenceError(RuntimeError):
    def __init__(self, scheme, step, cell, reason):
        self.scheme, self.step, self.cell, self.reason = scheme, step, cell, reason
        super().__init__(f"{scheme}: {reason} at step {step}, cell (i={cell[0]}, j={cell[1]})")

    def __reduce__(self):
        return type(self), (self.scheme, self.step, self.cell, self.reason)


class BoundaryData:
    """Ghost-cell filler.

    Left ghosts are always prescribed (supersonic inflow).  Bottom and top
    ghosts are prescribed where the exact state there flows into the domain
    and extrapolated (zeroth order) elsewhere; right ghosts are extrapolated.
    """

    def __init__(self, inflow: Callable, grid: Grid, gamma: float):
        nx, ny = grid.nx, grid.ny
        x = grid.extent[0] + (np.arange(-G, nx + G) + 0.5) * grid.hx
        y = grid.extent[2] + (np.arange(-G, ny + G) + 0.5) * grid.hy
        X, Y = np.meshgrid(x, y)
        Ub = np.asarray(inflow(X, Y), dtype=np.float64)
        vel_y = Ub[2] / Ub[0]
        mask = np.zeros(X.shape, dtype=bool)
        mask[:G, :] = vel_y[:G, :] >= 0.0
        mask[-G:, :] = vel_y[-G:, :] <= 0.0
        mask[:, :G] = True
        self.mask = mask
        self.values = Ub[:, mask]
        self.exact = Ub

    def __call__(self, U):
        U[:, :, :G] = U[:, :, G:G + 1]
        U[:, :, -G:] = U[:, :, -G - 1:-G]
        U[:, :G, :] = U[:, G:G + 1, :]
        U[:, -G:, :] = U[:, -G - 1:-G, :]
        U[:, self.mask] = self.values
        return U


def inflow_function(inflow, gas: GasModel) -> Callable:
    if isinstance(inflow, FlowPattern):
        return lambda X, Y: pattern_conserved(inflow, X, Y, gas)
    if callable(inflow):
        return inflow
    raise TypeError(f"unsupported inflow description {inflow!r}")


@dataclass(frozen=True)
class SolverConfig:
    scheme: SchemeId
    grid: Grid
    inflow: object  # FlowPattern or callable (X, Y) -> conserved[4, ...]
    gas: GasModel = GasModel()
    cfl: float | None = None
    max_steps: int = 50_000
    steady_tol: float = 1e-8
    limiter: str = "minmod"
    init: str = "freestream"  # freestream | pattern
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeId(self.scheme))
        if self.cfl is None:
            object.__setattr__(self, "cfl", self.scheme.default_cfl)
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.steady_tol > 0:
            raise ValueError("steady_tol must be positive")
        if self.limiter not in ("minmod", "van_leer"):
            raise ValueError(f"unknown limiter {self.limiter!r}")
        if self.init not in ("freestream", "pattern"):
            raise ValueError(f"unknown init {self.init!r}")

    @property
    def name(self) -> str:
        return self.label or self.scheme.value

    def describe(self) -> dict:
        if isinstance(self.inflow, FlowPattern):
            inflow = {"kind": self.inflow.kind, "origin": list(self.inflow.origin),
                      "params": {k: v for k, v in self.inflow.params.items()}}
        else:
            inflow = {"kind": "callable", "name": getattr(self.inflow, "__qualname__", repr(self.inflow))}
        return {
            "scheme": self.scheme.value, "label": self.name,
            "grid": [self.grid.nx, self.grid.ny, list(self.grid.extent)],
            "gamma": self.gas.gamma, "cfl": self.cfl, "max_steps": self.max_steps,
            "steady_tol": self.steady_tol, "limiter": self.limiter, "init": self.init,
            "mu": self.scheme.mu, "inflow": inflow,
        }

    def digest(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, default=repr).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ConvergenceLog:
    scheme: str
    residuals: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    steps: int = 0
    status: str = "running"  # converged | max_steps | diverged

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def to_csv(self) -> str:
        rows = ["step,residual,dt"]
        rows += [f"{k + 1},{r!r},{d!r}" for k, (r, d) in enumerate(zip(self.residuals, self.dts))]
        return "\n".join(rows) + "\n"


def _padded(field_values: np.ndarray, grid: Grid) -> np.ndarray:
    U = np.zeros((4, grid.ny + 2 * G, grid.nx + 2 * G))
    U[:, G:-G, G:-G] = np.moveaxis(field_values, -1, 0)
    return U


def time_step(U, gamma, hx, hy, cfl):
    lx, ly = spectral_radii(interior(U), gamma)
    return cfl / float(np.max(lx / hx + ly / hy))


def _check_state(U, gamma, sid, step):
    W = interior(U)
    rho, _, _, p = primitive(W, gamma)
    bad = ~np.isfinite(W).all(axis=0) | ~(rho > 0) | ~(p > 0)
    if bad.any():
        j, i = np.argwhere(bad)[0]
        what = "non-finite state" if not np.isfinite(W[:, j, i]).all() else \
            ("negative density" if not rho[j, i] > 0 else "negative pressure")
        raise SolverDivergenceError(sid.value, step, (int(i), int(j)), what)


class Marcher:
    """Scheme + boundary + geometry bound together for repeated use."""

    def __init__(self, config: SolverConfig):
        self.config = config
        g = config.grid
        self.grid = g
        self.gamma = config.gas.gamma
        self.scheme = make_scheme(config.scheme, self.gamma, g.hx, g.hy, config.limiter)
        self.bc = BoundaryData(inflow_function(config.inflow, config.gas), g, self.gamma)

    def initial(self, start: GridFunction | None = None) -> np.ndarray:
        g = self.grid
        if start is not None:
            if start.grid != g or start.ncomp != 4:
                raise ValueError("initial field does not match solver grid")
            U = _padded(start.values, g)
        elif self.config.init == "pattern":
            X, Y = g.centers()
            U = np.zeros((4, g.ny + 2 * G, g.nx + 2 * G))
            U[:, G:-G, G:-G] = inflow_function(self.config.inflow, self.config.gas)(X, Y)
        else:
            # uniform state of the left-boundary cell at mid height of the inflow trace
            U = np.zeros((4, g.ny + 2 * G, g.nx + 2 * G))
            fs = self._freestream()
            U[:] = fs[:, None, None]
        return self.bc(U)

    def _freestream(self) -> np.ndarray:
        inflow = self.config.inflow
        if isinstance(inflow, FlowPattern):
            return inflow.freestream.conserved(self.config.gas)
        return self.bc.exact[:, self.bc.exact.shape[1] // 2, 0]

    def padded(self, f: GridFunction) -> np.ndarray:
        return self.bc(_padded(f.values, self.grid))

    def dt(self, U) -> float:
        return time_step(U, self.gamma, self.grid.hx, self.grid.hy, self.config.cfl)

    def residual(self, U) -> np.ndarray:
        """Steady residual of this scheme on a padded, boundary-filled state."""
        return self.scheme.residual(U, self.dt(U), self.bc)

    def step(self, U, source=None):
        dt = self.dt(U)
        Un, inflow = self.scheme.step(U, dt, source, self.bc)
        self.bc(Un)
        return Un, dt, inflow

    def to_field(self, U) -> GridFunction:
        return GridFunction(self.grid, np.moveaxis(interior(U), 0, -1).copy())


def _march(config: SolverConfig, source: GridFunction | None, start: GridFunction | None):
    m = Marcher(config)
    U = m.initial(start)
    S = None
    if source is not None:
        if source.grid != config.grid or source.ncomp != 4:
            raise ValueError("source must live on the solver grid with 4 components")
        if np.any(source.values != 0.0):
            S = np.ascontiguousarray(np.moveaxis(source.values, -1, 0))
    logrec = ConvergenceLog(config.name)
    for n in range(1, config.max_steps + 1):
        rho_old = U[0, G:-G, G:-G].copy()
        try:
            Un, dt, _ = m.step(U, S)
            _check_state(Un, m.gamma, config.scheme, n)
        except FloatingPointError as exc:
            raise SolverDivergenceError(config.scheme.value, n, (-1, -1), str(exc)) from exc
        res = float(np.linalg.norm(Un[0, G:-G, G:-G] - rho_old) / np.linalg.norm(rho_old))
        logrec.residuals.append(res)
        logrec.dts.append(dt)
        logrec.steps = n
        U = Un
        if res < config.steady_tol:
            logrec.status = "converged"
            break
    else:
        logrec.status = "max_steps"
        log.warning("%s: not converged after %d steps (residual %.3e)",
                    config.name, config.max_steps, logrec.final_residual)
    return m.to_field(U), logrec


def run_scheme(config: SolverConfig, start: GridFunction | None = None):
    """March ``config`` to steady state; returns ``(field, ConvergenceLog)``."""
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        return _march(config, None, start)


def run_scheme_with_source(config: SolverConfig, source: GridFunction, start: GridFunction | None = None):
    """As :func:`run_scheme` with ``source`` added to every cell update, so the
    steady state satisfies residual + source = 0."""
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        return _march(config, source, start)


def steady_residual(config: SolverConfig, f: GridFunction) -> GridFunction:
    """Steady residual of ``config.scheme`` evaluated on ``f`` with the
    configured boundary data filling the ghosts."""
    m = Marcher(config)
    R = m.residual(m.padded(f))
    return GridFunction(f.grid, np.moveaxis(R, 0, -1))


# -- ensembles -----------------------------------------------------------------------

@dataclass
class MemberRecord:
    label: str
    digest: str
    config: dict
    status: str
    steps: int = 0
    final_residual: float = float("nan")
    error: str | None = None


@dataclass
class SolutionEnsemble:
    grid: Grid
    members: dict = field(default_factory=dict)       # label -> GridFunction
    provenance: dict = field(default_factory=dict)    # label -> MemberRecord
    logs: dict = field(default_factory=dict)          # label -> ConvergenceLog

    def __post_init__(self):
        for label, f in self.members.items():
            if f.grid != self.grid or f.ncomp != 4:
                raise ValueError(f"member {label!r} does not match the ensemble grid")

    @property
    def labels(self) -> list[str]:
        return list(self.members)

    def __len__(self):
        return len(self.members)

    def __getitem__(self, label) -> GridFunction:
        return self.members[label]

    def subset(self, labels: Sequence[str]) -> "SolutionEnsemble":
        return SolutionEnsemble(self.grid, {k: self.members[k] for k in labels},
                                {k: self.provenance[k] for k in labels if k in self.provenance},
                                {k: self.logs[k] for k in labels if k in self.logs})


def _run_member(cfg: SolverConfig):
    try:
        f, lg = run_scheme(cfg)
        return cfg, f, lg, None
    except SolverDivergenceError as exc:
        return cfg, None, None, exc


def run_ensemble(configs: Sequence[SolverConfig], workers: int = 1) -> SolutionEnsemble:
    """Run every config independently; failures are recorded, not raised."""
    if not configs:
        raise ValueError("empty roster")
    grid = configs[0].grid
    labels = [c.name for c in configs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate member labels in {labels}")
    for c in configs:
        if c.grid != grid:
            raise ValueError("all ensemble members must share one grid")
        if c.gas != configs[0].gas:
            raise ValueError("all ensemble members must share one gas model")
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_member, configs))
    else:
        results = [_run_member(c) for c in configs]
    ens = SolutionEnsemble(grid)
    for cfg, f, lg, err in results:
        rec = MemberRecord(cfg.name, cfg.digest(), cfg.describe(), "diverged" if err else lg.status)
        if err is not None:
            rec.error = str(err)
            log.error("member %s diverged: %s", cfg.name, err)
        else:
            rec.steps, rec.final_residual = lg.steps, lg.final_residual
            ens.members[cfg.name] = f
            ens.logs[cfg.name] = lg
        ens.provenance[cfg.name] = rec
    return ens


def roster_configs(schemes: Sequence, grid: Grid, inflow, gas: GasModel = GasModel(), **kw) -> list[SolverConfig]:
    return [SolverConfig(SchemeId(s), grid, inflow, gas, **kw) for s in schemes]
