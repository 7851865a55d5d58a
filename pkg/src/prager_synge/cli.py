"""Command-line entry point: ``prager-synge <command> [options]``.

Exit codes: 0 success, 1 validation error, 2 solver divergence,
3 estimator failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import gas_analytic as ga
from .defect_correction import angle_table_csv, build_error_basis, truncation_angle_table
from .estimators import (EstimatorError, angle_report, basis_size_table, prager_synge_solution,
                         triangle_estimate, width_estimate)
from .euler import ROSTER, SchemeId, SolutionEnsemble, SolverConfig, run_ensemble
from .euler.solver import MemberRecord
from .grid_field import load_field, make_grid, save_field
from .synthetic import run_suite

log = logging.getLogger("prager_synge")

EXIT_OK, EXIT_VALIDATION, EXIT_DIVERGENCE, EXIT_ESTIMATOR = 0, 1, 2, 3

PATTERNS = ("edney1", "edney6", "single_wedge", "freestream")
ESTIMATORS = ("width", "triangle", "angle", "prager_synge")


class ValidationError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    pattern: str = "edney1"
    mach: float = 4.0
    chi1: float = 20.0
    chi2: float = 15.0
    grid_sizes: list = field(default_factory=lambda: [100])
    schemes: list = field(default_factory=lambda: [s.value for s in ROSTER])
    estimators: list = field(default_factory=lambda: ["width"])
    mask: str = "density"
    reference_scheme: str = "S2H"
    defect_base: str | None = None
    steady_tol: float = 1e-8
    max_steps: int = 50_000
    cfl: float | None = None
    output_dir: str | None = None
    seed: int = 0
    trials: int = 10_000
    basis_sizes: list = field(default_factory=lambda: [2, 3, 4, 5])
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.pattern not in PATTERNS:
            raise ValidationError(f"pattern must be one of {PATTERNS}, got {self.pattern!r}")
        if not self.schemes:
            raise ValidationError("at least one scheme is required")
        try:
            self.schemes = [SchemeId(s).value for s in self.schemes]
            SchemeId(self.reference_scheme)
            if self.defect_base is not None:
                SchemeId(self.defect_base)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        if not self.grid_sizes or any(int(n) < 4 for n in self.grid_sizes):
            raise ValidationError("grid_sizes must be a nonempty list of integers >= 4")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ValidationError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
        if self.mask not in ("density", "conserved"):
            raise ValidationError("mask must be 'density' or 'conserved'")
        if not self.mach > 1.0:
            raise ValidationError("mach must exceed 1")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")

    def gas(self) -> ga.GasModel:
        return ga.GasModel()

    def build_pattern(self) -> ga.FlowPattern:
        """Analytic pattern; detachment and matching failures become
        validation errors."""
        gas = self.gas()
        fs = ga.freestream_state(self.mach, gas)
        c1, c2 = math.radians(self.chi1), math.radians(self.chi2)
        try:
            if self.pattern == "edney1":
                return ga.build_edney1(fs, c1, c2, gas=gas)
            if self.pattern == "edney6":
                return ga.build_edney6(fs, c1, c2, gas=gas)
            if self.pattern == "single_wedge":
                return ga.build_single_wedge(fs, c1, gas)
            return ga.build_uniform(fs, gas)
        except (ga.DetachedShockError, ga.PatternMatchError, ValueError) as exc:
            raise ValidationError(f"{self.pattern}: {exc}") from exc


# -- persistence ---------------------------------------------------------------------

def _grid_dir(root: Path, n: int) -> Path:
    return root / f"n{n}"


def save_ensemble(ens: SolutionEnsemble, directory: Path) -> dict:
    directory.mkdir(parents=True, exist_ok=True)
    members = {}
    for label, rec in ens.provenance.items():
        entry = asdict(rec)
        if label in ens.members:
            save_field(ens.members[label], directory / f"{label}.psf")
            entry["file"] = f"{label}.psf"
            (directory / f"convergence_{label}.csv").write_text(ens.logs[label].to_csv())
            _write_density_csv(ens.members[label], directory / f"density_{label}.csv")
        members[label] = entry
    g = ens.grid
    return {"grid": [g.nx, g.ny, list(g.extent)], "order": list(ens.provenance), "members": members}


def _write_density_csv(f, path: Path) -> None:
    """Cell-centre ``x,y,rho`` rows, ready for an isoline plotter."""
    X, Y = f.grid.centers()
    data = np.column_stack([X.ravel(), Y.ravel(), f.component(0).ravel()])
    np.savetxt(path, data, delimiter=",", header="x,y,rho", comments="", fmt="%.17g")


def load_ensemble(directory: Path, info: dict) -> SolutionEnsemble:
    nx, ny, extent = info["grid"]
    grid = make_grid(nx, ny, extent)
    ens = SolutionEnsemble(grid)
    for label in info.get("order", sorted(info["members"])):
        entry = info["members"][label]
        rec = MemberRecord(**{k: v for k, v in entry.items() if k != "file"})
        ens.provenance[label] = rec
        if entry.get("file"):
            path = directory / entry["file"]
            if not path.exists():
                raise ValidationError(f"missing field file {path}")
            f = load_field(path)
            if f.grid != grid:
                raise ValidationError(f"{path}: grid does not match the manifest")
            ens.members[label] = f
    return ens


def _write_report(directory: Path, rep) -> None:
    (directory / f"report_{rep.method}.json").write_text(rep.to_json() + "\n")
    (directory / f"report_{rep.method}.csv").write_text(rep.to_csv())


def _print_table(rep) -> None:
    cols = rep.columns()
    print(f"[{rep.method}]")
    print("  " + "  ".join(f"{c:>14}" for c in cols))
    for r in rep.rows():
        cells = []
        for c in cols:
            v = r.get(c)
            cells.append(f"{v:>14.6g}" if isinstance(v, float) else f"{'' if v is None else v!s:>14}")
        print("  " + "  ".join(cells))
    for key in ("verdict", "outlier", "center", "radius", "d_max"):
        if key in rep.metadata:
            print(f"  {key}: {rep.metadata[key]}")
    for note in rep.notes:
        print(f"  note: {note}")


# -- commands ----------------------------------------------------------------------

def cmd_verify_analytic(cfg: ExperimentConfig, args) -> int:
    pattern = cfg.build_pattern()
    print(ga.pattern_summary(pattern))
    res = ga.pattern_residuals(pattern)
    worst = max(res.values(), default=0.0)
    for k, v in res.items():
        print(f"  residual {k:<40} {v:.3e}")
    ok = worst < 1e-10
    print(f"verify-analytic: {'pass' if ok else 'FAIL'} (max residual {worst:.3e})")
    return EXIT_OK if ok else EXIT_VALIDATION


def _out_dir(cfg, args) -> Path:
    out = args.out or cfg.output_dir
    if not out:
        raise ValidationError("an output directory is required (--out or output_dir)")
    return Path(out)


def cmd_run_ensemble(cfg: ExperimentConfig, args) -> int:
    pattern = cfg.build_pattern()
    out = _out_dir(cfg, args)
    manifest_path = out / "manifest.json"
    if manifest_path.exists() and not args.force:
        raise ValidationError(f"{manifest_path} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": asdict(cfg), "grids": {}}
    diverged = False
    for n in cfg.grid_sizes:
        grid = make_grid(n, n)
        configs = [SolverConfig(s, grid, pattern, cfg.gas(), cfl=cfg.cfl, max_steps=cfg.max_steps,
                                steady_tol=cfg.steady_tol) for s in cfg.schemes]
        ens = run_ensemble(configs, workers=cfg.workers)
        manifest["grids"][str(n)] = save_ensemble(ens, _grid_dir(out, n))
        for label, rec in ens.provenance.items():
            print(f"  n={n} {label:<6} {rec.status:<10} steps={rec.steps}"
                  + (f"  {rec.error}" if rec.error else ""))
            diverged |= rec.status == "diverged"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_DIVERGENCE if diverged else EXIT_OK


def cmd_estimate(cfg: ExperimentConfig, args) -> int:
    pattern = cfg.build_pattern()
    out = _out_dir(cfg, args)
    src = Path(args.ensemble) if args.ensemble else out
    try:
        manifest = json.loads((src / "manifest.json").read_text())
    except OSError as exc:
        raise ValidationError(f"no ensemble manifest in {src}") from exc
    status = EXIT_OK
    for n_key, info in manifest["grids"].items():
        ens = load_ensemble(_grid_dir(src, int(n_key)), info)
        truth = ga.project_pattern(pattern, ens.grid)
        target = _grid_dir(out, int(n_key))
        target.mkdir(parents=True, exist_ok=True)
        meta = {"grid": [ens.grid.nx, ens.grid.ny], "pattern": pattern.kind, "mask": cfg.mask}
        basis = None
        for method in cfg.estimators:
            try:
                if method == "width":
                    rep = width_estimate(ens, cfg.mask, truth)
                elif method == "triangle":
                    rep = triangle_estimate(ens, cfg.mask, truth)
                else:
                    if basis is None:
                        basis = _basis(cfg, ens, pattern, target)
                    if method == "angle":
                        rep = angle_report(ens, basis, cfg.mask, truth)
                    else:
                        rep = _prager_synge(cfg, ens, basis, truth, target)
            except (EstimatorError, ValueError) as exc:
                log.error("%s estimator failed on n=%s: %s", method, n_key, exc)
                status = EXIT_ESTIMATOR
                continue
            rep.metadata.update(meta)
            _write_report(target, rep)
            _print_table(rep)
    return status


def _basis(cfg, ens, pattern, target: Path):
    base = SolverConfig(cfg.reference_scheme, ens.grid, pattern, cfg.gas(), max_steps=cfg.max_steps,
                        steady_tol=cfg.steady_tol)
    basis = build_error_basis(ens, cfg.reference_scheme, base, shared_base=cfg.defect_base,
                              workers=cfg.workers)
    bdir = target / "basis"
    bdir.mkdir(exist_ok=True)
    for label, e in basis.entries.items():
        save_field(e.delta, bdir / f"{label}_delta.psf")
        save_field(e.approx, bdir / f"{label}_approx.psf")
    if len(basis.entries) >= 2:
        labels, table = truncation_angle_table(basis, cfg.mask)
        (target / "truncation_angles.csv").write_text(angle_table_csv(labels, table))
    for label, why in basis.excluded.items():
        print(f"  basis: {label} excluded ({why})")
    return basis


def _prager_synge(cfg, ens, basis, truth, target: Path):
    sol, rep = prager_synge_solution(basis, ens, mask=cfg.mask, truth=truth)
    order = [k for k in ens.labels if k in basis]
    sizes = [n for n in cfg.basis_sizes if n + 1 <= len(order)]
    skipped = [n for n in cfg.basis_sizes if n + 1 > len(order)]
    if sizes:
        table = basis_size_table(basis, ens, order, sizes, mask=cfg.mask, truth=truth)
        (target / "report_prager_synge_sizes.csv").write_text(table.to_csv())
        rep.metadata["basis_sizes"] = {k: table.extra[k] | {"radius": table.estimates[k]} for k in table.labels}
        _print_table(table)
    if skipped:
        rep.notes.append(f"basis sizes {skipped} need more usable members than the {len(order)} available")
    return rep


def cmd_synthetic_suite(cfg: ExperimentConfig, args) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    result = run_suite(seed, cfg.trials)
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    out = args.out or cfg.output_dir
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "report_synthetic.json").write_text(text)
    print(text, end="")
    return EXIT_OK if result["all_passed"] else EXIT_ESTIMATOR


COMMANDS = {
    "verify-analytic": cmd_verify_analytic,
    "run-ensemble": cmd_run_ensemble,
    "estimate": cmd_estimate,
    "synthetic-suite": cmd_synthetic_suite,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prager-synge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        sp.add_argument("--seed", type=int, help="RNG seed (synthetic suite)")
        sp.add_argument("--ensemble", help="ensemble directory for 'estimate' (default: --out)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        return COMMANDS[args.command](cfg, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
