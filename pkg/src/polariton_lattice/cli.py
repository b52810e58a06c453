"""Command-line front end: one config file in, one run directory out."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, exact, variational
from .bands import DARK_UPPER, solve_bands, wannier_transform
from .config import RunPlan, resolved_config_text, validate_config
from .errors import ConfigError, DimensionError, LabellingError, NumericalError
from .operators import JumpSet
from .pipeline import build_model

MODES = ("bands", "model", "exact", "wfmc", "variational", "g2-exact", "g2-variational", "benchmark")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("polariton_lattice")


def _versions() -> dict:
    import numba
    import scipy

    return {
        "polariton_lattice": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _run_dir(root: Path, cfg_hash: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = root / f"{cfg_hash}_{stamp}"
    path, k = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _time_grid(plan: RunPlan, final: float) -> np.ndarray:
    return np.linspace(0.0, final, plan.n_samples)


def _mode_bands(cfg, plan, out: Path) -> list:
    bs = solve_bands(cfg, require_dark=False)
    bs.to_csv(out / "bands.csv")
    files = ["bands.csv"]
    if len(bs.dark_bands) != 2:
        raise LabellingError("dark-band labelling failed: " + "; ".join(bs.notes))
    wb = wannier_transform(bs, DARK_UPPER, cfg)
    wb.to_csv(out / "wannier.csv")
    return files + ["wannier.csv"]


def _model(cfg, out: Path):
    pipe = build_model(cfg)
    pipe.bands.to_csv(out / "bands.csv")
    pipe.wannier.to_csv(out / "wannier.csv")
    pipe.model.save(out / "model.json")
    return pipe.model, ["bands.csv", "wannier.csv", "model.json"]


def _benchmark_csv(path: Path, t, columns: dict):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *columns])
        for row in zip(t, *columns.values()):
            w.writerow([f"{x:.17g}" for x in row])


def execute(mode: str, cfg, plan: RunPlan, out: Path) -> list:
    """Run one mode and return the names of the files written to ``out``."""
    if mode == "bands":
        return _mode_bands(cfg, plan, out)
    model, files = _model(cfg, out)
    if mode == "model":
        return files
    jumps = JumpSet.from_model(model)
    grid = _time_grid(plan, plan.t_final)
    if mode == "exact":
        series, _ = exact.integrate_me(model, jumps, t_grid=grid, dt=plan.dt)
        series.to_csv(out / "dynamics.csv")
        return files + ["dynamics.csv"]
    if mode == "wfmc":
        series = exact.wfmc_run(model, jumps, t_grid=grid, n_traj=plan.n_traj, seed=plan.seed, dt=plan.dt)
        series.to_csv(out / "dynamics.csv")
        return files + ["dynamics.csv"]
    if mode == "variational":
        run = variational.sweep_evolve(model, jumps, None, grid, tau=plan.tau, n_sweeps=plan.n_sweeps)
        run.series.to_csv(out / "var_dynamics.csv")
        return files + ["var_dynamics.csv"]
    tau_grid = _time_grid(plan, plan.tau_final)
    if mode == "g2-exact":
        g2 = exact.g2_exact(model, jumps, tau_grid, dt=plan.dt)
        g2.to_csv(out / "g2.csv")
        return files + ["g2.csv"]
    if mode == "g2-variational":
        ss = variational.variational_steady_state(model, jumps, tau=plan.tau, t_max=plan.steady_t_max,
                                                  n_sweeps=plan.n_sweeps)
        if not ss.stats["converged"]:
            raise NumericalError(f"variational steady state not reached by t={plan.steady_t_max:g}")
        g2 = variational.g2_variational(model, jumps, ss.final, tau_grid, tau=plan.tau, n_sweeps=plan.n_sweeps)
        g2.to_csv(out / "var_g2.csv")
        return files + ["var_g2.csv"]
    if mode == "benchmark":
        ex, _ = exact.integrate_me(model, jumps, t_grid=grid, dt=plan.dt)
        wf = exact.wfmc_run(model, jumps, t_grid=grid, n_traj=plan.n_traj, seed=plan.seed, dt=plan.dt)
        var = variational.sweep_evolve(model, jumps, None, grid, tau=plan.tau, n_sweeps=plan.n_sweeps)
        _benchmark_csv(out / "benchmark.csv", grid, {
            "i_out_exact": ex["i_out"],
            "i_out_wfmc": wf["i_out"],
            "i_out_wfmc_stderr": wf.stderr["i_out"],
            "i_out_variational": var.series["i_out"],
        })
        return files + ["benchmark.csv"]
    raise ConfigError(f"unknown mode {mode!r}", keys=["mode"])


def run(config_path, mode: str, out_root="runs", seed: int | None = None) -> tuple[int, Path | None]:
    """Run ``mode`` on ``config_path``; returns ``(exit_code, run_directory)``."""
    started = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat()
    try:
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}", keys=["mode"])
        cfg, plan = validate_config(config_path)
        if seed is not None:
            cfg = cfg.replace(seed=int(seed))
            plan = dataclasses.replace(plan, seed=int(seed))
    except (ConfigError, DimensionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None

    out = _run_dir(Path(out_root), cfg.config_hash())
    (out / "config.ini").write_text(resolved_config_text(cfg, plan))
    manifest = {
        "config_hash": cfg.config_hash(),
        "seed": plan.seed,
        "mode": mode,
        "versions": _versions(),
        "started": stamp,
        "config_file": str(config_path),
    }
    code = EXIT_OK
    files = []
    try:
        files = execute(mode, cfg, plan, out)
    except (ConfigError, DimensionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
        code = EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
        code = EXIT_NUMERICAL
        files = [p.name for p in sorted(out.glob("*.csv"))]
    manifest["elapsed_s"] = time.perf_counter() - started
    manifest["exit_code"] = code
    manifest["files"] = {name: _sha256(out / name) for name in files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return code, out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polariton-lattice", description=__doc__)
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="INI config file")
    parser.add_argument("--out", default="runs", help="parent directory for run folders")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    code, out = run(args.config, args.mode, args.out, args.seed)
    if out is not None:
        print(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
