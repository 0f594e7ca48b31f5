"""``rpi-sim`` command-line entry point.

Exit codes: 0 success, 1 invalid configuration or input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, SimConfig, parse_config
from .core import (
    MeasurementSpec,
    NumericalError,
    RangeError,
    Readout,
    TimeGrid,
    pure_density,
    purity,
    trace_distance,
)
from .experiments import (
    EXPERIMENTS,
    ZENO_GRID,
    decoherence_experiment,
    error_scaling_experiment,
    projective_limit_experiment,
    zeno_experiment,
)
from .nonselective import ensemble_average, master_series
from .output import Table, emit_csv, emit_svg
from .sampler import run_ensemble
from .selective import propagate_selective, readout_probability_density

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _spec(cfg: SimConfig, steps: int | None = None) -> MeasurementSpec:
    steps = steps or cfg.steps
    if steps is None:
        return MeasurementSpec.with_default_steps(cfg.observable, cfg.kappa, cfg.T, H=cfg.hamiltonian)
    return MeasurementSpec(cfg.observable, cfg.kappa, TimeGrid(cfg.T, steps))


def read_readout_file(path: Path) -> np.ndarray:
    """Readout values from a CSV file with a header containing an ``a`` column."""
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read readout file {path}: {exc}") from exc
    if not rows or "a" not in rows[0]:
        raise ConfigError(f"readout file {path} needs a header with an 'a' column and >= 1 row")
    try:
        return np.array([float(r["a"]) for r in rows])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"readout file {path}: non-numeric value ({exc})") from exc


def _rho_table(rho: np.ndarray, stderr: np.ndarray | None = None) -> Table:
    cols = ["i", "j", "re", "im"] + (["stderr"] if stderr is not None else [])
    t = Table(cols)
    d = rho.shape[0]
    for i in range(d):
        for j in range(d):
            row = [i, j, float(rho[i, j].real), float(rho[i, j].imag)]
            if stderr is not None:
                row.append(float(stderr[i, j]))
            t.append(*row)
    return t


def _run_selective(cfg: SimConfig):
    values = read_readout_file(cfg.readout_file)
    if cfg.steps is not None and cfg.steps != values.size:
        raise ConfigError(
            f"readout file has {values.size} values but measurement.steps is {cfg.steps}"
        )
    spec = _spec(cfg, steps=values.size)
    readout = Readout(spec.grid, values)
    psi = propagate_selective(cfg.initial_state, readout, spec, cfg.hamiltonian)
    p = readout_probability_density(psi)
    state = Table(["index", "re", "im", "abs2"])
    for i, z in enumerate(psi):
        state.append(i, float(z.real), float(z.imag), float(abs(z) ** 2))
    prob = Table(["P", "log_P", "kappa", "T", "steps"])
    prob.append(p, math.log(p) if p > 0 else -math.inf, cfg.kappa, cfg.T, spec.grid.steps)
    tables = {"selective_state": state, "selective_probability": prob}
    plots = {"readout": ({"a(t)": (list(spec.grid.times[:-1]), list(values))}, "t", "a")}
    summary = {"P": p, "steps": spec.grid.steps, "norm_squared": p}
    return tables, plots, summary


def _run_master(cfg: SimConfig):
    spec = _spec(cfg)
    times, states = master_series(pure_density(cfg.initial_state), spec, cfg.hamiltonian)
    d = spec.dim
    cols = ["t", "trace", "purity"] + [f"rho_{i}_{j}_{part}" for i in range(d) for j in range(d)
                                       for part in ("re", "im")]
    table = Table(cols)
    for t, rho in zip(times, states):
        flat = [float(getattr(rho[i, j], part)) for i in range(d) for j in range(d)
                for part in ("real", "imag")]
        table.append(float(t), float(np.trace(rho).real), purity(rho), *flat)
    series = {f"rho_{i}{i}": (list(times), list(states[:, i, i].real)) for i in range(d)}
    series["purity"] = (list(times), [purity(r) for r in states])
    summary = {"steps": spec.grid.steps, "final_purity": purity(states[-1])}
    return {"master_rho": table}, {"master": (series, "t", "population / purity")}, summary


def _run_ensemble(cfg: SimConfig, threads: int):
    spec = _spec(cfg)
    trajs = run_ensemble(cfg.initial_state, spec, cfg.hamiltonian, cfg.n_traj, cfg.seed,
                         threads=threads)
    est = ensemble_average(trajs)
    _, states = master_series(pure_density(cfg.initial_state), spec, cfg.hamiltonian,
                              every=spec.grid.steps)
    rho_m = states[-1]
    td = trace_distance(est.rho, rho_m)
    err = est.trace_distance_error()
    readouts = Table(["traj", "step", "t", "a"])
    finals = Table(["traj", "index", "re", "im", "log_prob_density"])
    t0 = spec.grid.times[:-1]
    for i, tr in enumerate(trajs):
        for k, a in enumerate(tr.readout.values):
            readouts.append(i, k, float(t0[k]), float(a))
        for j, z in enumerate(tr.final_state):
            finals.append(i, j, float(z.real), float(z.imag), tr.log_prob_density)
    summary_t = Table(["n_traj", "steps", "trace_distance", "mc_error", "within_3_mc_error"])
    summary_t.append(cfg.n_traj, spec.grid.steps, td, err, bool(td < 3 * err))
    tables = {
        "ensemble_readouts": readouts,
        "ensemble_final_states": finals,
        "ensemble_rho": _rho_table(est.rho, est.stderr),
        "master_rho_final": _rho_table(rho_m),
        "ensemble_summary": summary_t,
    }
    shown = trajs[: min(5, len(trajs))]
    plots = {"ensemble_readouts": ({f"traj {i}": (list(t0), list(tr.readout.values))
                                    for i, tr in enumerate(shown)}, "t", "a")}
    summary = {"trace_distance": td, "mc_error": err, "steps": spec.grid.steps}
    return tables, plots, summary


def _run_experiment(cfg: SimConfig, threads: int):
    n_traj = cfg.n_traj or 1000
    p = cfg.params
    if cfg.mode == "zeno":
        omega = p["omega"]
        ratios = p.get("kappa_over_omega", list(ZENO_GRID))
        res = zeno_experiment(omega, [omega * r for r in ratios], p.get("T"), n_traj, cfg.seed,
                              threads=threads)
    elif cfg.mode == "decoherence":
        res = decoherence_experiment(cfg.kappa, cfg.T, cfg.hamiltonian, cfg.observable,
                                     steps=cfg.steps)
    elif cfg.mode == "error_scaling":
        level = p.get("level", 0)
        if level >= cfg.observable.dim:
            raise ConfigError(f"run.params.level {level} out of range for dim {cfg.observable.dim}")
        res = error_scaling_experiment(cfg.kappa, p["T_values"], n_traj, cfg.seed,
                                       cfg.observable, level, threads=threads)
    else:
        res = projective_limit_experiment(p["kappa_values"], cfg.T, cfg.initial_state,
                                          cfg.observable, n_traj, cfg.seed, threads=threads)
    plots = {res.name: (res.series, res.xlabel, res.ylabel, res.logx, res.logy)}
    return {res.name: res.table}, plots, res.summary


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run(cfg: SimConfig, threads: int = 1) -> dict:
    """Execute ``cfg``, write its outputs and ``manifest.json``; return the manifest."""
    started = time.perf_counter()
    if cfg.mode == "selective":
        tables, plots, summary = _run_selective(cfg)
    elif cfg.mode == "master":
        tables, plots, summary = _run_master(cfg)
    elif cfg.mode == "ensemble":
        tables, plots, summary = _run_ensemble(cfg, threads)
    else:
        tables, plots, summary = _run_experiment(cfg, threads)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if "csv" in cfg.formats:
        for name, table in tables.items():
            written.append(emit_csv(table, out / f"{name}.csv"))
    if "json" in cfg.formats:
        path = out / f"{cfg.mode}_summary.json"
        path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        written.append(path)
    if "svg" in cfg.formats:
        for name, spec in plots.items():
            series, xlabel, ylabel, *scales = spec
            logx, logy = (scales + [False, False])[:2]
            written.append(emit_svg(series, out / f"{name}.svg", xlabel=xlabel, ylabel=ylabel,
                                    title=name, logx=logx, logy=logy))
    manifest = {
        "tool": "rpi-sim",
        "tool_version": __version__,
        "mode": cfg.mode,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "threads": threads,
        "started_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "wall_clock_seconds": time.perf_counter() - started,
        "files": {p.name: _sha256(p) for p in sorted(written)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("RPI_SIM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"RPI_SIM_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise ConfigError("RPI_SIM_THREADS must be >= 1")
        return n
    return 1


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _seed(text: str) -> int:
    n = int(text)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rpi-sim",
        description="Continuous quantum measurement simulator (restricted path integrals).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a configuration")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    p_run.add_argument("--seed", type=_seed, help="override run.seed")
    p_run.add_argument("--threads", type=_positive_int,
                       help="worker threads for trajectory sampling (default: $RPI_SIM_THREADS or 1)")
    p_check = sub.add_parser("check", help="validate a configuration without running it")
    p_check.add_argument("config", type=Path)
    p_exp = sub.add_parser("experiments", help="experiment catalogue")
    p_exp.add_argument("action", choices=["list"])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "experiments":
            for name, (_, description) in EXPERIMENTS.items():
                print(f"{name}\t{description}")
            return EXIT_OK
        cfg = parse_config(args.config)
        if args.command == "check":
            print(f"ok: mode={cfg.mode} dim={cfg.dim} config_hash={cfg.config_hash}")
            return EXIT_OK
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output_dir = args.out
        manifest = run(cfg, threads=_threads(args.threads))
        print(f"wrote {len(manifest['files'])} files to {cfg.output_dir}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"rpi-sim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, RangeError, FloatingPointError) as exc:
        print(f"rpi-sim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"rpi-sim: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"rpi-sim: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
