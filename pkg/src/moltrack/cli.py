"""Run tracking experiments on reaction networks from the command line.

Every subcommand reads a model (a path or a bundled model name), writes CSV
or JSON files into ``--out-dir`` and prints a JSON summary on stdout.

Exit codes: 0 success, 1 simulation failure, 2 invalid input,
3 bound unavailable for the given parameters.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import aggregate_trajectory, build_aggregate
from .bounds import BoundError, evaluate_bounds
from .fluid import FluidError, solve_fluid
from .modelfile import BUNDLED_MODELS, Model, ModelFileError, bundled_model, load_model
from .network import DELTA, build_augmented
from .paths import EmpiricalDistribution, count_transitions, distances, occupation_time, survival_curve
from .rng import child_seed
from .singlemol import SingleMoleculeError, build_limit_rates, simulate_y_batch
from .ssa import SimulationError, default_x0, resolve_tau0, ssa_batch, tracked_batch

__all__ = ["ExperimentConfig", "ConfigError", "run", "main", "MODES"]

MODES = ("ssa", "tracked", "fluid", "single", "aggregate", "bounds", "functional")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_NO_BOUND = 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: str
    mode: str
    V: float = 1000.0
    z0: list | None = None
    x0: list | None = None
    T: float = 1.0
    reps: int = 100
    seed: int = 0
    threads: int = 1
    grid: int = 101
    step: float | None = None
    tau0: str | None = None
    transition: tuple | None = None
    statuses: list | None = None
    epsilon: float | None = None
    gamma: float = 1.0
    nu: tuple = (None, None, None)
    t: float | None = None
    out_dir: str = "."
    engine: str = "auto"
    _model: Model | None = field(default=None, repr=False)

    def load(self) -> Model:
        if self._model is None:
            try:
                if Path(self.model).is_file():
                    self._model = load_model(self.model)
                elif self.model in BUNDLED_MODELS:
                    self._model = bundled_model(self.model)
                else:
                    raise ConfigError(
                        f"model {self.model!r} is neither a file nor a bundled model ({', '.join(BUNDLED_MODELS)})"
                    )
            except ModelFileError as exc:
                raise ConfigError(f"{self.model}: {exc}") from exc
        return self._model

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        model = self.load()
        net = model.network
        if not self.V >= 1:
            raise ConfigError("--V must be at least 1")
        if not self.T > 0:
            raise ConfigError("--T must be positive")
        if self.reps < 1:
            raise ConfigError("--reps must be at least 1")
        if self.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if self.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if self.grid < 2:
            raise ConfigError("--grid must be at least 2")
        for name, vec in (("z0", self.z0), ("x0", self.x0)):
            if vec is not None and len(vec) != net.dim:
                raise ConfigError(f"--{name} needs {net.dim} values ({', '.join(net.species)})")
            if vec is not None and min(vec) < 0:
                raise ConfigError(f"--{name} must be non-negative")
        needs_z = self.mode in ("fluid", "single", "aggregate", "bounds", "functional")
        if needs_z and self.z0 is None:
            raise ConfigError(f"mode {self.mode} needs --z0")
        if self.mode in ("ssa", "tracked") and self.z0 is None and self.x0 is None:
            raise ConfigError(f"mode {self.mode} needs --z0 or --x0")
        tracked_modes = ("tracked", "single", "aggregate", "functional")
        if self.mode in tracked_modes and model.schema is None:
            raise ConfigError(f"mode {self.mode} needs a model with statuses and transforms")
        if self.mode in ("tracked", "single", "functional") and self.tau0 is None:
            raise ConfigError(f"mode {self.mode} needs --tau0")
        if self.mode == "functional":
            if (self.transition is None) == (self.statuses is None):
                raise ConfigError("mode functional needs exactly one of --transition or --statuses")
        if self.mode == "bounds":
            if self.epsilon is None or not self.epsilon > 0:
                raise ConfigError("mode bounds needs a positive --epsilon")
            if not 0 < self.gamma <= 1:
                raise ConfigError("--gamma must lie in (0, 1]")
            if self.t is not None and not 0 <= self.t <= self.T:
                raise ConfigError("--t must lie in [0, T]")
            if any(v is not None for v in self.nu) and not all(v is not None and v > 0 for v in self.nu):
                raise ConfigError("--nu1, --nu2, --nu3 must be given together and be positive")
        if self.engine not in ("auto", "numba", "python"):
            raise ConfigError("--engine must be auto, numba or python")
        return self


# ---------------------------------------------------------------- helpers


def _tau0(schema, text):
    if text is None:
        return None
    if ":" not in text:
        return resolve_tau0(schema, text)
    dist = {}
    for part in text.split(","):
        name, _, p = part.partition(":")
        dist[name.strip()] = float(p)
    return dist


def _grid(cfg):
    return np.linspace(0.0, cfg.T, cfg.grid)


def _x0(cfg, net):
    if cfg.x0 is not None:
        return np.asarray(cfg.x0, np.int64)
    return default_x0(net, cfg.V, cfg.z0)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path: Path, header, rows):
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(map(_fmt, row)) + "\n")
    return str(path)


def _write_runs(path, grid, species, runs):
    rows = ([r, float(t), *map(float, runs[r, i])] for r in range(runs.shape[0]) for i, t in enumerate(grid))
    return _write_rows(path, ["run", "t", *species], rows)


def _write_mean(path, grid, species, mean):
    rows = ([float(t), *map(float, mean[i])] for i, t in enumerate(grid))
    return _write_rows(path, ["t", *species], rows)


def _status_name(schema, tau):
    return "DELTA" if tau == DELTA else schema.statuses[tau]


def _fluid(cfg, net):
    return solve_fluid(net, cfg.z0, cfg.T, cfg.step)


# ---------------------------------------------------------------- modes


def _run_fluid(cfg, model, out):
    sol = _fluid(cfg, model.network)
    grid = _grid(cfg)
    files = [str(sol.to_csv(out / "fluid.csv", grid))]
    return {
        "files": files,
        "min_component": sol.min_component,
        "halving_error": sol.halving_error,
        "final": dict(zip(model.network.species, map(float, sol.values[-1]))),
    }


def _run_ssa(cfg, model, out):
    net = model.network
    grid = _grid(cfg)
    x0 = _x0(cfg, net)
    runs = ssa_batch(net, cfg.V, x0, cfg.T, cfg.reps, cfg.seed, threads=cfg.threads, grid=grid, engine=cfg.engine)
    conc = runs / cfg.V
    mean = conc.mean(axis=0)
    files = [
        _write_runs(out / "ssa_runs.csv", grid, net.species, conc),
        _write_mean(out / "ssa_mean.csv", grid, net.species, mean),
    ]
    return {"files": files, "final_mean": dict(zip(net.species, map(float, mean[-1])))}


def _run_tracked(cfg, model, out):
    net, schema = model.network, model.schema
    aug = build_augmented(net, schema)
    grid = _grid(cfg)
    tau0 = _tau0(schema, cfg.tau0)
    paths = tracked_batch(
        aug, cfg.V, _x0(cfg, net), tau0, cfg.T, cfg.reps, cfg.seed,
        threads=cfg.threads, grid=grid, keep_species=False, engine=cfg.engine,
    )
    status = np.stack([p.grid_status for p in paths])
    rows = ([r, float(t), _status_name(schema, int(status[r, i]))] for r in range(len(paths)) for i, t in enumerate(grid))
    files = [_write_rows(out / "tracked_status.csv", ["run", "t", "status"], rows)]
    occupancy = {_status_name(schema, s): float(np.mean(status[:, -1] == s)) for s in [*range(schema.n_statuses), DELTA]}
    summary = {"files": files, "final_status_fraction": occupancy}
    if not isinstance(tau0, dict):
        curve = survival_curve([p.status_path for p in paths], tau0, grid)
        files.append(_write_rows(out / "survival.csv", ["t", "fraction"], zip(map(float, grid), map(float, curve))))
        summary["final_survival"] = float(curve[-1])
    return summary


def _run_single(cfg, model, out):
    net, schema = model.network, model.schema
    aug = build_augmented(net, schema)
    sol = _fluid(cfg, net)
    table = build_limit_rates(aug)
    tau0 = _tau0(schema, cfg.tau0)
    grid = _grid(cfg)
    paths = simulate_y_batch(table, sol, tau0, cfg.reps, cfg.seed, threads=cfg.threads, engine=cfg.engine)
    files = []
    summary = {"files": files}
    status = np.stack([p.state_at(grid) for p in paths])
    occupancy = {_status_name(schema, s): float(np.mean(status[:, -1] == s)) for s in [*range(schema.n_statuses), DELTA]}
    summary["final_status_fraction"] = occupancy
    rows = ([r, float(t), _status_name(schema, int(status[r, i]))] for r in range(len(paths)) for i, t in enumerate(grid))
    files.append(_write_rows(out / "single_status.csv", ["run", "t", "status"], rows))
    if not isinstance(tau0, dict):
        curve = survival_curve(paths, tau0, grid)
        files.append(_write_rows(out / "survival.csv", ["t", "fraction"], zip(map(float, grid), map(float, curve))))
        summary["final_survival"] = float(curve[-1])
    return summary


def _run_aggregate(cfg, model, out):
    net, schema = model.network, model.schema
    aug = build_augmented(net, schema)
    sol = _fluid(cfg, net)
    table = build_limit_rates(aug)
    grid = _grid(cfg)
    tracked = [net.species[s] for s in schema.tracked_species()]
    runs = []
    for r in range(cfg.reps):
        ens = build_aggregate(table, sol, cfg.z0, cfg.V, seed=child_seed(cfg.seed, r), threads=cfg.threads, engine=cfg.engine)
        runs.append(aggregate_trajectory(ens, grid))
    runs = np.stack(runs)
    mean = runs.mean(axis=0)
    files = [
        _write_runs(out / "aggregate_runs.csv", grid, tracked, runs),
        _write_mean(out / "aggregate_mean.csv", grid, tracked, mean),
    ]
    return {"files": files, "final_mean": dict(zip(tracked, map(float, mean[-1])))}


def _functional_values(cfg, schema, status_paths):
    if cfg.transition is not None:
        a, b = (schema.status_index(s) for s in cfg.transition)
        return EmpiricalDistribution.discrete(count_transitions(p, a, b) for p in status_paths)
    wanted = [schema.status_index(s) for s in cfg.statuses]
    return EmpiricalDistribution.continuous([occupation_time(p, wanted, cfg.T) for p in status_paths])


def _run_functional(cfg, model, out):
    net, schema = model.network, model.schema
    aug = build_augmented(net, schema)
    tau0 = _tau0(schema, cfg.tau0)
    sol = _fluid(cfg, net)
    table = build_limit_rates(aug)
    tracked = tracked_batch(
        aug, cfg.V, _x0(cfg, net), tau0, cfg.T, cfg.reps, cfg.seed,
        threads=cfg.threads, keep_species=False, engine=cfg.engine,
    )
    limit = simulate_y_batch(table, sol, tau0, cfg.reps, cfg.seed, threads=cfg.threads, engine=cfg.engine)
    a = _functional_values(cfg, schema, [p.status_path for p in tracked])
    b = _functional_values(cfg, schema, limit)
    files = [str(a.to_csv(out / "functional_tracked.csv")), str(b.to_csv(out / "functional_limit.csv"))]
    kind = "tv" if a.kind == "discrete" else "ks"
    return {"files": files, "distance": distances(a, b), "distance_kind": kind}


def _run_bounds(cfg, model, out):
    net = model.network
    aug = build_augmented(net, model.schema) if model.schema is not None else None
    sol = _fluid(cfg, net)
    report = evaluate_bounds(net, aug, sol, cfg.V, cfg.epsilon, cfg.t, gamma=cfg.gamma, nu=cfg.nu)
    data = report.as_dict()
    path = out / "bounds.json"
    path.write_text(json.dumps(data, indent=2))
    if report.p_bound is None:
        raise BoundError(report.errors["p_bound"])
    scalars = {k: v for k, v in data["quantities"].items() if not isinstance(v, list)}
    return {"files": [str(path)], "report": {**data, "quantities": scalars}}


_RUNNERS = {
    "fluid": _run_fluid,
    "ssa": _run_ssa,
    "tracked": _run_tracked,
    "single": _run_single,
    "aggregate": _run_aggregate,
    "functional": _run_functional,
    "bounds": _run_bounds,
}


def run(config: ExperimentConfig) -> dict:
    """Validate ``config``, run its mode and return the summary."""
    config.validate()
    model = config.load()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        summary = _RUNNERS[config.mode](config, model, out)
    except (KeyError, ModelFileError) as exc:
        raise ConfigError(str(exc)) from exc
    summary = {"mode": config.mode, "model": model.name or config.model, "seed": config.seed, **summary}
    summary["runtime_s"] = time.perf_counter() - start
    return summary


# ---------------------------------------------------------------- argv


def _floats(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    vals = _floats(text)
    if any(v != math.floor(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in vals]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help=f"model file or bundled name ({', '.join(BUNDLED_MODELS)})")
    common.add_argument("--V", type=float, default=1000.0, help="system volume")
    common.add_argument("--z0", type=_floats, help="initial concentrations, comma-separated")
    common.add_argument("--x0", type=_ints, help="initial counts, comma-separated")
    common.add_argument("--T", type=float, default=1.0, help="time horizon")
    common.add_argument("--reps", type=int, default=100, help="replications")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--grid", type=int, default=101, help="number of output time points")
    common.add_argument("--step", type=float, help="fluid RK4 step")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--engine", default="auto", choices=("auto", "numba", "python"))
    p = argparse.ArgumentParser(prog="moltrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="mode", required=True)
    sub.add_parser("fluid", parents=[common], help="integrate the fluid limit")
    sub.add_parser("ssa", parents=[common], help="Gillespie runs on a time grid")
    for name, text in (("tracked", "tracked Gillespie runs"), ("single", "limit single-molecule paths")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--tau0", required=True, help="initial status, or name:p,name:p")
    sub.add_parser("aggregate", parents=[common], help="aggregate approximation runs")
    fp = sub.add_parser("functional", parents=[common], help="compare a path functional under both processes")
    fp.add_argument("--tau0", required=True, help="initial status, or name:p,name:p")
    g = fp.add_mutually_exclusive_group(required=True)
    g.add_argument("--transition", help="count jumps FROM,TO")
    g.add_argument("--statuses", help="occupation time of a comma-separated status set")
    bp = sub.add_parser("bounds", parents=[common], help="evaluate the explicit error bounds")
    bp.add_argument("--epsilon", type=float, required=True, help="tube radius")
    bp.add_argument("--gamma", type=float, default=1.0)
    bp.add_argument("--t", type=float, help="horizon of the bound (default T)")
    for k in (1, 2, 3):
        bp.add_argument(f"--nu{k}", type=float)
    return p


def _config(args) -> ExperimentConfig:
    transition = None
    if getattr(args, "transition", None):
        parts = [s.strip() for s in args.transition.split(",")]
        if len(parts) != 2:
            raise ConfigError("--transition needs exactly two statuses FROM,TO")
        transition = tuple(parts)
    statuses = None
    if getattr(args, "statuses", None):
        statuses = [s.strip() for s in args.statuses.split(",")]
    return ExperimentConfig(
        model=args.model,
        mode=args.mode,
        V=args.V,
        z0=args.z0,
        x0=args.x0,
        T=args.T,
        reps=args.reps,
        seed=args.seed,
        threads=args.threads,
        grid=args.grid,
        step=args.step,
        tau0=getattr(args, "tau0", None),
        transition=transition,
        statuses=statuses,
        epsilon=getattr(args, "epsilon", None),
        gamma=getattr(args, "gamma", 1.0),
        nu=tuple(getattr(args, f"nu{k}", None) for k in (1, 2, 3)),
        t=getattr(args, "t", None),
        out_dir=args.out_dir,
        engine=args.engine,
    )


def _fail(code, kind, message):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        summary = run(_config(args))
    except BoundError as exc:
        return _fail(EXIT_NO_BOUND, "bound unavailable", str(exc))
    except (ConfigError, ValueError, TypeError) as exc:
        return _fail(EXIT_INVALID, "invalid input", str(exc))
    except (SimulationError, SingleMoleculeError, FluidError) as exc:
        return _fail(EXIT_FAILURE, "simulation failed", str(exc))
    print(json.dumps(summary, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
