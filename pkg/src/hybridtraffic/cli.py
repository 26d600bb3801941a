"""Command-line interface: run, sweep, optimize, validate, wasserstein."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from . import __version__
from .errors import ConfigError, DomainError, OptimizationFailed

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_SIMULATION = 3

OUT_ENV = "HYBRIDTRAFFIC_OUT"

log = logging.getLogger("hybridtraffic")


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _add_scenario_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("config", nargs="?", help="scenario YAML file")
    g.add_argument("--preset", help="built-in scenario name")


def _add_out_args(p):
    p.add_argument("--out", help="output directory (default: $%s or ./runs, plus a run name)" % OUT_ENV)
    p.add_argument("--seed", type=int, default=None, help="base seed (default: the config's seed)")


def build_parser():
    parser = argparse.ArgumentParser(prog="hybridtraffic", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run seeded trials of one scenario")
    _add_scenario_args(p)
    _add_out_args(p)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--horizon", type=float, default=None, help="override the horizon in seconds")
    p.add_argument("--trajectory", action="store_true", help="also write the first trial's trajectory")

    p = sub.add_parser("sweep", help="run trials for several scenarios (default: the three truck-penetration presets)")
    p.add_argument("configs", nargs="*", help="scenario YAML files")
    _add_out_args(p)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--horizon", type=float, default=None)

    p = sub.add_parser("optimize", help="optimize AV controls")
    _add_scenario_args(p)
    _add_out_args(p)
    p.add_argument("--cost", choices=("none", "tracking", "spread"), default="tracking")
    p.add_argument("--v-ref", type=float, default=3.0)
    p.add_argument("--knots", type=int, default=4)
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--grid", type=int, default=21, help="constant-control grid size for the reference margin")

    p = sub.add_parser("validate", help="check a scenario file without simulating")
    _add_scenario_args(p)

    p = sub.add_parser("wasserstein", help="generalized Wasserstein distance between two atom CSVs (x,v,mass)")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--a", type=float, default=1.0, help="creation/destruction cost")
    p.add_argument("--b", type=float, default=1.0, help="transport cost factor")
    p.add_argument("--ring-length", type=float, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _load_config(args):
    from .scenarios import ScenarioConfig, preset

    if args.preset:
        try:
            return preset(args.preset)
        except KeyError as exc:
            raise CliError(EXIT_VALIDATION, str(exc.args[0])) from None
    if not args.config:
        raise CliError(EXIT_VALIDATION, "need a config file or --preset")
    path = Path(args.config)
    if not path.is_file():
        raise CliError(EXIT_IO, f"config file not found: {path}")
    try:
        return ScenarioConfig.load(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None


def _out_dir(args, name):
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUT_ENV, "runs"))
    return root / name


class _Staging:
    """Write into a temporary directory and move it into place on success."""

    def __init__(self, target):
        self.target = Path(target)

    def __enter__(self):
        parent = self.target.parent
        try:
            parent.mkdir(parents=True, exist_ok=True)
            self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=parent))
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot create output directory {self.target}: {exc}") from None
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        try:
            self.target.mkdir(parents=True, exist_ok=True)
            for f in self.tmp.iterdir():
                os.replace(f, self.target / f.name)
            self.tmp.rmdir()
        except OSError as err:
            shutil.rmtree(self.tmp, ignore_errors=True)
            raise CliError(EXIT_IO, f"cannot write outputs to {self.target}: {err}") from None
        return False


def _manifest(args, cfg_dicts, seeds, extra=None):
    m = {
        "version": __version__,
        "command": args.command,
        "argv": list(args.argv),
        "configs": cfg_dicts,
        "seeds": seeds,
        "seed_derivation": "trial seed = base seed + trial index; one numpy Generator per trial drives init and all decisions",
    }
    if extra:
        m.update(extra)
    return m


def _meta(cfg, base_seed, horizon):
    return {"scenario": cfg.name, "base_seed": base_seed, "horizon_s": float(horizon), "dt_s": float(cfg.dt)}


def _run_one_config(cfg, args, out, base_seed):
    from .export import TRAJECTORY_COLUMNS, trajectory_rows, write_csv, write_trial_outputs
    from .scenarios import run_trials, simulate_scenario

    if args.trials < 1:
        raise CliError(EXIT_VALIDATION, "--trials must be >= 1")
    if args.horizon is not None:
        try:
            cfg = cfg.replace(horizon=args.horizon)
        except ConfigError as exc:
            raise CliError(EXIT_VALIDATION, str(exc)) from None
    result = run_trials(cfg, args.trials, base_seed, jobs=max(1, args.jobs))
    meta = _meta(cfg, base_seed, cfg.horizon)
    files = write_trial_outputs(out, result, args.format, meta)
    if getattr(args, "trajectory", False):
        traj, _ = simulate_scenario(cfg, seed=base_seed)
        write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, trajectory_rows(traj), meta)
        files.append("trajectory.csv")
    failed = [{"trial": t.trial, "seed": t.seed, "failure": t.failure} for t in result.failed]
    return cfg, result, files, failed


def cmd_run(args):
    from .export import write_json

    cfg = _load_config(args)
    base_seed = cfg.seed if args.seed is None else args.seed
    out = _out_dir(args, f"run-{cfg.name}-seed{base_seed}")
    with _Staging(out) as tmp:
        cfg, result, files, failed = _run_one_config(cfg, args, tmp, base_seed)
        seeds = [base_seed + i for i in range(args.trials)]
        write_json(
            tmp / "manifest.json",
            _manifest(args, [cfg.to_dict()], seeds, {"files": files, "failed_trials": failed}),
        )
    print(f"wrote {out} ({len(result.ok)} ok, {len(failed)} failed)")
    return EXIT_SIMULATION if failed and not result.ok else EXIT_OK


def cmd_sweep(args):
    from .export import write_json
    from .scenarios import ScenarioConfig, paper_scenarios

    if args.configs:
        cfgs = []
        for c in args.configs:
            if not Path(c).is_file():
                raise CliError(EXIT_IO, f"config file not found: {c}")
            cfgs.append(ScenarioConfig.load(c))
    else:
        cfgs = paper_scenarios()
    base_seed = 0 if args.seed is None else args.seed
    out = _out_dir(args, f"sweep-seed{base_seed}")
    summary = {}
    all_failed = True
    with _Staging(out) as tmp:
        for cfg in cfgs:
            sub = tmp / cfg.name
            sub.mkdir()
            cfg2, result, files, failed = _run_one_config(cfg, args, sub, base_seed)
            all_failed = all_failed and not result.ok
            summary[cfg.name] = {"config": cfg2.to_dict(), "files": files, "failed_trials": failed}
        seeds = [base_seed + i for i in range(args.trials)]
        write_json(tmp / "manifest.json", _manifest(args, [s["config"] for s in summary.values()], seeds, {"scenarios": summary}))
    print(f"wrote {out}")
    return EXIT_SIMULATION if all_failed else EXIT_OK


def cmd_optimize(args):
    from .control import RunningCost, constant_grid_search, optimize_controls
    from .core import AV
    from .export import write_csv, write_json

    cfg = _load_config(args)
    if cfg.counts.get(AV, 0) < 1:
        raise CliError(EXIT_VALIDATION, "counts.0: optimization needs at least one AV")
    if args.knots < 1 or args.budget < 1:
        raise CliError(EXIT_VALIDATION, "--knots and --budget must be >= 1")
    seed = cfg.seed if args.seed is None else args.seed
    horizon = cfg.horizon if args.horizon is None else args.horizon
    rc = RunningCost(args.cost, args.v_ref)
    out = _out_dir(args, f"optimize-{cfg.name}-{args.cost}-seed{seed}")
    with _Staging(out) as tmp:
        try:
            res = optimize_controls(cfg, rc, args.knots, args.budget, seed=seed, horizon=horizon)
        except OptimizationFailed as exc:
            raise CliError(EXIT_SIMULATION, str(exc)) from None
        ref_cost, ref_value = constant_grid_search(cfg, rc, args.grid, horizon, seed)
        res.signal.to_json(tmp / "control.json")
        write_csv(
            tmp / "history.csv",
            ("evaluation", "cost", "best", "step"),
            res.history_rows(),
            {"scenario": cfg.name, "cost": args.cost, "seed": seed, "horizon_s": float(horizon), "dt_s": float(cfg.dt)},
        )
        extra = {
            "best_cost": res.best.as_dict(),
            "evaluations": res.evaluations,
            "constant_grid_reference": {"cost": ref_cost, "value": ref_value, "grid_size": args.grid},
            "margin_vs_constant_grid": ref_cost - res.best.total,
            "running_cost": {"kind": rc.kind, "v_ref": rc.v_ref},
        }
        write_json(tmp / "manifest.json", _manifest(args, [cfg.to_dict()], [seed], extra))
    print(f"best cost {res.best.total!r} (constant-grid reference {ref_cost!r}); wrote {out}")
    return EXIT_OK


def cmd_validate(args):
    cfg = _load_config(args)
    print(f"{cfg.name}: ok")
    return EXIT_OK


def _read_atoms(path):
    import csv

    from .core import DiscreteMeasure

    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_IO, f"file not found: {p}")
    atoms = []
    with open(p, newline="") as fh:
        rows = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
        for n, r in enumerate(rows, start=2):
            try:
                atoms.append((float(r["x"]), float(r["v"]), float(r.get("mass") or 1.0)))
            except (KeyError, TypeError, ValueError):
                raise CliError(EXIT_VALIDATION, f"{p}: line {n}: need numeric columns x, v, mass") from None
    try:
        return DiscreteMeasure.from_atoms(atoms)
    except DomainError as exc:
        raise CliError(EXIT_VALIDATION, f"{p}: {exc}") from None


def cmd_wasserstein(args):
    from .measures import generalized_wasserstein

    mu = _read_atoms(args.first)
    nu = _read_atoms(args.second)
    try:
        d = generalized_wasserstein(mu, nu, args.a, args.b, args.ring_length)
    except DomainError as exc:
        raise CliError(EXIT_VALIDATION, str(exc)) from None
    if args.format == "json":
        print(json.dumps({"distance": d, "a": args.a, "b": args.b}))
    else:
        print(repr(d))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "validate": cmd_validate,
    "wasserstein": cmd_wasserstein,
}


def main(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; here 2 is reserved for I/O
        return EXIT_VALIDATION if exc.code == 2 else exc.code
    args.argv = argv
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        for path, msg in exc.problems:
            print(f"error: {path}: {msg}" if path else f"error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
