"""
Command-line interface for avgreward-opl.

Subcommands: ``simulate``, ``tune``, ``learn``, ``evaluate``, ``oracle`` and
``reproduce``. Every command accepts ``--config`` (a JSON document, or the
manifest of an earlier run) whose keys are the long flag names with dashes
replaced by underscores; flags given on the command line win. The merged
document is hashed into the ``manifest.json`` written to the output
directory.

Exit status: 0 on success, 1 on a runtime failure, 2 on a usage error.
"""

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from . import __version__
from .bench import TABLES, mc_average_reward, oracle_search, reproduce_table, simulate, write_csv, write_markdown
from .client import AverageRewardToolkit
from .dataio import load_dataset, validate, write_dataset
from .exceptions import DataError, OPLError
from .models.base import canonical_hash
from .models.experiment import EnvSpec, RunManifest
from .models.fits import TuningPair
from .models.kernel import KernelConfig
from .models.policy import FeatureMap, OptimizeConfig, PolicyParams
from .models.tuning import DEFAULT_PENALTIES, TuningGrid, coupled_grid
from .parallel import WorkerPool

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

ENV_KINDS = ("scenario1", "scenario2", "vlearning", "tabular")
DATA_FILE = "data.jsonl"

# Keys of the parsed namespace that are not part of the run configuration.
_META_KEYS = {"command", "config", "verbose"}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "simulate": {"n": 40, "T": 50, "policy": None, "env_params": {}},
    "tune": {"folds": 3, "candidates": 10, "grid": list(DEFAULT_PENALTIES), "box": 10.0,
             "intercept": False, "bandwidth": None},
    "learn": {"n_starts": 5, "max_iters": 200, "box": 10.0, "intercept": False, "bandwidth": None,
              "lam": None, "mu": None, "cv": False, "check_gradient": False, "r_max": None, "folds": 3, "candidates": 10,
              "grid": list(DEFAULT_PENALTIES), "numerical_gradient": False},
    "evaluate": {"env": None, "data": None, "n_test": 100, "T_test": 1000, "burn_in": 0, "seed": 0,
                 "lam": 1e-2, "mu": 1e-2, "bandwidth": None, "env_params": {}},
    "oracle": {"box": 10.0, "mc_n": 100, "mc_T": 1000, "burn_in": 0, "seed": 0, "intercept": False,
               "env_params": {}},
    "reproduce": {"reps": 20, "oracle_value": None, "cv": False, "n_starts": 5, "max_iters": 200},
}

REQUIRED: Dict[str, Sequence[str]] = {
    "simulate": ("env", "seed", "out"),
    "tune": ("data", "seed", "out"),
    "learn": ("data", "seed", "out"),
    "evaluate": ("policy", "out"),
    "oracle": ("env", "out"),
    "reproduce": ("table", "seed", "out"),
}


class UsageError(Exception):
    """Invalid or incomplete command-line configuration."""


class RunContext:
    """Merged configuration plus the manifest bookkeeping of one command."""

    def __init__(self, command: str, config: Dict[str, Any]) -> None:
        self.command = command
        self.config = config
        self.out = Path(config["out"])
        self.inputs: Dict[str, str] = {}
        self.outputs: Dict[str, str] = {}
        self.tuning: Optional[str] = None
        self.started_at = datetime.now(timezone.utc)

    def output(self, name: str) -> Path:
        path = self.out / name
        self.outputs[name] = str(path)
        return path

    def write_json(self, name: str, document: Dict[str, Any]) -> Path:
        path = self.output(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(document, indent=2))
        return path

    def manifest(self, exit_status: int) -> RunManifest:
        return RunManifest(
            command=self.command,
            config=self.config,
            config_hash=canonical_hash(self.config),
            seed_root=self.config.get("seed"),
            started_at=self.started_at,
            finished_at=datetime.now(timezone.utc),
            inputs=self.inputs,
            outputs=self.outputs,
            toolkit_version=__version__,
            tuning=self.tuning,
            exit_status=exit_status,
        )


def _read_config(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        document = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    if not isinstance(document, dict):
        raise UsageError("config must be a JSON object")
    # a manifest replays its merged config
    if "config_hash" in document and isinstance(document.get("config"), dict):
        document = document["config"]
    return document


def merge_config(command: str, args: argparse.Namespace) -> Dict[str, Any]:
    """
    Defaults, then the ``--config`` document, then explicit flags.

    Raises:
        UsageError: If the config is unreadable or a required key is missing
    """
    merged = dict(DEFAULTS.get(command, {}))
    merged.update(_read_config(args.config))
    merged.update({k: v for k, v in vars(args).items() if k not in _META_KEYS and v is not None})
    missing = [key for key in REQUIRED[command] if merged.get(key) is None]
    if missing:
        raise UsageError(f"{command}: missing required option(s): " + ", ".join(f"--{k.replace('_', '-')}" for k in missing))
    return merged


def _kernel_for(dataset, cfg: Dict[str, Any]) -> Optional[KernelConfig]:
    if cfg.get("bandwidth") is None:
        return None
    return KernelConfig.default_for(dataset.d, bandwidth=float(cfg["bandwidth"]))


def _load(ctx: RunContext, key: str):
    path = ctx.config[key]
    ctx.inputs[key] = str(path)
    return load_dataset(path)


def _tuning_grid(cfg: Dict[str, Any]) -> TuningGrid:
    pairs = tuple(coupled_grid(cfg["grid"]))
    return TuningGrid(value_grid=pairs, ratio_grid=pairs, n_candidates=cfg["candidates"], n_folds=cfg["folds"])


def cmd_simulate(ctx: RunContext) -> int:
    cfg = ctx.config
    policy = None
    if cfg.get("policy"):
        ctx.inputs["policy"] = str(cfg["policy"])
        policy = PolicyParams.load_json(cfg["policy"])
    env = EnvSpec(kind=cfg["env"], params=cfg.get("env_params") or {}, seed_root=cfg["seed"])
    dataset = simulate(env, policy, cfg["n"], cfg["T"], cfg["seed"])
    write_dataset(dataset, ctx.output(DATA_FILE))
    logger.info("Simulated %d %s trajectories of length %d", dataset.n, cfg["env"], dataset.T)
    return EXIT_OK


def cmd_tune(ctx: RunContext) -> int:
    cfg = ctx.config
    dataset = _load(ctx, "data")
    toolkit = AverageRewardToolkit(dataset, kernel=_kernel_for(dataset, cfg))
    features = FeatureMap(intercept=cfg["intercept"])
    result = toolkit.tuner.cv_select(_tuning_grid(cfg), cfg["seed"], features=features, box=cfg["box"])
    result.save_json(ctx.output("cv.json"))
    toolkit.kernel.save_json(ctx.output("kernel.json"))
    ctx.tuning = "cv"
    return EXIT_OK


def cmd_learn(ctx: RunContext) -> int:
    cfg = ctx.config
    dataset = _load(ctx, "data")
    report = validate(dataset, r_max=float(cfg["r_max"]) if cfg.get("r_max") is not None else np.inf)
    if not report.ok:
        first = report.violations[0]
        raise DataError(
            "dataset failed validation",
            details={
                "violations": len(report.violations),
                "kinds": ",".join(sorted({v.kind for v in report.violations})),
                "first": f"{first.kind}@trajectory={first.trajectory},time={first.time}",
            },
        )

    toolkit = AverageRewardToolkit(dataset, kernel=_kernel_for(dataset, cfg))
    features = FeatureMap(intercept=cfg["intercept"])
    opt = dict(
        n_starts=cfg["n_starts"],
        max_iters=cfg["max_iters"],
        box=cfg["box"],
        features=features,
        seed=cfg["seed"],
        check_gradient=cfg["check_gradient"],
        use_analytic_gradient=not cfg["numerical_gradient"],
    )

    if cfg.get("lam") is not None or cfg.get("mu") is not None:
        if cfg.get("lam") is None or cfg.get("mu") is None:
            raise UsageError("learn: --lambda and --mu must be given together")
        pair = TuningPair(lam=cfg["lam"], mu=cfg["mu"])
        opt.update(tuning_value=pair, tuning_ratio=pair)
        ctx.tuning = "explicit"
    elif cfg["cv"]:
        cv = toolkit.tuner.cv_select(_tuning_grid(cfg), cfg["seed"], features=features, box=cfg["box"])
        cv.save_json(ctx.output("cv.json"))
        opt.update(tuning_value=cv.chosen_value, tuning_ratio=cv.chosen_ratio)
        ctx.tuning = "cv"
    else:
        ctx.tuning = "default"

    result = toolkit.optimizer.optimize(OptimizeConfig(**opt))
    result.policy().save_json(ctx.output("policy.json"))
    result.save_json(ctx.output("result.json"))
    toolkit.kernel.save_json(ctx.output("kernel.json"))
    checks = [s.gradient_check for s in result.starts if s.gradient_check is not None]
    if checks:
        logger.info("Gradient check: max relative error %.3g over %d starts", max(checks), len(checks))
    logger.info("Learned theta %s (objective %.6g); stats %s", np.round(result.theta_hat, 4),
                result.objective_value, toolkit.get_stats())
    return EXIT_OK


def cmd_evaluate(ctx: RunContext) -> int:
    cfg = ctx.config
    ctx.inputs["policy"] = str(cfg["policy"])
    policy = PolicyParams.load_json(cfg["policy"])

    if cfg.get("env"):
        env = EnvSpec(kind=cfg["env"], params=cfg.get("env_params") or {}, seed_root=cfg["seed"])
        mean, sd = mc_average_reward(env, policy, cfg["n_test"], cfg["T_test"], cfg["burn_in"], cfg["seed"])
        logger.info("Monte Carlo average reward %.6g (sd %.4g)", mean, sd)
        ctx.write_json("evaluation.json", {"method": "monte_carlo", "mean": mean, "sd": sd})
        return EXIT_OK

    if not cfg.get("data"):
        raise UsageError("evaluate: give --env for Monte Carlo or --data for the doubly robust estimate")
    dataset = _load(ctx, "data")
    toolkit = AverageRewardToolkit(dataset, kernel=_kernel_for(dataset, cfg))
    pair = TuningPair(lam=cfg["lam"], mu=cfg["mu"])
    ctx.tuning = "explicit"
    est = toolkit.evaluator.estimate(policy, pair, pair)
    est.save_json(ctx.output("evaluation.json"))
    return EXIT_OK


def cmd_oracle(ctx: RunContext) -> int:
    cfg = ctx.config
    env = EnvSpec(kind=cfg["env"], params=cfg.get("env_params") or {}, seed_root=cfg["seed"])
    theta, eta = oracle_search(
        env, cfg["box"], cfg["mc_n"], cfg["mc_T"], cfg["seed"],
        burn_in=cfg["burn_in"], features=FeatureMap(intercept=cfg["intercept"]),
    )
    logger.info("Oracle value eta*=%.6g", eta)
    ctx.write_json("oracle.json", {"theta_star": theta.tolist(), "eta_star": eta})
    return EXIT_OK


def cmd_reproduce(ctx: RunContext) -> int:
    cfg = ctx.config
    optimizer = OptimizeConfig(n_starts=cfg["n_starts"], max_iters=cfg["max_iters"])
    rows, summary = reproduce_table(
        cfg["table"],
        cfg["reps"],
        cfg["seed"],
        optimizer=optimizer,
        tuning=TuningGrid() if cfg["cv"] else None,
        oracle_value=cfg["oracle_value"],
        pool=WorkerPool(),
    )
    ctx.tuning = "cv" if cfg["cv"] else "default"
    write_csv(rows, ctx.output("rows.csv"))
    summary.to_csv(ctx.output("summary.csv"), index=False)
    write_markdown(summary, ctx.output("summary.md"), title=cfg["table"])
    if (summary["reps"] == 0).any():
        raise OPLError(
            "every replication of at least one setting failed",
            details={"failed": int(summary["failed"].sum())},
        )
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunContext], int]] = {
    "simulate": cmd_simulate,
    "tune": cmd_tune,
    "learn": cmd_learn,
    "evaluate": cmd_evaluate,
    "oracle": cmd_oracle,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avgreward-opl",
        description="Doubly robust evaluation and learning of average-reward policies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config document (flags win)")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--seed", type=int, help="Root seed of all randomness")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Simulate a batch dataset")
    p.add_argument("--env", choices=ENV_KINDS)
    p.add_argument("--n", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--policy", help="Policy JSON to follow instead of the uniform behavior")

    kernel = argparse.ArgumentParser(add_help=False)
    kernel.add_argument("--data", help="JSON-lines dataset")
    kernel.add_argument("--bandwidth", type=float, help="Gaussian bandwidth (median heuristic when omitted)")

    cv = argparse.ArgumentParser(add_help=False)
    cv.add_argument("--folds", type=int)
    cv.add_argument("--candidates", type=int, help="Candidate policies of the min-max criterion")
    cv.add_argument("--grid", type=float, nargs="+", help="Coupled penalty grid (lambda = mu)")
    cv.add_argument("--box", type=float)
    cv.add_argument("--intercept", action="store_true", default=None, help="Add an intercept feature")

    sub.add_parser("tune", parents=[common, kernel, cv], help="Select penalties by cross-validation")

    p = sub.add_parser("learn", parents=[common, kernel, cv], help="Learn a policy")
    p.add_argument("--lambda", dest="lam", type=float, help="Explicit lambda (skips cross-validation)")
    p.add_argument("--mu", type=float, help="Explicit mu (skips cross-validation)")
    p.add_argument("--r-max", dest="r_max", type=float, help="Reward bound; violating data is rejected")
    p.add_argument("--cv", action="store_true", default=None, help="Select penalties by cross-validation")
    p.add_argument("--n-starts", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--check-gradient", action="store_true", default=None,
                   help="Fail when the analytic gradient disagrees with finite differences")
    p.add_argument("--numerical-gradient", action="store_true", default=None,
                   help="Optimize with finite-difference gradients")

    p = sub.add_parser("evaluate", parents=[common, kernel], help="Evaluate a policy")
    p.add_argument("--policy", help="Policy JSON")
    p.add_argument("--env", choices=ENV_KINDS, help="Monte Carlo evaluation in this environment")
    p.add_argument("--n-test", type=int)
    p.add_argument("--T-test", dest="T_test", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)

    p = sub.add_parser("oracle", parents=[common], help="Search the best in-class policy by Monte Carlo")
    p.add_argument("--env", choices=ENV_KINDS)
    p.add_argument("--box", type=float)
    p.add_argument("--mc-n", type=int)
    p.add_argument("--mc-T", dest="mc_T", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--intercept", action="store_true", default=None)

    p = sub.add_parser("reproduce", parents=[common], help="Replicate a published simulation table")
    p.add_argument("--table", choices=TABLES)
    p.add_argument("--reps", type=int)
    p.add_argument("--oracle-value", type=float)
    p.add_argument("--cv", action="store_true", default=None)
    p.add_argument("--n-starts", type=int)
    p.add_argument("--max-iters", type=int)
    return parser


def configure_logging(verbose: bool) -> logging.Handler:
    """Attach one stream handler to the package logger."""
    package = logging.getLogger("avgreward_opl")
    for handler in list(package.handlers):
        if getattr(handler, "_opl_cli", False):
            package.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    handler._opl_cli = True  # type: ignore[attr-defined]
    package.addHandler(handler)
    package.setLevel(logging.DEBUG if verbose else logging.INFO)
    return handler


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    configure_logging(args.verbose)
    try:
        config = merge_config(args.command, args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    ctx = RunContext(args.command, config)
    status = EXIT_FAILURE
    try:
        status = COMMANDS[args.command](ctx)
    except UsageError as e:
        logger.error("%s", e)
        status = EXIT_USAGE
    except ValidationError as e:
        logger.error("Invalid configuration: %s", e)
        status = EXIT_USAGE
    except OPLError as e:
        logger.error("%s failed: %s", args.command, e)
        status = EXIT_FAILURE
    except (OSError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        status = EXIT_FAILURE
    finally:
        ctx.out.mkdir(parents=True, exist_ok=True)
        ctx.manifest(status).save_json(ctx.out / RunManifest.FILENAME)
    return status


if __name__ == "__main__":
    sys.exit(main())
