"""
Command-line runner: verify, run and sweep.

Config files are flat key=value text; flags override file values.
Exit status is 0 on success, 1 on failed checks or runtime errors and
2 on usage errors.
"""
import argparse
import sys
from typing import Any, Dict, List, Optional, Sequence

from app.core.config import settings
from app.core.exceptions import ConfigError, DelightError
from app.core.logging import configure_logging, get_logger
from app.schemas.experiment import SWEEP_AXES, ExperimentConfig
from app.services.experiment_service import ExperimentService
from app.services.verification_service import FaultMode, VerificationService

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

# flags that map one-to-one onto ExperimentConfig fields
OVERRIDES = (
    "num_actions", "batch", "alpha", "seeds", "base_seed", "estimators", "samples_per_input",
    "baselines", "contexts", "steps", "eta", "error", "width", "learning_rate", "label",
    "output_dir", "dataset", "workers",
)


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file; flags override its values")
    parser.add_argument("--k", "--actions", dest="num_actions", type=int, help="number of actions K")
    parser.add_argument("--batch", type=int, help="batch size B")
    parser.add_argument("--alpha", type=float, help="step size for the bandit and multictx testbeds")
    parser.add_argument("--learning-rate", dest="learning_rate", type=float, help="Adam learning rate (classify)")
    parser.add_argument("--seeds", type=int, help="number of seeds")
    parser.add_argument("--base-seed", dest="base_seed", type=int, help="base seed of every stream")
    parser.add_argument(
        "--estimators",
        help="comma list of pg, dg, entropy-pg[:a], ucb[:a], se[:beta], ce, pg-oracle",
    )
    parser.add_argument("--samples-per-input", dest="samples_per_input", help="comma list of S values")
    parser.add_argument("--baselines", help="comma list of zero, constant, expected, oracle")
    parser.add_argument("--contexts", type=int, help="number of contexts N (multictx)")
    parser.add_argument("--steps", type=int, help="number of updates T")
    parser.add_argument("--eta", type=float, help="gate temperature")
    parser.add_argument("--error", type=float, help="initial bandit error (default: uniform policy)")
    parser.add_argument("--width", type=int, help="hidden width H (classify)")
    parser.add_argument("--label", help="run directory name")
    parser.add_argument("--output-dir", dest="output_dir", help=f"output root (default {settings.OUTPUT_DIR})")
    parser.add_argument("--dataset", help="'synthetic', 'mnist' or a directory of IDX archives")
    parser.add_argument("--workers", type=int, help="processes for the seed fan-out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delight",
        description="Delight-gated policy gradient: verification and experiments.",
    )
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-json", dest="log_json", action="store_true", help="JSON log lines on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="run every analytic check")
    verify.add_argument("--seed", type=int, default=None, help=f"verification seed (default {settings.VERIFY_SEED})")
    verify.add_argument(
        "--inject-fault",
        dest="inject_fault",
        choices=[mode.value for mode in FaultMode],
        help=argparse.SUPPRESS,
    )

    run = sub.add_parser("run", help="run one testbed")
    run.add_argument("testbed", choices=["bandit", "multictx", "classify"])
    _add_experiment_flags(run)

    sweep = sub.add_parser("sweep", help="sweep one config field over a list of values")
    sweep.add_argument("--axis", help=f"one of: {', '.join(SWEEP_AXES)}")
    sweep.add_argument("--values", help="comma list of values")
    sweep.add_argument("--target", choices=["bandit", "multictx", "classify"], help="testbed to sweep")
    _add_experiment_flags(sweep)
    return parser


def load_config(args: argparse.Namespace, **extra: Any) -> ExperimentConfig:
    """Config file (if any) overridden by the flags that were given."""
    overrides: Dict[str, Any] = {name: getattr(args, name) for name in OVERRIDES}
    overrides.update(extra)
    if args.config:
        return ExperimentConfig.from_file(args.config, overrides)
    return ExperimentConfig.from_text("", overrides)


def _parse_values(raw: Optional[str]) -> Optional[List[float]]:
    if raw is None:
        return None
    try:
        return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"values must be numbers ({exc})", field="values") from exc


def cmd_verify(args: argparse.Namespace) -> int:
    fault = FaultMode(args.inject_fault) if args.inject_fault else None
    report = VerificationService.cmd_verify(seed=args.seed, fault=fault)
    sys.stdout.write(report.render())
    if not report.passed:
        sys.stdout.write(f"{len(report.failures)} of {len(report.checks)} checks failed\n")
        return EXIT_FAILED
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args, testbed=args.testbed)
    result = ExperimentService.cmd_run(config)
    for comparison in result.comparisons:
        p = "n/a" if comparison.p_value is None else f"{comparison.p_value:.3g}"
        sys.stdout.write(
            f"{comparison.better} {comparison.mean_better:.4f} vs {comparison.worse} "
            f"{comparison.mean_worse:.4f} (p={p})\n"
        )
    sys.stdout.write(f"{result.output_dir}\n")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args, testbed="sweep", sweep_target=args.target)
    path, rows = ExperimentService.cmd_sweep(config, axis=args.axis, values=_parse_values(args.values))
    for row in rows:
        sys.stdout.write(f"{row.axis}={row.value:g} {row.arm} {row.mean_final_error:.4f} ± {row.stderr_final_error:.4f}\n")
    sys.stdout.write(f"{path}\n")
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "run": cmd_run, "sweep": cmd_sweep}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(level=args.log_level.upper() if args.log_level else None, json_output=args.log_json or None)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except DelightError as exc:
        logger.error("cli.failed", command=args.command, error=str(exc))
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
