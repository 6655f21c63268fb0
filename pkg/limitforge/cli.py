import sys
import json
import logging
import argparse
from typing import List, Optional

from dotenv import load_dotenv

from . import __version__
from .analysis.asymptote import DEFAULT_TOLERANCE, predict
from .analysis.series import BRIDGE_TOLERANCE, euler_mascheroni, stieltjes, sum_alternating
from .core.experiment import Experiment
from .core.suite import Suite
from .engine.recurrences import iterate
from .parsers.funcdsl import parse
from .parsers.table_parser import dataframe_from_array_of_dicts, dataframe_to_csv, write_atomic
from .schemas.recurrences import FAMILIES
from .exceptions import ConfigurationError, LimitForgeError

logger = logging.getLogger(__name__)

DEFAULT_OUT_DIR = "results"


def _integer(text: str) -> int:
    """Parses counts such as '1000000' or '1e6'."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value != int(value):
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    return int(value)


def _global_options() -> argparse.ArgumentParser:
    # Defaults are suppressed so the flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tolerance", type=float, default=argparse.SUPPRESS, help="run: final tolerance on |ratio - 1|; sum and predict: quadrature tolerance")
    common.add_argument("--n-max", type=_integer, default=argparse.SUPPRESS, help="override of n_max (n for series and constants)")
    common.add_argument("--schedule", default=argparse.SUPPRESS, help="geometric | all | linear:STEP | list:N1,N2,...")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS, help="output format; sum, constants and predict print plain text without it")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seedless", action="store_true", default=argparse.SUPPRESS, help="reserved; no randomness is used anywhere")
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="debug logging")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = argparse.ArgumentParser(
        prog="limitforge",
        description="Verify asymptotic laws of nonlinear recurrences, defect sequences and alternating series.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", parents=[common], help="run an experiment suite")
    run.add_argument("config", help="config file, JSON/YAML text, or a bundled name such as 'claims'")
    run.add_argument("--jobs", type=int, default=1, help="number of worker processes")

    summation = subparsers.add_parser("sum", parents=[common], help="sum f(1) - f(2) + f(3) - ...")
    summation.add_argument("expression", help="function of t, e.g. '1/t'")
    summation.add_argument("--n", type=_integer, default=1_000_000, help="half the number of terms")

    constants = subparsers.add_parser("constants", parents=[common], help="Euler-Mascheroni or Stieltjes constants")
    constants.add_argument("which", choices=("gamma", "stieltjes"))
    constants.add_argument("alpha", nargs="?", type=int, default=1, help="Stieltjes index")
    constants.add_argument("--n", type=_integer, default=100_000_000)

    trajectory = subparsers.add_parser("iterate", parents=[common], help="dump a recurrence trajectory")
    trajectory.add_argument("--family", required=True, choices=sorted(FAMILIES))
    trajectory.add_argument("--f")
    trajectory.add_argument("--g")
    trajectory.add_argument("--a1", type=float)
    trajectory.add_argument("--b1", type=float)
    trajectory.add_argument("--x1", type=float)
    trajectory.add_argument("--p", type=int)
    trajectory.add_argument("--q", type=int)
    trajectory.add_argument("--driver", choices=("constant", "sin2"))

    prediction = subparsers.add_parser("predict", parents=[common], help="evaluate F^-1(G(n))")
    prediction.add_argument("--f", required=True)
    prediction.add_argument("--g")
    prediction.add_argument("--n", type=_integer, required=True)
    return parser


# %% Subcommands
def _run(args: argparse.Namespace) -> int:
    suite = Suite.from_config(args.config)
    overrides = {
        "tolerance": getattr(args, "tolerance", None),
        "n_max": getattr(args, "n_max", None),
        "schedule": getattr(args, "schedule", None),
        "output": getattr(args, "format", None),
    }
    out_dir = getattr(args, "out", DEFAULT_OUT_DIR)
    manifest = suite.run(out_dir=out_dir, jobs=args.jobs, overrides=overrides)
    for status in manifest.experiments:
        detail = status.message or (
            f"ratio={status.final_ratio:.17g}" if status.final_ratio is not None
            else f"value={status.value:.17g}" if status.value is not None
            else ""
        )
        print(f"{status.status:5s}  {status.name}  {detail}".rstrip())
    print(f"manifest: {out_dir}/manifest.json (digest {manifest.config_digest[:12]})")
    return manifest.exit_code


def _reject(args: argparse.Namespace, option: str) -> None:
    if hasattr(args, option):
        raise ConfigurationError(
            f"{args.command} does not use --{option.replace('_', '-')}; pass it to 'run' instead."
        )


def _emit(args: argparse.Namespace, summary: dict) -> None:
    """Prints a one-record summary as JSON or as a single-row CSV."""
    if args.format == "json":
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        sys.stdout.write(dataframe_to_csv(dataframe_from_array_of_dicts([summary])))


def _sum(args: argparse.Namespace) -> int:
    tolerance = getattr(args, "tolerance", BRIDGE_TOLERANCE)
    result = sum_alternating(parse(args.expression), args.n, tolerance)
    if hasattr(args, "format"):
        _emit(args, result.summarize(["L_companion", "direct_partial_sum"]))
        return 0
    print(f"sum               {result.estimated_sum:.17g}")
    print(f"L                 {result.L_estimate:.17g}")
    print(f"bridge integral   {result.bridge_integral:.17g}")
    print(f"identity residual {result.identity_residual:.3g}")
    print(f"error estimate    {result.error_estimate:.3g}")
    return 0


def _constants(args: argparse.Namespace) -> int:
    _reject(args, "tolerance")
    n = getattr(args, "n_max", args.n)
    if args.which == "gamma":
        estimate = euler_mascheroni(n)
    else:
        estimate = stieltjes(args.alpha, n)
    if hasattr(args, "format"):
        _emit(args, estimate.summarize())
        return 0
    bound = f" +/- {estimate.error_bound:.3g}" if estimate.error_bound is not None else ""
    print(f"{estimate.name} {estimate.value:.17g}{bound} (n={n})")
    return 0


def _iterate(args: argparse.Namespace) -> int:
    _reject(args, "tolerance")
    n_max = getattr(args, "n_max", None)
    if n_max is None:
        raise ConfigurationError("iterate requires --n-max.")
    block = {
        "name": "iterate",
        "family": args.family,
        "n_max": n_max,
        **{k: getattr(args, k) for k in ("f", "g", "a1", "b1", "x1", "p", "q", "driver") if getattr(args, k) is not None},
    }
    spec = Experiment(block).build_spec()
    traj = iterate(spec, n_max, getattr(args, "schedule", None))
    output = getattr(args, "format", "csv")
    if output == "json":
        text = json.dumps(traj.rows(), indent=2) + "\n"
    else:
        text = dataframe_to_csv(dataframe_from_array_of_dicts(traj.rows()))
    out_dir = getattr(args, "out", None)
    if out_dir is not None:
        print(write_atomic(f"{out_dir}/{args.family}.{output}", text))
    else:
        sys.stdout.write(text)
    if traj.terminated_at is not None:
        print(f"terminated at n={traj.terminated_at}: {traj.termination_reason}", file=sys.stderr)
    return 0


def _predict(args: argparse.Namespace) -> int:
    g = parse(args.g) if args.g else None
    tolerance = getattr(args, "tolerance", DEFAULT_TOLERANCE)
    prediction = predict(parse(args.f), g, args.n, tolerance)
    if hasattr(args, "format"):
        _emit(args, {"f": args.f, "g": args.g, "n": args.n, "tolerance": tolerance, "prediction": prediction})
        return 0
    print(f"{prediction:.17g}")
    return 0


COMMANDS = {
    "run": _run,
    "sum": _sum,
    "constants": _constants,
    "iterate": _iterate,
    "predict": _predict,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point. Exit codes: 0 all experiments pass, 1 some fail, 2 configuration or runtime error."""
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (LimitForgeError, OSError) as e:
        print(f"limitforge {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
