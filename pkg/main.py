import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

import yaml

from config import Config
from config_processor import ConfigProcessor
from exceptions import CoqeError, ConfigError
from experiment_manager import ExperimentManager
from models import RunMode
from preset_service import PresetService

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config_path", nargs="?", help="YAML run configuration")
    common.add_argument("--config", dest="config_option", metavar="PATH", help="YAML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory for the run bundle")
    common.add_argument("--threads", type=int, metavar="N",
                        help=f"worker threads (default: ${Config.THREADS_ENV}, then all cores)")
    common.add_argument("--seed", type=int, metavar="N", help="random seed")
    common.add_argument("--verbose", action="store_true", help="log progress at INFO level")

    parser = argparse.ArgumentParser(prog=Config.PROG, description="Cohomogeneity-one quasi-Einstein solver")
    parser.add_argument("--version", action="version", version=f"%(prog)s {Config.VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("run-ivp", parents=[common], help="integrate an initial value problem")
    commands.add_parser("solve-bvp", parents=[common], help="solve a Dirichlet problem by continuation")
    commands.add_parser("solve-limit", parents=[common], help="solve the h2 = 0 limit system")

    scan = commands.add_parser("scan-nonuniqueness", parents=[common],
                               help="symmetric-shot scan on the round 2-sphere")
    scan.add_argument("--k1-min", type=float)
    scan.add_argument("--k1-max", type=float)
    scan.add_argument("--steps", type=int)
    scan.add_argument("--resolve-pairs", action="store_true", default=None,
                      help="re-solve each level pair as a boundary-value problem")

    for name, help_text in (("analyze-blowup", "blow-up rate of a singular run"),
                            ("rescale", "resample a singular run in rescaled variables")):
        blowup = commands.add_parser(name, parents=[common], help=help_text)
        blowup.add_argument("--direction", choices=("backward", "forward"))
        blowup.add_argument("--seed-state", metavar="STATE",
                            help="inline seed, e.g. '{t: 1, y: [0], L: [-5], xi: 10}'")
        if name == "rescale":
            blowup.add_argument("--anchor", type=float)
            blowup.add_argument("--window", type=float)
            blowup.add_argument("--points", type=int)

    circle = commands.add_parser("check-circle", parents=[common], help="circle existence check")
    circle.add_argument("--lambda", dest="lam", type=float)
    circle.add_argument("--gap", type=float)

    bounds = commands.add_parser("estimate-bounds", parents=[common], help="Monte Carlo Ricci bounds")
    bounds.add_argument("--samples", type=int)
    bounds.add_argument("--box-radius", type=float)

    presets = commands.add_parser("presets", help="list the shipped homogeneous spaces")
    presets.add_argument("--include", nargs="*", default=[], metavar="NAME",
                         help="extra parameterised presets such as 'torus(3)'")
    presets.add_argument("--verbose", action="store_true")
    return parser


def _parse_seed_state(text: str) -> Dict[str, Any]:
    try:
        state = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"--seed-state is not a valid inline mapping: {exc}", key="seed-state")
    if not isinstance(state, dict) or set(state) - {"t", "y", "L", "xi"}:
        raise ConfigError("--seed-state must be a mapping with keys t, y, L, xi", key="seed-state")
    return state


def collect_overrides(args: argparse.Namespace, mode: RunMode) -> Dict[str, Any]:
    """Command-line flags as a mapping merged over the configuration file"""
    flags = {
        "k1_min": getattr(args, "k1_min", None),
        "k1_max": getattr(args, "k1_max", None),
        "steps": getattr(args, "steps", None),
        "resolve_pairs": getattr(args, "resolve_pairs", None),
        "direction": getattr(args, "direction", None),
        "anchor": getattr(args, "anchor", None),
        "window": getattr(args, "window", None),
        "points": getattr(args, "points", None),
        "lambda": getattr(args, "lam", None),
        "gap": getattr(args, "gap", None),
        "samples": getattr(args, "samples", None),
        "box_radius": getattr(args, "box_radius", None),
    }
    block = {key: value for key, value in flags.items() if value is not None}
    if getattr(args, "seed_state", None):
        block.update(_parse_seed_state(args.seed_state))

    overrides: Dict[str, Any] = {}
    if block:
        overrides[mode.value] = block
    if args.out:
        overrides["output"] = {"dir": args.out}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    return overrides


def run_command(args: argparse.Namespace) -> int:
    if args.command == "presets":
        catalog = PresetService().list_presets(args.include)
        print(yaml.safe_dump(catalog, sort_keys=False), end="")
        return 0

    mode = RunMode(Config.COMMAND_MODES[args.command])
    processor = ConfigProcessor()
    overrides = collect_overrides(args, mode)
    path = args.config_option or args.config_path
    if path:
        run = processor.load(path, mode, overrides)
    else:
        run = processor.from_mapping(processor.merge({}, overrides), mode)

    bundle = ExperimentManager().run(run)
    statistics = bundle.summary.get("statistics", {})
    if mode is RunMode.CIRCLE:
        print(statistics["verdict"])
    else:
        print(yaml.safe_dump(statistics, sort_keys=False), end="")
    logger.info("[cli] bundle written to %s", bundle.output_dir)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run_command(args)
    except CoqeError as exc:
        print(f"error: {exc.describe()}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: internal: {exc}".replace("\n", " "), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
