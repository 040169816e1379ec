import argparse
import logging
import sys
from typing import Optional

from src.commands import Runner
from src.config import Settings
from src.errors import NavigationError, SceneValidationError
from src.scenes import SCENE_DESCRIPTIONS

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svc-nav",
        description="Safety-velocity-cone navigation: simulate, audit and plot projected controllers.",
    )
    sub = parser.add_subparsers(dest="command", metavar="<command>")

    def with_manifest(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("manifest", help="run manifest (JSON)")
        p.add_argument("--output-dir", help="override outputs.directory / OUTPUT_DIR")
        return p

    with_manifest("simulate", "integrate one closed-loop run from sim.initial")
    batch = with_manifest("batch", "run every sampled start in parallel and summarise")
    batch.add_argument("--strict", action="store_true", help="exit 2 unless every run converges")
    with_manifest("field", "export the controller vector field on the manifest's grid")
    eq = with_manifest("equilibria", "closed-form undesired equilibria of a sphere world")
    eq.add_argument("--probe", action="store_true", help="also check each equilibrium is unstable")
    eq.add_argument("--perturbation", type=float, default=1e-3, help="probe offset in metres (default 1e-3)")
    eq.add_argument("--horizon", type=float, default=100.0, help="probe horizon in seconds (default 100)")
    lidar = with_manifest("lidar-debug", "one simulated scan and its (distance, bearing) reduction")
    lidar.add_argument("--at", required=True, metavar="X,Y", help="scan position")

    validate = sub.add_parser(
        "validate",
        help="check a builtin scene or environment file",
        epilog="builtin scenes:\n" + "\n".join(f"  {name:16s}{text}" for name, text in SCENE_DESCRIPTIONS.items()),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    validate.add_argument("scene", help="builtin scene name or path to an environment file")
    validate.add_argument(
        "--param", dest="params", action="append", default=[], metavar="KEY=VALUE", help="builtin scene parameter"
    )
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    settings = Settings.from_env()
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s — %(message)s",
        stream=sys.stdout,
    )

    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage; usage errors are 1 here
        return 0 if e.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1

    kwargs = {k: v for k, v in vars(args).items() if k != "command"}
    try:
        return Runner(settings).dispatch(args.command, **kwargs)
    except SceneValidationError as e:
        logger.error("Validation failed: %s (pair %s)", e, e.report.pair if e.report else None)
        return e.exit_code
    except NavigationError as e:
        logger.error("%s failed: %s", args.command, e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
