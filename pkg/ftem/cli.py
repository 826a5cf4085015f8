"""
Command-line interface for ftem.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import COMMAND_BLOCKS, RunConfig, template_config
from .exceptions import ConfigurationError, FtemError
from .output import FORMATS
from .runner import EXIT_CONFIG, EXIT_FAILURE, Runner, exit_code_for

COMMAND_HELP = {
    "equilibria": "Locate and classify all equilibria",
    "classify": "Classical competition regime and equilibrium stability",
    "sweep-q": "Equilibrium counts over a grid of q values",
    "saddle-node": "Locate the saddle-node threshold q_c",
    "pitchfork": "Locate the collision of an interior branch with E_v",
    "simulate": "Integrate trajectories, optionally with a random basin scan",
    "phase-portrait": "Nullclines, equilibria, separatrices and trajectories",
    "separatrix": "Stable manifolds of interior saddles",
    "pde-run": "Run the competition-diffusion PDE",
    "aphid": "Simulate the two-biotype aphid models",
}


def setup_logging(level: str = "INFO", log_file: str = None):
    """Configure logging for the CLI."""
    log_level = getattr(logging, level.upper(), logging.INFO)

    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )


def print_progress(current: int, total: int):
    """Print a progress indicator."""
    percentage = (current / total) * 100 if total > 0 else 0
    bar_length = 40
    filled = int(bar_length * current / total) if total > 0 else 0
    bar = "=" * filled + "-" * (bar_length - filled)
    print(f"\rProgress: [{bar}] {percentage:.1f}% ({current}/{total})", end="", flush=True)
    if current >= total:
        print()


def _print_errors(errors):
    for error in errors[:10]:
        print(f"  - {error}")
    if len(errors) > 10:
        print(f"  ... and {len(errors) - 10} more")


def load_config(args) -> RunConfig:
    """Load the config file and apply environment and command-line overrides."""
    config = RunConfig.from_file_with_env(args.config)
    if config.command != args.command:
        raise ConfigurationError(
            f"Config is for '{config.command}' but the '{args.command}' command was invoked",
            errors=[f"command: expected '{args.command}', got '{config.command}'"],
        )
    if args.output_dir:
        config.output_dir = args.output_dir
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.log_level:
        config.log_level = args.log_level.upper()
    if args.log_file:
        config.log_file = args.log_file

    errors = config.validate()
    if errors:
        raise ConfigurationError("Invalid configuration", errors=errors)
    return config


def cmd_run(args):
    """Execute a numerical command from its config file."""
    print(f"ftem {args.command}")
    print("=" * 50)
    print(f"Loading configuration from: {args.config}")

    try:
        config = load_config(args)
    except FtemError as e:
        print(f"Configuration error: {e}")
        _print_errors(getattr(e, "errors", []))
        return exit_code_for(e)

    setup_logging(config.log_level, config.log_file)

    print(f"Output: {config.output_dir}")
    print()

    on_progress = None if args.quiet else print_progress
    result = Runner(config, fmt=args.format, on_progress=on_progress).run()

    print()
    print("Results")
    print("-" * 30)
    print(f"Status: {'SUCCESS' if result.success else 'FAILED'}")
    for key, value in result.summary.items():
        if isinstance(value, (dict, list)):
            value = json.dumps(value, default=str)
        print(f"{key}: {value}")
    print(f"Files written: {len(result.files)}")
    print(f"Duration: {result.duration_seconds:.2f} seconds")

    if result.errors:
        print()
        print("Errors:")
        _print_errors(result.errors)

    return result.exit_code


def cmd_init_config(args):
    """Generate a template configuration file."""
    output_path = args.output or "ftem.json"

    if Path(output_path).exists() and not args.force:
        print(f"Error: {output_path} already exists. Use --force to overwrite.")
        return EXIT_FAILURE

    try:
        template = template_config(args.template)
    except ConfigurationError as e:
        print(f"Error: {e}")
        return EXIT_CONFIG

    with open(output_path, "w") as f:
        json.dump(template, f, indent=2)
        f.write("\n")

    print(f"Configuration file created: {output_path}")
    print()
    print("Next steps:")
    print("1. Edit the parameter block")
    print(f"2. Run: ftem {args.template} -c {output_path}")

    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftem",
        description="Competition models with finite-time extinction mechanisms"
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}"
    )

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    for name in COMMAND_BLOCKS:
        sub = subparsers.add_parser(name, help=COMMAND_HELP[name])
        sub.add_argument(
            "-c", "--config",
            required=True,
            help="Path to run configuration file (JSON or YAML)"
        )
        sub.add_argument(
            "-o", "--output-dir",
            help="Output directory (overrides config and FTEM_OUTPUT_DIR)"
        )
        sub.add_argument(
            "--jobs",
            type=int,
            help="Worker threads for sweeps and basin scans"
        )
        sub.add_argument(
            "--log-level",
            choices=["DEBUG", "INFO", "WARNING", "ERROR"],
            help="Logging level (overrides config)"
        )
        sub.add_argument(
            "--log-file",
            help="Also write logs to this file"
        )
        sub.add_argument(
            "--format",
            choices=FORMATS,
            default="csv",
            help="Format for tabular output (default: csv)"
        )
        sub.add_argument(
            "-q", "--quiet",
            action="store_true",
            help="Suppress progress output"
        )
        sub.set_defaults(func=cmd_run)

    init_parser = subparsers.add_parser("init", help="Generate a template configuration file")
    init_parser.add_argument(
        "-o", "--output",
        default="ftem.json",
        help="Output path for config file (default: ftem.json)"
    )
    init_parser.add_argument(
        "--command",
        dest="template",
        default="equilibria",
        choices=sorted(COMMAND_BLOCKS),
        help="Command the template is for (default: equilibria)"
    )
    init_parser.add_argument(
        "-f", "--force",
        action="store_true",
        help="Overwrite existing config file"
    )
    init_parser.set_defaults(func=cmd_init_config)

    return parser


def main(argv=None):
    """Main entry point for the CLI."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
