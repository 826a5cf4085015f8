#!/usr/bin/env python3
"""
Run every recipe under recipes/ and print a summary.

Each recipe is a complete run config; outputs land in the recipe's
output_dir (or under --output-root when given).

Usage:
    python reproduce_figures.py                       # Run all recipes
    python reproduce_figures.py --only pde            # Recipes whose name contains "pde"
    python reproduce_figures.py --skip pde --jobs 8   # Everything but the PDE runs
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from ftem.config import RunConfig
from ftem.exceptions import FtemError
from ftem.runner import Runner

RECIPES_DIR = Path(__file__).parent.parent / "recipes"


def setup_logging(log_file: str = None, level: str = "INFO"):
    """Configure logging."""
    log_level = getattr(logging, level.upper(), logging.INFO)

    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers
    )


def find_recipes(recipes_dir: Path, only: Optional[str], skip: Optional[str]) -> List[Path]:
    recipes = sorted(recipes_dir.glob("*.json"))
    if only:
        recipes = [r for r in recipes if only in r.stem]
    if skip:
        recipes = [r for r in recipes if skip not in r.stem]
    return recipes


def run_recipe(path: Path, output_root: Optional[str], jobs: Optional[int]) -> bool:
    """
    Run a single recipe.

    Returns:
        True if the run was successful
    """
    logger = logging.getLogger(__name__)
    logger.info(f"Running recipe {path.stem}...")

    try:
        config = RunConfig.from_file_with_env(str(path))
    except FtemError as e:
        logger.error(f"Recipe {path.stem} has an invalid config: {e}")
        for error in getattr(e, "errors", []):
            logger.error(f"  - {error}")
        return False

    if output_root:
        config.output_dir = str(Path(output_root) / path.stem)
    if jobs is not None:
        config.jobs = jobs

    result = Runner(config).run()
    if result.success:
        logger.info(f"Recipe {path.stem} completed in {result.duration_seconds:.1f}s: {len(result.files)} files")
    else:
        logger.error(f"Recipe {path.stem} failed with exit code {result.exit_code}")
        for error in result.errors[:5]:
            logger.error(f"  - {error}")
    return result.success


def main():
    parser = argparse.ArgumentParser(
        description="Run every recipe and report which succeeded"
    )
    parser.add_argument(
        "--recipes",
        default=str(RECIPES_DIR),
        help="Directory of recipe configs"
    )
    parser.add_argument(
        "--output-root",
        help="Write each recipe's outputs to OUTPUT_ROOT/<recipe name>"
    )
    parser.add_argument(
        "--only",
        help="Run only recipes whose name contains this text"
    )
    parser.add_argument(
        "--skip",
        help="Skip recipes whose name contains this text"
    )
    parser.add_argument(
        "--jobs",
        type=int,
        help="Worker threads for sweeps and basin scans"
    )
    parser.add_argument(
        "--log-file",
        help="Log file path"
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level"
    )

    args = parser.parse_args()

    setup_logging(args.log_file, args.log_level)
    logger = logging.getLogger(__name__)

    recipes = find_recipes(Path(args.recipes), args.only, args.skip)
    if not recipes:
        logger.error(f"No recipes found in {args.recipes}")
        sys.exit(1)

    failed = [r.stem for r in recipes if not run_recipe(r, args.output_root, args.jobs)]

    print()
    print(f"Recipes run: {len(recipes)}")
    print(f"Succeeded: {len(recipes) - len(failed)}")
    if failed:
        print("Failed:")
        for name in failed:
            print(f"  - {name}")
    sys.exit(0 if not failed else 1)


if __name__ == "__main__":
    main()
