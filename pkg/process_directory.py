import argparse
import logging
from pathlib import Path

from bmlab.errors import LabError
from bmlab.labcli import ExperimentConfig, run
from bmlab.parser import CONFIG_SUFFIXES

LOGGER = logging.getLogger(__name__)


def process_directory(directory: Path | str, output_directory: Path | str, workers: int = 1) -> dict:
    """Runs every experiment config of a directory, each into <output_directory>/<config stem>

    Returns config stem -> passed (None for configs that could not be run)."""
    output_directory = Path(output_directory)
    output_directory.mkdir(parents=True, exist_ok=True)

    results = {}
    for config_path in sorted(Path(directory).iterdir()):
        if config_path.suffix not in CONFIG_SUFFIXES:
            continue
        try:
            config = ExperimentConfig.load(
                config_path, out=str(output_directory / config_path.stem), workers=workers
            )
            results[config_path.stem] = run(config).passed
        except LabError as e:
            LOGGER.error("%s: %s", config_path.name, e)
            results[config_path.stem] = None
    return results


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run a directory of experiment configs.")
    parser.add_argument(
        "-d",
        "--directory",
        type=str,
        default="configs",
        help="The directory of TOML or JSON experiment configs.",
    )
    parser.add_argument(
        "-o",
        "--output-directory",
        type=str,
        default="out",
        help="The directory the reports are written to, one subdirectory per config.",
    )
    parser.add_argument("-w", "--workers", type=int, default=1)

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    for stem, passed in process_directory(args.directory, args.output_directory, args.workers).items():
        print(f"{stem}: {'error' if passed is None else 'pass' if passed else 'fail'}")
