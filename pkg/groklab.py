"""
GrokLab command-line entry point

Usage:
    python groklab.py train --alpha 0.3 --model transformer-simplified --optimizer adamw-wd1 --steps 25000
    python groklab.py sweep sweeps/optimizer_grid.json --out runs/optimizer_grid
    python groklab.py report runs/optimizer_grid/sweep.csv
    python groklab.py check

Log records go to stderr (level from GROKLAB_LOG_LEVEL); standard output
carries only command results so it can be piped.
"""

import logging
import sys
from typing import List, Optional

from experimentSweeps.commands import run_command
from trainHarness.config import Config

logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    Config.configure_logging()
    logger.debug("Settings: %s", Config.get_config())
    return run_command(argv)


if __name__ == "__main__":
    sys.exit(main())
