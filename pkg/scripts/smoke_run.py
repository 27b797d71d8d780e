#!/usr/bin/env python3
"""Run the bundled smoke configuration end to end into runs/smoke."""

import sys
import time
import warnings

from hullforge.config import smoke_config
from hullforge.pipeline import cmd_run_all


def main() -> int:
    warnings.simplefilter("ignore")
    start = time.time()
    for path in cmd_run_all(smoke_config(), "runs/smoke"):
        print(path)
    print(f"smoke pipeline finished in {time.time() - start:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
