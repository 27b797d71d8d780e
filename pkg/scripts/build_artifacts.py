#!/usr/bin/env python3
"""Build (or resume) the desk-scale artifact set used by the acceptance suite.

Runs dataset generation, model training, sampling, optimization and
evaluation for all five bundled cases at the default configuration, into
.acceptance-cache/desk-<confighash>/.  Every stage is skipped if its
artifact directory already exists, so interrupted builds resume.
"""

import sys
import time
import warnings
from pathlib import Path

from hullforge.config import PipelineConfig, config_hash
from hullforge.pipeline import (SAMPLE_MODES, cmd_evaluate, cmd_gen_dataset,
                                cmd_optimize, cmd_sample, cmd_train)


def main() -> int:
    cfg = PipelineConfig()
    out = Path(__file__).resolve().parent.parent / ".acceptance-cache" / \
        f"desk-{config_hash(cfg)}"
    print(f"building desk artifacts in {out}")
    warnings.simplefilter("ignore")

    stages = [("dataset", lambda: cmd_gen_dataset(cfg, out),
               out / "dataset")]
    stages.append(("train", lambda: cmd_train(cfg, out, "all"), out / "models"))
    for case in sorted(cfg.cases):
        for mode in SAMPLE_MODES:
            stages.append((f"sample:{case}:{mode}",
                           lambda c=case, m=mode: cmd_sample(cfg, out, c, m),
                           out / "samples" / case / mode))
        stages.append((f"optimize:{case}",
                       lambda c=case: cmd_optimize(cfg, out, c),
                       out / "optimize" / case))
        stages.append((f"evaluate:{case}",
                       lambda c=case: cmd_evaluate(cfg, out, c),
                       out / "evaluate" / case))

    for name, run, marker in stages:
        if marker.exists():
            print(f"[skip] {name}")
            continue
        start = time.time()
        run()
        print(f"[done] {name} in {time.time() - start:.0f}s", flush=True)
    print("artifact build complete")
    return 0


if __name__ == "__main__":
    sys.exit(main())
