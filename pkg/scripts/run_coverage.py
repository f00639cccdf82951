"""Run the coverage study and write its CSV and manifest.

    python scripts/run_coverage.py [--config scripts/configs/coverage.json] [--workers N]
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from isoinfer.harness import ExperimentConfig, default_workers, run_config

HERE = Path(__file__).parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=HERE / "configs" / "coverage.json")
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--replications", type=int)
    args = ap.parse_args(argv)
    cfg = replace(ExperimentConfig.load(args.config), workers=args.workers)
    if args.replications:
        cfg = replace(cfg, replications=args.replications)
    res, gates = run_config(cfg)
    for r in res.rows:
        print(f"{r.cell:40s} {r.statistic:40s} {r.value: .5g}  ({r.mc_se:.2g})")
    for g in gates:
        print(("PASS " if g.passed else "FAIL ") + g.gate["statistic"], g.detail)
    return 2 if any(not g.passed for g in gates) else 0


if __name__ == "__main__":
    sys.exit(main())
