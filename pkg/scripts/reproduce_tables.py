"""Break-frequency tables for the simulation scenarios.

The default is the long-running mode (R = 100, n in {500, 1000}, all
scenarios, three penalties). Use --quick for a few-minute smoke run.

    python scripts/reproduce_tables.py --out results/tables.csv
    python scripts/reproduce_tables.py --quick --scenarios IA0 IA1
"""

import argparse
import logging
import sys
import time
from pathlib import Path

from countcp.experiments import reports_to_csv, reports_to_json, run_replications, stderr_progress
from countcp.segment import DetectionConfig, PenaltySpec
from countcp.simulate import scenario_library


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--scenarios", nargs="*", default=None, help="default: every scenario in the library")
    p.add_argument("--sizes", nargs="*", type=int, default=[500, 1000])
    p.add_argument("--R", type=int, default=100)
    p.add_argument("--penalties", default="slope,logn,cuberoot")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="R = 5 and n = 500 only")
    p.add_argument("--out", default="tables.csv")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    lib = scenario_library()
    names = args.scenarios or list(lib)
    R, sizes = (5, [500]) if args.quick else (args.R, args.sizes)
    penalties = [PenaltySpec.parse(s) for s in args.penalties.split(",")]
    reports = []
    for name in names:
        for n in sizes:
            sc = lib[name].with_n(n).with_seed(args.seed)
            t0 = time.time()
            logging.info("%s n=%d R=%d", name, n, R)
            reports += run_replications(sc, R, penalties, DetectionConfig(), workers=args.workers,
                                        progress=stderr_progress)
            logging.info("  done in %.0fs", time.time() - t0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(reports_to_csv(reports))
    out.with_suffix(".json").write_text(reports_to_json(reports))
    sys.stdout.write(reports_to_csv(reports))


if __name__ == "__main__":
    main()
