"""Run the three sweep configs and print the trend checks on their medians.

Usage: python scripts/run_sweeps.py [--jobs N] [--only power|sinr|elements]
Outputs land in scripts/results/ as named in each config.
"""

import argparse
from pathlib import Path
import time

from aris_isac import cli
from aris_isac.analysis import read_rows, status_counts, trend_checks
from aris_isac.config import load_spec

HERE = Path(__file__).resolve().parent
CONFIGS = {"power": "power_sweep.yaml", "sinr": "sinr_sweep.yaml", "elements": "elements_sweep.yaml"}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--only", choices=sorted(CONFIGS), action="append")
    args = ap.parse_args()
    outputs = {}
    for name, fname in CONFIGS.items():
        spec = load_spec(HERE / "configs" / fname)
        out = HERE / spec.output
        outputs[name] = out
        if args.only and name not in args.only:
            continue
        t0 = time.perf_counter()
        rows = cli.run(spec, out, jobs=args.jobs)
        print(f"{name}: {len(rows)} points in {time.perf_counter() - t0:.1f} s {status_counts(rows)}")
    if all(p.exists() for p in outputs.values()):
        rows = {k: read_rows(p) for k, p in outputs.items()}
        for label, ok, detail in trend_checks(rows["power"], rows["sinr"], rows["elements"]):
            print(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")


if __name__ == "__main__":
    main()
