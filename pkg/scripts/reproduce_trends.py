"""Run the trend scenarios and print the quantity each trend compares.

Usage: python scripts/reproduce_trends.py [--out DIR] [--threads N]
"""

import argparse
import csv
from pathlib import Path

from simtrx.harness import emit_outputs, run_scenario
from simtrx.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]
TRENDS = ("trend_layers", "trend_subcarriers", "trend_saturation", "trend_users", "trend_near_far")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=ROOT / "out")
    ap.add_argument("--threads", type=int)
    args = ap.parse_args()
    for name in TRENDS:
        scenario = load_scenario(ROOT / "scenarios" / f"{name}.yaml")
        record = run_scenario(scenario, threads=args.threads)
        paths = emit_outputs(record, args.out / name)
        print(f"== {name} ({record.wall_clock:.1f} s) -> {paths['summary']}")
        with paths["summary"].open() as fh:
            for row in csv.DictReader(fh):
                params = ", ".join(f"{k}={row[k]}" for k in record.parameters)
                extra = f" tdma_best={row['tdma_best']}" if row["tdma_best"] else ""
                print(f"  {params}: R_avg={float(row['R_avg']):.4f}{extra} [{row['status']}]")


if __name__ == "__main__":
    main()
