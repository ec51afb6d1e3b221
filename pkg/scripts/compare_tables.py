"""Waste tables computed from the bundled drop counts, next to the printed values.

    python3 scripts/compare_tables.py            # every cell that differs
    python3 scripts/compare_tables.py --all      # every cell
"""
import argparse

from aqmsim.cli import MEMORY_TOLERANCE_MB, published_comparison
from aqmsim.metrics import accounting_oracle, load_published_drop_counts


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--all", action="store_true")
    a = ap.parse_args(argv)
    counts, mtus = load_published_drop_counts()
    rows = published_comparison(accounting_oracle(counts, mtus))
    print(f"{'metric':7s} {'cell':10s} {'computed':>14s} {'printed':>14s}  note")
    for r in rows:
        if a.all or not r["matches"]:
            print(f"{r['metric']:7s} {r['config'] + '/' + r['kind']:10s} {r['computed']:14.3f} "
                  f"{r['printed']:14.3f}  {'' if r['matches'] else 'DIFFERS'} {r['note']}")
    bad = sum(not r["matches"] for r in rows)
    print(f"{len(rows) - bad}/{len(rows)} cells match "
          f"(memory within {MEMORY_TOLERANCE_MB} MB, cycles and weight exactly)")


if __name__ == "__main__":
    main()
