"""Classic/Scalable coexistence per load phase (Jain index of the two aggregates).

    python3 scripts/fairness_experiment.py --preset I --scale 1/12 --aqm ired-delay,pi2,dualpi2
"""
import argparse
import csv
import os
import sys
import time
from dataclasses import replace
from fractions import Fraction

from aqmsim.model import preset_scenario
from aqmsim.simulation import Simulation


def run(preset, scale, aqms, seeds, scheduler=None):
    rows = []
    for aqm in aqms:
        for seed in seeds:
            cfg = replace(preset_scenario(preset), aqm=aqm, seed=seed).scaled(scale)
            if scheduler:
                cfg = replace(cfg, scheduler=scheduler)
            t0 = time.perf_counter()
            sim = Simulation(cfg, record_series=False)
            res = sim.run()
            for i, ((cb, sb), j) in enumerate(zip(sim.phase_bytes(), sim.phase_jain()), start=1):
                rows.append({"preset": preset, "aqm": aqm, "seed": seed, "phase": i,
                             "classic_bytes": cb, "scalable_bytes": sb, "jain": j,
                             "violations": len(res.violations)})
            print(f"{aqm:11s} seed {seed}: Jain per phase "
                  f"{[round(j, 3) for j in sim.phase_jain()]}  ({time.perf_counter() - t0:.1f} s)")
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--preset", default="I")
    ap.add_argument("--scale", default="1/12")
    ap.add_argument("--aqm", default="ired-delay,pi2,dualpi2")
    ap.add_argument("--seeds", default="1")
    ap.add_argument("--scheduler", choices=("strict", "wrr"), default=None)
    ap.add_argument("--out", default="out/fairness.csv")
    a = ap.parse_args(argv)
    rows = run(a.preset, Fraction(a.scale), a.aqm.split(","), [int(s) for s in a.seeds.split(",")],
               a.scheduler)
    os.makedirs(os.path.dirname(a.out) or ".", exist_ok=True)
    with open(a.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(a.out)
    return 1 if any(r["violations"] for r in rows) else 0


if __name__ == "__main__":
    sys.exit(main())
