"""Run every preset under a set of AQMs and write the merged savings table.

    python3 scripts/run_sweep.py --scale 1/48 --aqm ired-delay,pi2,codel --out out/sweep --jobs 2
"""
import argparse
import sys

from aqmsim.cli import main


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--scale", default="1/48")
    ap.add_argument("--aqm", default="ired-delay,pi2,codel")
    ap.add_argument("--presets", default="I,II,III,IV,V,VI,VII,VIII,IX,X,XI,XII")
    ap.add_argument("--seed", default="1")
    ap.add_argument("--jobs", default="1")
    ap.add_argument("--out", default="out/sweep")
    return ap.parse_args(argv)


if __name__ == "__main__":
    a = parse_args()
    sys.exit(main(["--mode", "sweep", "--scale", a.scale, "--aqm", a.aqm, "--presets", a.presets,
                   "--seed", a.seed, "--jobs", a.jobs, "--out", a.out]))
