"""Single-flow steady-state rate against a fixed drop/mark probability.

Prints the rate at each probe and the fitted log-log slope for Classic
(loss-driven) and Scalable (mark-driven) senders.

    python3 scripts/rate_law_experiment.py --probes 0.001,0.002,0.004,0.008,0.016
"""
import argparse

import numpy as np

from aqmsim.hosts import steady_state_rate
from aqmsim.model import TrafficClass


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--probes", default="0.001,0.004,0.016")
    ap.add_argument("--rtt-ms", type=float, default=10)
    ap.add_argument("--measure-rtts", type=int, default=1000)
    ap.add_argument("--mode", choices=("rounds", "packets"), default="rounds")
    ap.add_argument("--seed", type=int, default=7)
    a = ap.parse_args(argv)
    probes = [float(p) for p in a.probes.split(",")]
    for cls in (TrafficClass.CLASSIC, TrafficClass.SCALABLE):
        rates = [steady_state_rate(cls, p, rtt_ms=a.rtt_ms, measure_rtts=a.measure_rtts,
                                   mode=a.mode, seed=a.seed) for p in probes]
        slope = np.polyfit(np.log(probes), np.log(rates), 1)[0]
        print(f"{cls.name.lower():8s} " + "  ".join(f"p={p:g}: {r / 1e6:8.2f} Mb/s"
                                                   for p, r in zip(probes, rates))
              + f"   slope {slope:+.3f}")


if __name__ == "__main__":
    main()
