"""Full-scale smoke run of the doubling factory.

Builds the target-2p schedule for a chosen margin, runs one simulated
coin word from a seeded source, and reports where the run stopped plus
how fast the certified envelope gap shrinks past the first active
checkpoint. Expect a few minutes at the default margin: the first
active checkpoint sits past 10^5 tosses.
"""

import argparse
import time
from dataclasses import dataclass
from fractions import Fraction

from coinfactory import DoublingParams, GeneratorSource, doubling_schedule, envelope_eval, simulate


@dataclass(frozen=True)
class SmokeConfig:
    eps: Fraction
    p: Fraction
    seed: int
    width_steps: int


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", default="3/25", help="margin: p stays below 1/2 - 2*eps")
    ap.add_argument("--p", default="1/4", help="true coin bias")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--width-steps", type=int, default=3,
                    help="how many doublings of n to evaluate widths at")
    args = ap.parse_args()
    cfg = SmokeConfig(Fraction(args.eps), Fraction(args.p), args.seed, args.width_steps)

    sched = doubling_schedule(DoublingParams(cfg.eps))
    meta = sched.metadata()
    n0 = meta["n0"]
    print(f"schedule {meta['type']} n0={n0}")
    for key, val in sorted(meta["parameters"].items()):
        print(f"  {key} = {val}")

    t0 = time.perf_counter()
    outcome = simulate(sched, GeneratorSource(cfg.seed, cfg.p))
    dt = time.perf_counter() - t0
    print(f"run: bit={outcome.bit} tosses={outcome.tosses} ({dt:.1f}s)")

    n = n0
    prev = None
    for _ in range(cfg.width_steps):
        t0 = time.perf_counter()
        values = envelope_eval(sched, cfg.p, n, mode="float-with-bound")
        dt = time.perf_counter() - t0
        width = values.h - values.g
        note = "" if prev is None else f" ratio={width / prev:.4f}"
        print(f"n={n}: width={width:.6f}{note} ({dt:.1f}s)")
        prev = width
        n *= 2


if __name__ == "__main__":
    main()
