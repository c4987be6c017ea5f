"""Accuracy table for the reflected-walk doubler.

For each walk length the exact acceptance probability undershoots the
target 2p by a gap that the exponential bound must dominate. Prints
the worst gap-to-bound ratio per length so a bound regression shows up
as a ratio above 1.
"""

import argparse
from fractions import Fraction

from coinfactory import walk_bias_exact, walk_error_bound


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lengths", default="64,256,1024,4096",
                    help="comma-separated walk lengths")
    ap.add_argument("--grid", type=int, default=20,
                    help="evaluate at p = i/grid for i = 1 .. grid/2 - 1")
    args = ap.parse_args()

    lengths = [int(s) for s in args.lengths.split(",")]
    print(f"{'n':>6} {'worst gap':>12} {'worst ratio':>12} {'at p':>8}")
    for n in lengths:
        worst_gap = Fraction(0)
        worst_ratio = 0.0
        worst_p = Fraction(0)
        for i in range(1, args.grid // 2):
            p = Fraction(i, args.grid)
            gap = 2 * p - walk_bias_exact(n, p)
            if gap < 0:
                raise AssertionError(f"negative gap at n={n}, p={p}")
            ratio = float(gap / walk_error_bound(n, p))
            worst_gap = max(worst_gap, gap)
            if ratio > worst_ratio:
                worst_ratio, worst_p = ratio, p
        print(f"{n:>6} {float(worst_gap):>12.3e} {worst_ratio:>12.4f} {str(worst_p):>8}")


if __name__ == "__main__":
    main()
