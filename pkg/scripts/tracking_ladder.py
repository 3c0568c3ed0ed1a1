#!/usr/bin/env python3
"""Tracking error against the rescaled gradient flow over a step-size ladder.

Halving the step size should roughly halve the worst deviation between the
iterates and the flow sampled at multiples of the step size; the log-log
slope of max-error versus step size should approach 1 from below.
"""

import argparse

import numpy as np

from momlab import synthetic, tracking_ladder


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--betas", type=float, nargs="+", default=[0.0, 0.5])
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.1, 0.05, 0.025])
    ap.add_argument("--horizon", type=float, default=1.0)
    args = ap.parse_args()

    p = synthetic("quadratic")
    x0 = np.array([1.0, 0.0])
    for beta in args.betas:
        maxes, slope = tracking_ladder(p, x0, beta, args.alphas, args.horizon)
        errs = "  ".join(f"{a:g}:{m:.3e}" for a, m in zip(args.alphas, maxes))
        print(f"beta={beta:4.2f}  {errs}  slope={slope:.4f}")


if __name__ == "__main__":
    main()
