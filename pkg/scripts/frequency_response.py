"""Tabulate continuous, discrete and measured gains of the weight filter for a few beta pairs."""

import argparse
import csv
import math
import sys

import numpy as np

from evolved_sampling.analysis import gain_table

PAIRS = [(0.2, 0.9), (0.2, 0.8), (0.9, 0.9), (0.5, 0.99)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=12, help="log-spaced frequencies in [0.01, pi]")
    args = parser.parse_args()

    omegas = np.geomspace(0.01, math.pi, args.points)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["beta1", "beta2", "omega", "continuous_gain", "discrete_gain", "empirical_gain"])
    for b1, b2 in PAIRS:
        for row in gain_table(b1, b2, omegas):
            writer.writerow([b1, b2] + [f"{row[k]:.6f}" for k in
                                        ("omega", "continuous_gain", "discrete_gain", "empirical_gain")])


if __name__ == "__main__":
    main()
