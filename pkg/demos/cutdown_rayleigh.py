"""Separation times on large Poisson Galton-Watson trees approach a Rayleigh law.

Run with ``python demos/cutdown_rayleigh.py [N] [replicates]``.
"""
import math
import sys

import numpy as np

from biprune import rayleigh_experiment
from biprune.cutdown import RAYLEIGH_MEAN


def main(N=500, replicates=400):
    res = rayleigh_experiment(N, replicates, seed=5)
    th = res.thetas
    print(f"N={N}, {replicates} trees")
    print(f"  mean Theta_N = {th.mean():.4f} +/- {th.std(ddof=1) / math.sqrt(len(th)):.4f}")
    print(f"  Rayleigh mean = {RAYLEIGH_MEAN:.4f}")
    print(f"  mean cut count = {res.cut_counts.mean():.1f}")
    # empirical vs Rayleigh cdf 1 - exp(-x^2/2) at a few quantiles
    for q in (0.5, 1.0, 1.5, 2.0, 2.5):
        print(f"  P(Theta <= {q}): empirical {np.mean(th <= q):.3f}, Rayleigh {1 - math.exp(-q * q / 2):.3f}")


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:3]]
    main(*args)
