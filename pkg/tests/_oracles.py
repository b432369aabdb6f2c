"""Independent brute-force oracles used by several test modules."""
from __future__ import annotations

import itertools

import numpy as np


def prohorov_bruteforce(d: np.ndarray, w1: np.ndarray, w2: np.ndarray, step: float = 1e-4) -> float:
    """Smallest grid value ``eps`` with ``m(A) <= m'(A^eps) + eps`` both ways for every subset ``A``."""
    k = len(w1)
    top = max(w1.sum(), w2.sum(), float(d.max()) if d.size else 0.0)
    eps = np.arange(0.0, top + 2 * step, step)
    ok = np.ones(len(eps), dtype=bool)
    for r in range(1, k + 1):
        for A in itertools.combinations(range(k), r):
            dist_to_A = d[list(A)].min(axis=0)
            inside = dist_to_A[None, :] < eps[:, None]  # open eps-neighbourhood
            mA1, mA2 = w1[list(A)].sum(), w2[list(A)].sum()
            ok &= mA1 <= inside @ w2 + eps + 1e-12
            ok &= mA2 <= inside @ w1 + eps + 1e-12
    return float(eps[np.argmax(ok)])


def record_law_recursive(k: int) -> np.ndarray:
    """Law of the number of lower records of a uniform order of ``k`` items.

    The first cut lands on a uniform edge ``i`` and leaves a path of ``i`` edges.
    """
    laws = [np.eye(1, k + 1, 0)[0]]
    for j in range(1, k + 1):
        acc = np.zeros(k + 1)
        for i in range(j):
            acc[1:] += laws[i][:-1]
        laws.append(acc / j)
    return laws[k]
