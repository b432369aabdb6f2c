"""Prune a small hand-built tree and compare simulation with the exact semigroup.

Run with ``python demos/pruning_walkthrough.py``.
"""
import numpy as np

from biprune import BiMeasureTree, FiniteRTree, TreeMeasure, default_suite, mc_expectation, semigroup_exact, simulate


def build():
    # root -> 1 -> {2, 3}, unit mu atoms at the leaves, nu = length plus one atom
    tree = FiniteRTree([None, 0, 1, 1], [0.0, 1.0, 0.5, 1.5])
    mu = TreeMeasure(tree, atoms={tree.node(2): 1.0, tree.node(3): 1.0})
    nu = TreeMeasure(tree, length_coeff=np.ones(4), atoms={tree.point(1, 0.5): 0.8})
    return BiMeasureTree(tree, mu, nu)


def main():
    x = build()
    rng = np.random.default_rng(1)
    path = simulate(x, 3.0, rng)
    print("effective cuts on [0, 3]:")
    for e in path.events:
        print(f"  t={e.time:.3f}  removed mu={e.removed_mu_mass:.2f}  nu={e.removed_nu_mass:.3f}")
    for t in (0.0, 0.5, 1.0, 2.0, 3.0):
        print(f"  |mu_t| at t={t}: {path.mu_mass_at(t):.2f}")

    # every test function and time reuses the same paths, so the errors are correlated
    print("\nE[Psi(X_t)]: exact vs Monte Carlo (10^4 paths)")
    ts = [0.1, 0.5, 1.0]
    suite = default_suite()
    est, se = mc_expectation(x, ts, suite, 10**4, 7)
    for i, psi in enumerate(suite):
        for j, t in enumerate(ts):
            ex = semigroup_exact(x, t, psi)
            print(f"  {psi.name:14s} t={t:.1f}  exact={ex:.5f}  mc={est[i, j]:.5f} +/- {se[i, j]:.5f}")


if __name__ == "__main__":
    main()
