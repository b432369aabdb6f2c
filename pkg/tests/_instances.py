"""Small random bi-measure trees shared by the test modules."""
from __future__ import annotations

import numpy as np

from biprune.measure import BiMeasureTree, TreeMeasure
from biprune.tree import FiniteRTree, TreePoint


def random_tree(rng: np.random.Generator, n_nodes: int, lo: float = 0.2, hi: float = 2.0) -> FiniteRTree:
    parents = [None] + [int(rng.integers(0, i)) for i in range(1, n_nodes)]
    lengths = [0.0] + list(rng.uniform(lo, hi, size=n_nodes - 1))
    return FiniteRTree(parents, lengths)


def random_point(rng: np.random.Generator, tree: FiniteRTree, interior: bool = True) -> TreePoint:
    """A node or (if ``interior``) possibly a point inside an edge; never the root."""
    v = int(rng.integers(1, tree.n_nodes))
    if interior and rng.random() < 0.5:
        return tree.point(v, float(rng.uniform(0.1, 0.9) * tree.lengths[v]))
    return tree.node(v)


def random_atomic_instance(
    rng: np.random.Generator,
    max_atoms: int = 8,
    max_nodes: int = 6,
    nu_kind: str = "mixed",
    separable: bool = True,
) -> BiMeasureTree:
    """Atomic ``mu`` with an atom on every leaf (so every point is in the mu-skeleton).

    ``nu_kind`` is ``"length"``, ``"atomic"`` or ``"mixed"``.  With
    ``separable`` every edge carries ``nu`` mass, so all separation times are finite.
    """
    while True:
        tree = random_tree(rng, int(rng.integers(2, max_nodes + 1)))
        leaves = tree.leaves()
        if len(leaves) <= max_atoms:
            break
    atoms = {p: float(rng.uniform(0.2, 1.5)) for p in leaves}
    extra = int(rng.integers(0, max_atoms - len(leaves) + 1))
    for _ in range(extra):
        atoms[random_point(rng, tree)] = float(rng.uniform(0.2, 1.5))
    mu = TreeMeasure(tree, atoms=atoms)

    n = tree.n_nodes
    coeff = np.zeros(n)
    nu_atoms: dict[TreePoint, float] = {}
    if nu_kind in ("length", "mixed"):
        coeff = rng.uniform(0.2, 1.5, size=n)
        if not separable:
            coeff[rng.random(n) < 0.3] = 0.0
    if nu_kind in ("atomic", "mixed"):
        edges = tree.edges()
        for c in edges:
            if nu_kind == "atomic" and separable or rng.random() < 0.5:
                off = float(rng.uniform(0.1, 0.9) * tree.lengths[c])
                nu_atoms[tree.point(c, off)] = float(rng.uniform(0.2, 1.5))
        if rng.random() < 0.3:
            nu_atoms[tree.node(int(rng.integers(1, n)))] = float(rng.uniform(0.2, 1.0))
    nu = TreeMeasure(tree, coeff, nu_atoms)
    return BiMeasureTree(tree, mu, nu)


def single_edge(L: float = 2.0, nu: str = "length") -> BiMeasureTree:
    tree = FiniteRTree([None, 0], [0.0, L])
    mu = TreeMeasure.dirac(tree, tree.node(1))
    if nu == "length":
        nuw = TreeMeasure.length(tree)
    elif nu == "zero":
        nuw = TreeMeasure.zero(tree)
    else:
        nuw = TreeMeasure.dirac(tree, tree.point(1, L / 2))
    return BiMeasureTree(tree, mu, nuw)


def cherry(a: float = 1.0, b: float = 2.0, c: float = 0.5) -> FiniteRTree:
    """Root 0, branch node 1 at height ``c``, leaves 2 and 3 at extra lengths ``a`` and ``b``."""
    return FiniteRTree([None, 0, 1, 1], [0.0, c, a, b])
