"""Finite measures on finite R-trees and bi-measure trees.

A :class:`TreeMeasure` is a piecewise-constant length density plus finitely
many atoms.  Edge ``e`` carries density ``length_coeff[e]`` (mass per unit
length) on the initial segment ``[0, extent[e]]`` of the edge, measured from
its parent end; restrictions to spans and pruned trees only ever shorten
these segments.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .tree import FiniteRTree, PrunedTree, Span, TreePoint


class TreeMeasure:
    def __init__(
        self,
        tree: FiniteRTree,
        length_coeff: Sequence[float] | np.ndarray | None = None,
        atoms: Mapping[TreePoint, float] | None = None,
        extent: Sequence[float] | np.ndarray | None = None,
    ):
        n = tree.n_nodes
        coeff = np.zeros(n) if length_coeff is None else np.array(length_coeff, dtype=float)
        if coeff.shape != (n,):
            raise ValueError(f"length_coeff must have one entry per node ({n})")
        if np.any(coeff < 0) or not np.all(np.isfinite(coeff)):
            raise ValueError("length densities must be finite and nonnegative")
        ext = tree.lengths.copy() if extent is None else np.minimum(np.array(extent, dtype=float), tree.lengths)
        if ext.shape != (n,) or np.any(ext < 0):
            raise ValueError("extent must be a nonnegative per-node array")
        coeff[tree.root] = 0.0
        ext[tree.root] = 0.0
        coeff[ext == 0] = 0.0
        clean: dict[TreePoint, float] = {}
        for p, m in (atoms or {}).items():
            tree.validate_point(p)
            m = float(m)
            if m < 0 or not np.isfinite(m):
                raise ValueError("atom masses must be finite and nonnegative")
            if m > 0:
                clean[p] = clean.get(p, 0.0) + m
        coeff.setflags(write=False)
        ext.setflags(write=False)
        self.tree = tree
        self.length_coeff = coeff
        self.extent = ext
        self.atoms = clean

    # -- constructors --------------------------------------------------------

    @classmethod
    def zero(cls, tree: FiniteRTree) -> "TreeMeasure":
        return cls(tree)

    @classmethod
    def length(cls, tree: FiniteRTree, coeff: float = 1.0) -> "TreeMeasure":
        return cls(tree, np.full(tree.n_nodes, float(coeff)))

    @classmethod
    def dirac(cls, tree: FiniteRTree, p: TreePoint, mass: float = 1.0) -> "TreeMeasure":
        return cls(tree, atoms={p: mass})

    # -- basic quantities ----------------------------------------------------

    @cached_property
    def length_mass(self) -> float:
        return float(np.dot(self.length_coeff, self.extent))

    @cached_property
    def total(self) -> float:
        return self.length_mass + float(sum(self.atoms.values()))

    @property
    def is_atomic(self) -> bool:
        return self.length_mass == 0.0

    def __add__(self, other: "TreeMeasure") -> "TreeMeasure":
        if other.tree is not self.tree:
            raise ValueError("measures live on different trees")
        if self.length_mass > 0 and other.length_mass > 0 and not np.array_equal(self.extent, other.extent):
            raise ValueError("cannot add length components with different extents")
        ext = self.extent if self.length_mass > 0 else other.extent
        atoms = dict(self.atoms)
        for p, m in other.atoms.items():
            atoms[p] = atoms.get(p, 0.0) + m
        return TreeMeasure(self.tree, self.length_coeff + other.length_coeff, atoms, ext)

    def scaled(self, factor: float) -> "TreeMeasure":
        if factor < 0:
            raise ValueError("mass factor must be nonnegative")
        return TreeMeasure(
            self.tree, self.length_coeff * factor, {p: m * factor for p, m in self.atoms.items()}, self.extent
        )

    def __repr__(self) -> str:
        return f"TreeMeasure(total={self.total:g}, atoms={len(self.atoms)})"


def total_mass(m: TreeMeasure) -> float:
    return m.total


def normalize(m: TreeMeasure) -> TreeMeasure:
    tot = m.total
    if not tot > 0:
        raise ValueError("cannot normalize the zero measure")
    return m.scaled(1.0 / tot)


def restrict(m: TreeMeasure, region: Span | PrunedTree) -> TreeMeasure:
    """Restriction of ``m`` to a span or to a pruned tree.

    Pruned trees are half-open at their cut points, so an atom sitting exactly
    on a cut point is dropped.
    """
    if region.tree is not m.tree and region.tree != m.tree:
        raise ValueError("region belongs to a different tree")
    tree = m.tree
    if isinstance(region, Span):
        kept = np.zeros(tree.n_nodes)
        for e, c in region.cover.items():
            kept[e] = c
    elif isinstance(region, PrunedTree):
        kept = region.kept
    else:
        raise TypeError(f"cannot restrict to {type(region).__name__}")
    ext = np.minimum(m.extent, kept)
    atoms = {p: w for p, w in m.atoms.items() if region.contains(p)}
    return TreeMeasure(tree, m.length_coeff, atoms, ext)


def measure_of_span(m: TreeMeasure, points: Sequence[TreePoint] | Span) -> float:
    """``m(span(points))`` computed directly from the covered segments."""
    s = points if isinstance(points, Span) else Span(m.tree, points)
    total = 0.0
    coeff, ext = m.length_coeff, m.extent
    for e, c in s.cover.items():
        total += coeff[e] * min(ext[e], c)
    for p, w in m.atoms.items():
        if s.contains(p):
            total += w
    return float(total)


def sample_point(m: TreeMeasure, rng: np.random.Generator) -> TreePoint:
    """One draw from the normalized measure."""
    return sample_points(m, 1, rng)[0]


def sample_points(m: TreeMeasure, size: int, rng: np.random.Generator) -> list[TreePoint]:
    tot = m.total
    if not tot > 0:
        raise ValueError("cannot sample from the zero measure")
    tree = m.tree
    atom_pts = list(m.atoms)
    weights = np.concatenate([m.length_coeff * m.extent, np.array([m.atoms[p] for p in atom_pts])])
    idx = rng.choice(len(weights), size=size, p=weights / weights.sum())
    u = rng.random(size)
    out = []
    n = tree.n_nodes
    for i, x in zip(idx, u):
        if i < n:
            off = x * m.extent[i]
            out.append(tree.point(int(i), off) if off > 0 else tree.point(int(i), m.extent[i]))
        else:
            out.append(atom_pts[i - n])
    return out


# -- skeleton and leaves -------------------------------------------------------


def _support_above(m: TreeMeasure) -> np.ndarray:
    """``flag[v]``: some support point of ``m`` lies in the subtree of node v strictly above v."""
    tree = m.tree
    n = tree.n_nodes
    own = np.zeros(n, dtype=bool)  # support on the edge above v (incl. node v)
    own |= (m.length_coeff > 0) & (m.extent > 0)
    for p in m.atoms:
        e, _ = tree.edge_coord(p)
        if e != tree.root:
            own[e] = True
    above = np.zeros(n, dtype=bool)
    par = tree.parent
    for v in tree.preorder[::-1][:-1]:
        if own[v] or above[v]:
            above[par[v]] = True
    return above


def mu_skeleton_contains(x: "BiMeasureTree | TreeMeasure", p: TreePoint) -> bool:
    """Is ``p`` strictly below a support point of the sampling measure, or an atom of it?"""
    mu = x.mu if isinstance(x, BiMeasureTree) else x
    return _in_skeleton(mu, p, _support_above(mu))


def _in_skeleton(mu: TreeMeasure, p: TreePoint, above: np.ndarray) -> bool:
    tree = mu.tree
    if p in mu.atoms:
        return True
    e, off = tree.edge_coord(p)
    if e == tree.root:
        return bool(above[tree.root])
    if above[e]:
        return True
    # remaining candidates live on edge e itself, strictly beyond off
    if mu.length_coeff[e] > 0 and mu.extent[e] > off:
        return True
    for a in mu.atoms:
        ea, oa = tree.edge_coord(a)
        if ea == e and oa > off:
            return True
    return False


def mu_leaves(x: "BiMeasureTree | TreeMeasure") -> list[TreePoint]:
    """The points of ``span(supp mu)`` outside the skeleton (finitely many here)."""
    mu = x.mu if isinstance(x, BiMeasureTree) else x
    tree = mu.tree
    above = _support_above(mu)
    out = []
    for e in np.flatnonzero((mu.length_coeff > 0) & (mu.extent > 0)):
        p = tree.point(int(e), float(mu.extent[e]))
        if not _in_skeleton(mu, p, above):
            out.append(p)
    return out


@dataclass(frozen=True)
class BiMeasureTree:
    """A finite R-tree with a sampling measure ``mu`` and a pruning measure ``nu``.

    ``cuts`` records the cut points when the value is a lazily pruned state of
    ``tree``; the measures are then already restricted to the kept part.
    """

    tree: FiniteRTree
    mu: TreeMeasure
    nu: TreeMeasure
    cuts: tuple[TreePoint, ...] = field(default=())
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if self.mu.tree is not self.tree or self.nu.tree is not self.tree:
            raise ValueError("mu and nu must live on the given tree")
        if self.check:
            if not np.isfinite(self.mu.total):
                raise ValueError("the sampling measure must be finite")
            bad = [p for p in mu_leaves(self.mu) if p in self.nu.atoms] if self.nu.atoms else []
            if bad:
                raise ValueError(f"pruning measure has atoms on mu-leaves: {bad}")

    @property
    def pruned(self) -> PrunedTree:
        return PrunedTree(self.tree, self.cuts)

    def materialize(self) -> "BiMeasureTree":
        """Copy onto a fresh tree holding only the kept part."""
        if not self.cuts:
            return self
        pruned = self.pruned
        new_tree, _, origin = pruned.materialize()
        return BiMeasureTree(
            new_tree,
            transport_measure(self.mu, pruned, new_tree, origin),
            transport_measure(self.nu, pruned, new_tree, origin),
            check=False,
        )

    def __repr__(self) -> str:
        return f"BiMeasureTree({self.tree!r}, |mu|={self.mu.total:g}, |nu|={self.nu.total:g}, cuts={len(self.cuts)})"


def transport_measure(m: TreeMeasure, pruned: PrunedTree, new_tree: FiniteRTree, edge_origin: Mapping[int, int]) -> TreeMeasure:
    """Carry ``m`` restricted to ``pruned`` over to its materialized tree."""
    old = m.tree
    n = new_tree.n_nodes
    coeff = np.zeros(n)
    ext = np.zeros(n)
    old_to_new = {}
    for e_new, e_old in edge_origin.items():
        coeff[e_new] = m.length_coeff[e_old]
        ext[e_new] = min(m.extent[e_old], new_tree.lengths[e_new])
        old_to_new[e_old] = e_new
    atoms = {}
    for p, w in m.atoms.items():
        if not pruned.contains(p):
            continue
        e, off = old.edge_coord(p)
        q = new_tree.root_point if e == old.root else new_tree.point(old_to_new[e], off)
        atoms[q] = w
    return TreeMeasure(new_tree, coeff, atoms, ext)
