"""Finite rooted R-trees.

A :class:`FiniteRTree` is a rooted combinatorial tree whose edges carry
positive real lengths.  Every node except the root owns the edge to its
parent, so edges are indexed by their child node.  Points of the metric tree
are :class:`TreePoint` values: either a node, or an interior point of an edge
given by its distance from the parent endpoint.

Two derived point sets are provided:

* :class:`Span` -- the subtree spanned by the root and finitely many points,
  i.e. the union of the root paths ``[root, v]``.
* :class:`PrunedTree` -- the tree with everything at or above a set of cut
  points removed (the cut points themselves are removed too).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True, order=True)
class TreePoint:
    """A location on a :class:`FiniteRTree`.

    ``offset is None`` denotes the node ``node`` itself.  Otherwise the point
    lies strictly inside the edge from ``parent(node)`` to ``node`` at distance
    ``offset`` from the parent.  Build points through :meth:`FiniteRTree.point`
    to get the canonical form (offsets at an edge end collapse to the node).
    """

    node: int
    offset: float | None = None

    @property
    def is_node(self) -> bool:
        return self.offset is None

    def __repr__(self) -> str:
        if self.offset is None:
            return f"Node({self.node})"
        return f"OnEdge({self.node}, {self.offset!r})"


class FiniteRTree:
    """Immutable rooted tree with positive edge lengths.

    Parameters
    ----------
    parents : sequence of int or None
        ``parents[i]`` is the parent of node ``i``; exactly one entry (the
        root) is ``None`` or ``-1``.
    lengths : sequence of float
        ``lengths[i]`` is the length of the edge above node ``i``; the value
        stored for the root is ignored and set to 0.
    """

    def __init__(self, parents: Sequence[int | None], lengths: Sequence[float]):
        n = len(parents)
        if n == 0:
            raise ValueError("a tree needs at least one node")
        if len(lengths) != n:
            raise ValueError("parents and lengths must have the same length")
        par = np.array([-1 if p is None else int(p) for p in parents], dtype=np.int64)
        roots = np.flatnonzero(par < 0)
        if len(roots) != 1:
            raise ValueError(f"expected exactly one root, found {len(roots)}")
        root = int(roots[0])
        if np.any(par >= n):
            raise ValueError("parent id out of range")
        length = np.array(lengths, dtype=float)
        length[root] = 0.0
        nonroot = par >= 0
        if not np.all(np.isfinite(length)) or np.any(length[nonroot] <= 0):
            raise ValueError("edge lengths must be finite and strictly positive")

        pl = par.tolist()
        ll = length.tolist()
        children: list[list[int]] = [[] for _ in range(n)]
        for i, p in enumerate(pl):
            if p >= 0:
                children[p].append(i)

        # iterative preorder; also detects cycles / disconnected parts
        order: list[int] = []
        stack = [root]
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(reversed(children[v]))
            if len(order) > n:
                break
        if len(order) != n:
            raise ValueError("parent graph is not a connected tree")

        hl = [0.0] * n
        dl = [0] * n
        for v in order[1:]:
            p = pl[v]
            hl[v] = hl[p] + ll[v]
            dl[v] = dl[p] + 1
        sl = [1] * n
        for v in reversed(order[1:]):
            sl[pl[v]] += sl[v]
        height = np.array(hl)
        depth = np.array(dl, dtype=np.int64)
        size = np.array(sl, dtype=np.int64)
        tin = np.empty(n, dtype=np.int64)
        tin[order] = np.arange(n)

        self._parent = par
        self._length = length
        self._children = tuple(tuple(c) for c in children)
        self._root = root
        self._preorder = np.array(order, dtype=np.int64)
        self._height = height
        self._depth = depth
        self._tin = tin
        self._tout = tin + size
        self._size = size
        for arr in (par, length, height, depth, tin, self._tout, size, self._preorder):
            arr.setflags(write=False)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]], root: int = 0) -> "FiniteRTree":
        """Build from ``(parent, child, length)`` triples over nodes ``0..n-1``."""
        parents: list[int | None] = [None] * n
        lengths = [0.0] * n
        for p, c, ell in edges:
            if parents[c] is not None or c == root:
                raise ValueError(f"node {c} has more than one parent")
            parents[c] = p
            lengths[c] = ell
        return cls(parents, lengths)

    # -- basic accessors ------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self._parent)

    @property
    def root(self) -> int:
        return self._root

    @property
    def parent(self) -> np.ndarray:
        return self._parent

    @property
    def lengths(self) -> np.ndarray:
        return self._length

    @property
    def heights(self) -> np.ndarray:
        return self._height

    @property
    def depths(self) -> np.ndarray:
        return self._depth

    @property
    def preorder(self) -> np.ndarray:
        return self._preorder

    @property
    def subtree_sizes(self) -> np.ndarray:
        return self._size

    def children(self, v: int) -> tuple[int, ...]:
        return self._children[v]

    def edges(self) -> list[int]:
        """Edge ids (= child node ids) in preorder."""
        return [int(v) for v in self._preorder[1:]]

    @property
    def total_length(self) -> float:
        return float(self._length.sum())

    @property
    def tree_height(self) -> float:
        return float(self._height.max())

    def __repr__(self) -> str:
        return f"FiniteRTree(n_nodes={self.n_nodes}, length={self.total_length:g})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FiniteRTree):
            return NotImplemented
        return (
            np.array_equal(self._parent, other._parent)
            and np.array_equal(self._length, other._length)
        )

    __hash__ = object.__hash__

    # -- points ---------------------------------------------------------------

    def node(self, v: int) -> TreePoint:
        self._check_node(v)
        return TreePoint(int(v))

    @property
    def root_point(self) -> TreePoint:
        return TreePoint(self._root)

    def point(self, node: int, offset: float | None = None) -> TreePoint:
        """Canonical point on the edge above ``node`` at ``offset`` from the parent."""
        self._check_node(node)
        if offset is None:
            return TreePoint(int(node))
        if node == self._root:
            if offset != 0:
                raise ValueError("the root has no edge")
            return TreePoint(int(node))
        offset = float(offset)
        ell = self._length[node]
        if not (0.0 <= offset <= ell) or math.isnan(offset):
            raise ValueError(f"offset {offset} outside edge of length {ell}")
        if offset == 0.0:
            return TreePoint(int(self._parent[node]))
        if offset == ell:
            return TreePoint(int(node))
        return TreePoint(int(node), offset)

    def point_at_height(self, node: int, height: float) -> TreePoint:
        """The point of height ``height`` on the root path of ``node``."""
        self._check_node(node)
        if not 0.0 <= height <= self._height[node]:
            raise ValueError("height outside the root path")
        v = int(node)
        while v != self._root and self._height[self._parent[v]] >= height:
            v = int(self._parent[v])
        if self._height[v] == height:
            return TreePoint(v)
        return self.point(v, height - self._height[self._parent[v]])

    def validate_point(self, p: TreePoint) -> None:
        if not isinstance(p, TreePoint):
            raise TypeError(f"expected TreePoint, got {type(p).__name__}")
        self._check_node(p.node)
        if p.offset is not None:
            if p.node == self._root or not (0.0 < p.offset < self._length[p.node]):
                raise ValueError(f"{p!r} is not a canonical point of this tree")

    def _check_node(self, v: int) -> None:
        if not (0 <= int(v) < self.n_nodes):
            raise ValueError(f"node id {v} out of range")

    def edge_coord(self, p: TreePoint) -> tuple[int, float]:
        """``(edge, offset)`` with offset in ``(0, length]``; the root maps to ``(root, 0)``."""
        if p.offset is not None:
            return p.node, p.offset
        if p.node == self._root:
            return p.node, 0.0
        return p.node, float(self._length[p.node])

    def height(self, p: TreePoint) -> float:
        if p.offset is None:
            return float(self._height[p.node])
        return float(self._height[self._parent[p.node]] + p.offset)

    def is_node_ancestor(self, a: int, b: int) -> bool:
        """True if node ``a`` lies on the root path of node ``b`` (a == b allowed)."""
        return bool(self._tin[a] <= self._tin[b] < self._tout[a])

    def is_ancestor(self, x: TreePoint, y: TreePoint) -> bool:
        """True iff ``x`` lies on the closed path ``[root, y]``."""
        cx, ox = self.edge_coord(x)
        cy, oy = self.edge_coord(y)
        if cx == self._root:
            return True
        if cx == cy:
            return ox <= oy
        return self.is_node_ancestor(cx, cy)

    def lca(self, a: int, b: int) -> int:
        """Lowest common ancestor of two nodes."""
        a, b = int(a), int(b)
        da, db = self._depth[a], self._depth[b]
        while da > db:
            a = int(self._parent[a])
            da -= 1
        while db > da:
            b = int(self._parent[b])
            db -= 1
        while a != b:
            a = int(self._parent[a])
            b = int(self._parent[b])
        return a

    def leaves(self) -> list[TreePoint]:
        """Nodes without children (the root only when the tree is a single point)."""
        return [TreePoint(int(v)) for v in self._preorder if not self._children[v]]

    def nodes(self) -> list[TreePoint]:
        return [TreePoint(int(v)) for v in self._preorder]


# -- metric -------------------------------------------------------------------


def branch_point(tree: FiniteRTree, x: TreePoint, y: TreePoint) -> TreePoint:
    """The point ``x ^ y`` with ``[root, x ^ y] = [root, x] & [root, y]``."""
    tree.validate_point(x)
    tree.validate_point(y)
    if tree.is_ancestor(x, y):
        return x
    if tree.is_ancestor(y, x):
        return y
    return TreePoint(tree.lca(x.node, y.node))


def distance(tree: FiniteRTree, x: TreePoint, y: TreePoint) -> float:
    b = branch_point(tree, x, y)
    return tree.height(x) + tree.height(y) - 2.0 * tree.height(b)


def distance_matrix(tree: FiniteRTree, points: Sequence[TreePoint], include_root: bool = True) -> np.ndarray:
    """Pairwise distances of ``(root, *points)`` (or of ``points`` alone)."""
    pts = ([tree.root_point] if include_root else []) + list(points)
    k = len(pts)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = distance(tree, pts[i], pts[j])
    return out


def leaves(tree: FiniteRTree) -> list[TreePoint]:
    return tree.leaves()


def four_point_ok(d: np.ndarray, i: int, j: int, k: int, l: int, atol: float = 1e-12) -> bool:
    """0-hyperbolicity check for one quadruple of a distance matrix."""
    lhs = d[i, j] + d[k, l]
    rhs = max(d[i, k] + d[j, l], d[i, l] + d[j, k])
    return lhs <= rhs + atol


# -- spans --------------------------------------------------------------------


class Span:
    """Subtree spanned by the root and a finite list of points.

    ``cover[e]`` is the length of the initial segment ``[0, cover[e]]`` of edge
    ``e`` (measured from its parent end) that belongs to the span; edges not
    listed are not covered.  The root always belongs to the span.
    """

    def __init__(self, tree: FiniteRTree, points: Sequence[TreePoint]):
        if len(points) == 0:
            raise ValueError("span of an empty point list")
        cover: dict[int, float] = {}
        lengths = tree.lengths
        parent = tree.parent
        for p in points:
            tree.validate_point(p)
            e, off = tree.edge_coord(p)
            if e == tree.root:
                continue
            if cover.get(e, 0.0) < off:
                cover[e] = off
            v = int(parent[e])
            while v != tree.root and cover.get(v, 0.0) < lengths[v]:
                cover[v] = float(lengths[v])
                v = int(parent[v])
        self.tree = tree
        self.points = tuple(points)
        self.cover = cover

    @property
    def length(self) -> float:
        return float(sum(self.cover.values()))

    def segments(self) -> list[tuple[int, float, float]]:
        """Covered ``(edge, start, end)`` intervals, offsets from the parent end."""
        return sorted((e, 0.0, c) for e, c in self.cover.items())

    def contains(self, p: TreePoint) -> bool:
        e, off = self.tree.edge_coord(p)
        if e == self.tree.root:
            return True
        return self.cover.get(e, 0.0) >= off

    __contains__ = contains

    def __repr__(self) -> str:
        return f"Span(points={len(self.points)}, length={self.length:g})"


def span(tree: FiniteRTree, points: Sequence[TreePoint]) -> Span:
    return Span(tree, points)


# -- pruning ------------------------------------------------------------------


class PrunedTree:
    """The tree with the subtrees at or above each cut point removed.

    The kept part of edge ``e`` is the half-open segment ``[0, kept[e])`` when
    the edge carries a cut, the whole closed edge when neither it nor an
    ancestor edge is cut, and nothing otherwise.
    """

    def __init__(self, tree: FiniteRTree, cuts: Iterable[TreePoint] = ()):
        cuts = list(dict.fromkeys(cuts))
        for v in cuts:
            tree.validate_point(v)
        # drop shadowed cuts: v is irrelevant if another cut lies on [root, v]
        effective = []
        for v in cuts:
            if not any(w != v and tree.is_ancestor(w, v) for w in cuts):
                effective.append(v)
        effective.sort(key=lambda p: (int(tree._tin[p.node]), tree.edge_coord(p)[1]))
        self.tree = tree
        self.cuts = tuple(effective)

        n = tree.n_nodes
        limit = np.full(n, np.inf)
        self.root_cut = False
        for v in effective:
            e, off = tree.edge_coord(v)
            if e == tree.root:
                self.root_cut = True
            else:
                limit[e] = min(limit[e], off)
        alive = np.zeros(n, dtype=bool)
        kept = np.zeros(n)
        if not self.root_cut:
            alive[tree.root] = True
            par = tree.parent
            for v in tree.preorder[1:]:
                if alive[par[v]]:
                    if np.isinf(limit[v]):
                        alive[v] = True
                        kept[v] = tree.lengths[v]
                    else:
                        kept[v] = limit[v]
        self.limit = limit
        self.node_alive = alive
        self.kept = kept

    @property
    def empty(self) -> bool:
        return self.root_cut

    @property
    def length(self) -> float:
        return float(self.kept.sum())

    def contains(self, p: TreePoint) -> bool:
        tree = self.tree
        e, off = tree.edge_coord(p)
        if e == tree.root:
            return not self.root_cut
        if not self.node_alive[tree.parent[e]]:
            return False
        return off < self.limit[e]

    __contains__ = contains

    def materialize(self) -> tuple[FiniteRTree, dict[int, int], dict[int, int]]:
        """Fresh tree for the kept part.

        Returns ``(tree, node_map, edge_origin)``: ``node_map`` sends surviving
        original node ids to new ids and ``edge_origin`` sends every new
        non-root node to the original edge it was cut from.  New nodes absent
        from ``node_map``'s image are stumps closing a half-open edge.
        """
        if self.root_cut:
            raise ValueError("pruning at the root leaves the empty tree")
        tree = self.tree
        parents: list[int | None] = [None]
        lengths = [0.0]
        node_map = {tree.root: 0}
        origin: dict[int, int] = {}
        for v in tree.preorder[1:]:
            v = int(v)
            p = int(tree.parent[v])
            if not self.node_alive[p] or self.kept[v] <= 0:
                continue
            parents.append(node_map[p])
            lengths.append(float(self.kept[v]))
            origin[len(parents) - 1] = v
            if self.node_alive[v]:
                node_map[v] = len(parents) - 1
        return FiniteRTree(parents, lengths), node_map, origin

    def __repr__(self) -> str:
        return f"PrunedTree(cuts={len(self.cuts)}, length={self.length:g})"


def prune_at(tree: FiniteRTree, v: TreePoint) -> PrunedTree:
    return PrunedTree(tree, [v])


def prune_at_set(tree: FiniteRTree, cuts: Iterable[TreePoint]) -> PrunedTree:
    return PrunedTree(tree, cuts)


def rescale(tree: FiniteRTree, a: float) -> FiniteRTree:
    """Multiply every edge length by ``a > 0``."""
    if not a > 0:
        raise ValueError("scale factor must be positive")
    return FiniteRTree([None if p < 0 else int(p) for p in tree.parent], tree.lengths * a)
