"""Random and deterministic constructions of bi-measure trees.

Conditioned Galton-Watson trees are produced from their Lukasiewicz
sequence: ``N + 1`` offspring counts summing to ``N`` are drawn
exchangeably, then rotated by the cycle lemma so that the walk
``sum(xi - 1)`` first reaches ``-1`` at the very end.  A conditioned tree
has ``N`` nodes besides the root (the ancestor), hence ``N`` unit edges.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
from scipy import special, stats

from .measure import BiMeasureTree, TreeMeasure
from .tree import FiniteRTree, TreePoint, rescale

__all__ = [
    "OffspringDistribution",
    "parse_family",
    "gw_conditioned",
    "gw_bimeasure",
    "default_scale",
    "gw_rejection",
    "lukasiewicz_to_tree",
    "cycle_lemma_rotate",
    "tree_shape",
    "enumerate_shapes",
    "poisson_mean_depth",
    "Excursion",
    "contour",
    "glue",
    "glue_with_map",
    "rescale",
    "rescale_measure",
    "StandardMeasures",
    "standard_measures",
    "crt_scale",
    "stable_scale",
]

K_MAX = 10**6


# -- offspring laws ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OffspringDistribution:
    """An offspring law on ``{0, 1, 2, ...}`` stored as a pmf table.

    ``family`` and ``params`` record how it was built; ``truncated_mass`` is
    the tail mass dropped when the table had to be cut off.
    """

    family: str
    params: tuple[tuple[str, float], ...]
    pmf: np.ndarray = field(repr=False)
    truncated_mass: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=float)
        if p.ndim != 1 or len(p) == 0 or np.any(p < 0):
            raise ValueError("pmf must be a nonempty nonnegative vector")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "pmf", p)

    # constructors

    @classmethod
    def poisson(cls, lam: float = 1.0) -> "OffspringDistribution":
        if lam <= 0:
            raise ValueError("Poisson rate must be positive")
        kmax = int(lam + 20 * math.sqrt(lam) + 40)
        p = stats.poisson.pmf(np.arange(kmax + 1), lam)
        tail = 1.0 - p.sum()
        return cls("poisson", (("lam", float(lam)),), p / p.sum(), max(tail, 0.0))

    @classmethod
    def geometric(cls, p: float = 0.5) -> "OffspringDistribution":
        """``P(k) = p (1 - p)^k`` on ``k >= 0``; critical at ``p = 1/2``."""
        if not 0 < p <= 1:
            raise ValueError("geometric parameter must lie in (0, 1]")
        if p == 1:
            pmf = np.array([1.0])
        else:
            kmax = int(math.ceil(math.log(1e-17) / math.log(1 - p))) + 1
            pmf = p * (1 - p) ** np.arange(kmax + 1)
        tail = 1.0 - pmf.sum()
        return cls("geometric", (("p", float(p)),), pmf / pmf.sum(), max(tail, 0.0))

    @classmethod
    def binary(cls, p2: float = 0.5) -> "OffspringDistribution":
        if not 0 <= p2 <= 1:
            raise ValueError("p2 must lie in [0, 1]")
        return cls("binary", (("p2", float(p2)),), np.array([1 - p2, 0.0, p2]))

    @classmethod
    def heavy_tail(cls, alpha: float, C: float = 1.0, kmax: int = K_MAX) -> "OffspringDistribution":
        """Critical law with ``P(k) = C k^(-1-alpha)`` for ``k >= k0``.

        ``k0 >= 2`` is the smallest cutoff whose tail has mean at most one;
        ``P(0)`` and ``P(1)`` then make the law a critical pmf.  The tail beyond
        ``kmax`` is dropped; its mass is kept in ``truncated_mass``.
        """
        if not 1 < alpha < 2:
            raise ValueError("alpha must lie in (1, 2)")
        if C <= 0:
            raise ValueError("C must be positive")
        k = np.arange(kmax + 1, dtype=float)
        w = np.zeros(kmax + 1)
        w[1:] = C * k[1:] ** (-1.0 - alpha)
        # suffix sums of mass and mean, from the top
        mass_suffix = np.cumsum(w[::-1])[::-1]
        mean_suffix = np.cumsum((k * w)[::-1])[::-1]
        ok = np.flatnonzero((mean_suffix <= 1.0) & (mass_suffix <= 1.0) & (k >= 2))
        if len(ok) == 0:
            raise ValueError("no admissible cutoff")
        k0 = int(ok[0])
        w[:k0] = 0.0
        tail_mass, tail_mean = mass_suffix[k0], mean_suffix[k0]
        w[1] = 1.0 - tail_mean
        w[0] = 1.0 - w[1] - tail_mass
        dropped = float(C * special.zeta(1.0 + alpha, kmax + 1))
        return cls("stable", (("alpha", float(alpha)), ("C", float(C)), ("k0", float(k0))), w / w.sum(), dropped)

    @classmethod
    def table(cls, probs: Sequence[float]) -> "OffspringDistribution":
        return cls("table", tuple((str(i), float(p)) for i, p in enumerate(probs)), np.asarray(probs, float))

    # moments

    @property
    def param(self) -> dict[str, float]:
        return dict(self.params)

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.pmf)), self.pmf))

    @property
    def variance(self) -> float:
        k = np.arange(len(self.pmf))
        return float(np.dot(k * k, self.pmf) - self.mean**2)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def is_critical(self) -> bool:
        return abs(self.mean - 1.0) < 1e-9

    @property
    def is_subcritical_or_critical(self) -> bool:
        return self.mean <= 1.0 + 1e-9

    def spec(self) -> str:
        """The family string accepted by :func:`parse_family`."""
        par = self.param
        if self.family == "poisson":
            return f"poisson:{par['lam']:g}"
        if self.family == "geometric":
            return f"geometric:{par['p']:g}"
        if self.family == "binary":
            return "binary" if par["p2"] == 0.5 else f"binary:p2={par['p2']:g}"
        if self.family == "stable":
            return f"stable:alpha={par['alpha']:g},C={par['C']:g}"
        return "table:" + ",".join(f"{p:g}" for p in self.pmf)

    # sampling

    def sample(self, size: int | tuple, rng: np.random.Generator) -> np.ndarray:
        if self.family == "poisson":
            return rng.poisson(self.param["lam"], size=size)
        if self.family == "geometric":
            return rng.geometric(self.param["p"], size=size) - 1
        cdf = self._cdf
        u = rng.random(size)
        return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)

    @property
    def _cdf(self) -> np.ndarray:
        c = self.__dict__.get("_cdf_cache")
        if c is None:
            c = np.cumsum(self.pmf)
            c[-1] = 1.0
            object.__setattr__(self, "_cdf_cache", c)
        return c


def parse_family(spec: str) -> OffspringDistribution:
    """Parse ``"poisson:1.0"``, ``"geometric:0.5"``, ``"binary"``,
    ``"stable:alpha=1.5,C=1"`` or ``"table:0.5,0,0.5"``."""
    name, _, rest = spec.strip().partition(":")
    name = name.lower()
    try:
        if name == "poisson":
            return OffspringDistribution.poisson(float(rest) if rest else 1.0)
        if name == "geometric":
            return OffspringDistribution.geometric(float(rest) if rest else 0.5)
        if name == "binary":
            kw = _kwargs(rest)
            return OffspringDistribution.binary(kw.get("p2", 0.5))
        if name == "stable":
            kw = _kwargs(rest)
            if "alpha" not in kw:
                raise ValueError("stable family needs alpha=...")
            return OffspringDistribution.heavy_tail(kw["alpha"], kw.get("C", 1.0))
        if name == "table":
            return OffspringDistribution.table([float(x) for x in rest.split(",")])
    except (TypeError, KeyError) as exc:
        raise ValueError(f"bad offspring family {spec!r}: {exc}") from exc
    raise ValueError(f"unknown offspring family {spec!r}")


def _kwargs(rest: str) -> dict[str, float]:
    out = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"expected key=value, got {item!r}")
        out[key.strip()] = float(val)
    return out


# -- conditioned Galton-Watson trees --------------------------------------------


def cycle_lemma_rotate(xi: np.ndarray) -> np.ndarray:
    """Rotate offspring counts summing to ``len(xi) - 1`` into a Lukasiewicz sequence."""
    xi = np.asarray(xi)
    if xi.sum() != len(xi) - 1:
        raise ValueError("offspring counts must sum to length - 1")
    walk = np.cumsum(xi - 1)  # walk[k] = S_{k+1}
    start = (int(np.argmin(walk)) + 1) % len(xi)
    return np.roll(xi, -start)


def lukasiewicz_to_tree(xi: Sequence[int], edge_length: float = 1.0) -> FiniteRTree:
    """Plane tree whose preorder offspring counts are ``xi`` (node ids = preorder)."""
    xi = [int(x) for x in xi]
    n = len(xi)
    parents: list[int | None] = [None] * n
    stack = [[0, xi[0]]]
    for i in range(1, n):
        while stack and stack[-1][1] == 0:
            stack.pop()
        if not stack:
            raise ValueError("not a Lukasiewicz sequence")
        parents[i] = stack[-1][0]
        stack[-1][1] -= 1
        stack.append([i, xi[i]])
    if any(s[1] for s in stack):
        raise ValueError("not a Lukasiewicz sequence")
    return FiniteRTree(parents, [edge_length] * n)


def _conditioned_counts(eta: OffspringDistribution, N: int, rng: np.random.Generator, max_tries: int) -> np.ndarray:
    n = N + 1
    if eta.family == "poisson":
        return rng.multinomial(N, np.full(n, 1.0 / n))
    if eta.family == "geometric" and eta.param["p"] < 1:
        # uniform weak composition of N into n parts (stars and bars)
        bars = np.sort(rng.choice(N + n - 1, size=n - 1, replace=False))
        edges = np.concatenate([[-1], bars, [N + n - 1]])
        return np.diff(edges) - 1
    if eta.family == "binary" and 0 < eta.param["p2"] < 1:
        if N % 2:
            raise ValueError(f"binary trees have an even number of non-root nodes, got N={N}")
        xi = np.zeros(n, dtype=np.int64)
        xi[rng.choice(n, size=N // 2, replace=False)] = 2
        return xi
    # generic: rejection on the sum of i.i.d. draws
    batch = max(1, min(max_tries, 2**20 // n))
    tries = 0
    while tries < max_tries:
        draws = eta.sample((batch, n), rng)
        hit = np.flatnonzero(draws.sum(axis=1) == N)
        if len(hit):
            return draws[hit[0]]
        tries += batch
    raise ValueError(f"no conditioned tree with N={N} found after {max_tries} tries for {eta.spec()}")


def gw_conditioned(
    eta: OffspringDistribution,
    N: int,
    rng: np.random.Generator,
    max_tries: int = 10**6,
    edge_length: float = 1.0,
) -> FiniteRTree:
    """Galton-Watson tree conditioned to have ``N`` nodes besides the root."""
    if N < 1:
        raise ValueError("N must be at least 1")
    xi = _conditioned_counts(eta, int(N), rng, max_tries)
    return lukasiewicz_to_tree(cycle_lemma_rotate(xi), edge_length)


def gw_rejection(
    eta: OffspringDistribution, N: int, rng: np.random.Generator, max_tries: int = 10**6
) -> FiniteRTree:
    """Same law as :func:`gw_conditioned`, by growing whole trees and rejecting on size."""
    if N < 1:
        raise ValueError("N must be at least 1")
    n = N + 1
    for _ in range(max_tries):
        xi = []
        open_slots = 1
        while open_slots > 0 and len(xi) < n:
            k = int(eta.sample(1, rng)[0])
            xi.append(k)
            open_slots += k - 1
        if open_slots == 0 and len(xi) == n:
            return lukasiewicz_to_tree(xi)
    raise ValueError(f"no tree with N={N} after {max_tries} tries")


def tree_shape(tree: FiniteRTree) -> str:
    """Canonical string of the unordered rooted shape (ignores edge lengths)."""
    codes: dict[int, str] = {}
    for v in tree.preorder[::-1]:
        v = int(v)
        codes[v] = "(" + "".join(sorted(codes[c] for c in tree.children(v))) + ")"
    return codes[tree.root]


def _lukasiewicz_sequences(N: int) -> Iterator[tuple[int, ...]]:
    n = N + 1

    def rec(prefix: list[int], s: int, remaining: int):
        # s = open slots so far; remaining = entries still to place
        if remaining == 0:
            if s == 0:
                yield tuple(prefix)
            return
        if s == 0:
            return
        for k in range(0, N + 1):
            if s - 1 + k > remaining - 1:
                break
            prefix.append(k)
            yield from rec(prefix, s - 1 + k, remaining - 1)
            prefix.pop()

    yield from rec([], 1, n)


def enumerate_shapes(eta: OffspringDistribution, N: int) -> dict[str, float]:
    """Exact conditional law of the unordered shape of a GW tree with ``N`` non-root nodes."""
    pmf = eta.pmf
    weights: dict[str, float] = {}
    for xi in _lukasiewicz_sequences(N):
        if max(xi) >= len(pmf):
            continue
        w = float(np.prod(pmf[list(xi)]))
        if w > 0:
            key = tree_shape(lukasiewicz_to_tree(xi))
            weights[key] = weights.get(key, 0.0) + w
    total = sum(weights.values())
    if total == 0:
        raise ValueError(f"N={N} has probability zero under {eta.spec()}")
    return {k: v / total for k, v in sorted(weights.items())}


def poisson_mean_depth(N: int) -> float:
    """Expected mean generation of the ``N`` non-root nodes of a conditioned Poisson GW tree.

    Conditioned on its size ``n = N + 1`` such a tree is a uniform rooted
    labelled tree, where a uniform node sits at depth ``k`` with probability
    ``(k + 1)/n * prod_{i <= k} (1 - i/n)``.  The value does not depend on
    the Poisson rate and serves as a control variate in convergence reports.
    """
    if N < 1:
        raise ValueError("N must be positive")
    n = N + 1
    k = np.arange(n)
    logprod = np.concatenate([[0.0], np.cumsum(np.log1p(-np.arange(1, n) / n))])
    p = (k + 1) / n * np.exp(logprod)
    return float(np.dot(k, p) / (1.0 - p[0]))


# -- excursions -----------------------------------------------------------------


@dataclass(frozen=True)
class Excursion:
    """Piecewise-linear excursion on ``[0, 1]`` through the given breakpoints."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 2:
            raise ValueError("need matching 1-d time and value arrays")
        if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must increase strictly from 0 to 1")
        if v[0] != 0.0 or v[-1] != 0.0 or np.any(v < 0):
            raise ValueError("an excursion starts and ends at 0 and stays nonnegative")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __call__(self, s):
        return np.interp(s, self.times, self.values)

    def scaled(self, a: float) -> "Excursion":
        return Excursion(self.times, self.values * a)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time,value\n")
        for t, v in zip(self.times, self.values):
            buf.write(f"{float(t)!r},{float(v)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Excursion":
        rows = [ln.split(",") for ln in text.strip().splitlines() if ln and not ln.startswith(("#", "time"))]
        arr = np.array(rows, dtype=float)
        return cls(arr[:, 0], arr[:, 1])


def contour(tree: FiniteRTree) -> Excursion:
    """Depth-first height process at times ``k / 2N``, children in stored order."""
    N = tree.n_nodes - 1
    if N < 1:
        raise ValueError("contour needs at least one edge")
    h = tree.heights
    vals = [h[tree.root]]
    stack = [(tree.root, iter(tree.children(tree.root)))]
    while stack:
        v, it = stack[-1]
        c = next(it, None)
        if c is None:
            stack.pop()
            if stack:
                vals.append(h[stack[-1][0]])
        else:
            vals.append(h[c])
            stack.append((c, iter(tree.children(c))))
    return Excursion(np.arange(2 * N + 1) / (2 * N), np.array(vals))


def glue_with_map(e: Excursion) -> tuple[FiniteRTree, TreeMeasure, list[TreePoint]]:
    """Tree coded by ``e`` with the pushforward of Lebesgue measure.

    Vertices sit at every breakpoint value that the sweep reaches, so every
    breakpoint maps to a node; the third return value lists those nodes.
    Plateaus become atoms.
    """
    t, v = e.times, e.values
    parent = [-1]
    height = [0.0]
    coeff = [0.0]
    atoms: dict[int, float] = {}
    stack = [0]
    where = [0]
    for k in range(1, len(t)):
        dt = t[k] - t[k - 1]
        h = v[k]
        top = stack[-1]
        a = height[top]
        if h > a:
            parent.append(top)
            height.append(h)
            coeff.append(dt / (h - a))
            stack.append(len(height) - 1)
        elif h < a:
            rate = dt / (a - h)
            while True:
                w = stack.pop()
                p = parent[w]
                if height[p] > h:
                    coeff[w] += rate
                    continue
                if height[p] == h:
                    coeff[w] += rate
                    break
                # split the edge p -> w at height h
                parent.append(p)
                height.append(h)
                coeff.append(coeff[w])
                new = len(height) - 1
                parent[w] = new
                coeff[w] += rate
                stack.append(new)
                break
        else:
            atoms[top] = atoms.get(top, 0.0) + dt
        where.append(stack[-1])
    par = np.array(parent)
    hh = np.array(height)
    lengths = np.where(par >= 0, hh - hh[np.maximum(par, 0)], 0.0)
    tree = FiniteRTree([None if p < 0 else int(p) for p in par], lengths)
    mu = TreeMeasure(tree, np.array(coeff), {tree.node(i): m for i, m in atoms.items()})
    return tree, mu, [tree.node(i) for i in where]


def glue(e: Excursion) -> tuple[FiniteRTree, TreeMeasure]:
    tree, mu, _ = glue_with_map(e)
    return tree, mu


# -- rescaling and the standard measures --------------------------------------


def rescale_measure(m: TreeMeasure, factor: float = 1.0, tree: FiniteRTree | None = None) -> TreeMeasure:
    """Multiply all masses by ``factor``; optionally move ``m`` onto ``tree``.

    ``tree`` must have the same shape as ``m.tree`` with every edge scaled by
    one common factor ``a``; offsets and extents are scaled accordingly.
    """
    if factor < 0:
        raise ValueError("mass factor must be nonnegative")
    if tree is None:
        return m.scaled(factor)
    old = m.tree
    if tree.n_nodes != old.n_nodes or not np.array_equal(tree.parent, old.parent):
        raise ValueError("target tree must have the same shape")
    nonroot = old.parent >= 0
    if not nonroot.any():
        return TreeMeasure(tree, atoms={tree.root_point: factor * sum(m.atoms.values())} if m.atoms else None)
    ratios = tree.lengths[nonroot] / old.lengths[nonroot]
    a = float(ratios[0])
    if not np.allclose(ratios, a, rtol=1e-12):
        raise ValueError("target tree is not a uniform rescaling")
    atoms = {}
    for p, w in m.atoms.items():
        atoms[p if p.is_node else tree.point(p.node, p.offset * a)] = w * factor
    # density per unit length scales by factor / a to keep edge masses times factor
    return TreeMeasure(tree, m.length_coeff * factor / a, atoms, m.extent * a)


def crt_scale(N: int, sigma: float = 1.0) -> float:
    """Edge length ``sigma / sqrt(N)`` for finite-variance offspring laws."""
    return sigma / math.sqrt(N)


def stable_scale(N: int, alpha: float, C: float = 1.0) -> float:
    """Edge length for offspring tails ``C k^(-1-alpha)`` in the ``alpha``-stable domain."""
    abar = 1.0 - 1.0 / alpha
    const = alpha * (alpha - 1.0) / (C * special.gamma(2.0 - alpha))
    return N ** (-abar) * const ** (-1.0 / alpha)


def default_scale(eta: OffspringDistribution, N: int) -> float:
    """``stable_scale`` for heavy-tailed laws, ``crt_scale`` with the law's sigma otherwise."""
    if eta.family == "stable":
        p = dict(eta.params)
        return stable_scale(N, p["alpha"], p["C"])
    return crt_scale(N, eta.sigma)


class StandardMeasures:
    """The sampling and pruning measures on a rescaled conditioned tree.

    Each measure is built on first access.
    """

    def __init__(self, tree: FiniteRTree, N: int, a_N: float):
        self.tree = tree
        self.N = N
        self.a_N = a_N

    @cached_property
    def _nonroot(self) -> list[TreePoint]:
        return [self.tree.node(int(v)) for v in self.tree.preorder[1:]]

    @cached_property
    def mu_ske(self) -> TreeMeasure:
        return TreeMeasure(self.tree, np.full(self.tree.n_nodes, 1.0 / (self.N * self.a_N)))

    @cached_property
    def mu_nod(self) -> TreeMeasure:
        return TreeMeasure(self.tree, atoms={p: 1.0 / self.N for p in self._nonroot})

    @cached_property
    def nu_ske(self) -> TreeMeasure:
        return TreeMeasure(self.tree, np.ones(self.tree.n_nodes))

    @cached_property
    def nu_nod(self) -> TreeMeasure:
        return TreeMeasure(self.tree, atoms={p: self.a_N for p in self._nonroot})

    @cached_property
    def nu_adh(self) -> TreeMeasure:
        tree = self.tree
        adh = {}
        for v in range(tree.n_nodes):
            c = len(tree.children(v))
            if c >= 2:
                adh[tree.node(v)] = float(c - 1)
        return TreeMeasure(tree, atoms=adh)

    def nu_height(self, a: float) -> TreeMeasure:
        """Unit atoms at all points of height exactly ``a`` that are not leaves."""
        tree = self.tree
        h = tree.heights
        atoms: dict[TreePoint, float] = {}
        if a == 0:
            if tree.children(tree.root):
                atoms[tree.root_point] = 1.0
            return TreeMeasure(tree, atoms=atoms)
        for c in tree.edges():
            lo, hi = h[tree.parent[c]], h[c]
            if lo < a <= hi:
                if a == hi and not tree.children(c):
                    continue
                atoms[tree.point(c, a - lo)] = 1.0
        return TreeMeasure(tree, atoms=atoms)

    def get(self, name: str, **kw) -> TreeMeasure:
        if name == "nu_height":
            return self.nu_height(kw["a"])
        if name not in ("mu_ske", "mu_nod", "nu_ske", "nu_nod", "nu_adh"):
            raise ValueError(f"unknown standard measure {name!r}")
        return getattr(self, name)


def standard_measures(tree: FiniteRTree, N: int, a_N: float) -> StandardMeasures:
    """The standard measures on a tree with ``N`` edges of length ``a_N``."""
    if tree.n_nodes != N + 1:
        raise ValueError(f"tree has {tree.n_nodes - 1} non-root nodes, expected N={N}")
    if a_N <= 0:
        raise ValueError("a_N must be positive")
    return StandardMeasures(tree, N, a_N)


def gw_bimeasure(
    eta: OffspringDistribution,
    N: int,
    rng: np.random.Generator,
    mu: str = "mu_ske",
    nu: str = "nu_ske",
    a_N: float | None = None,
    height: float | None = None,
) -> BiMeasureTree:
    """Conditioned GW tree with edges ``a_N`` carrying two standard measures.

    ``a_N`` defaults to :func:`default_scale`.  ``height``
    is only used by ``nu="nu_height"``.
    """
    if a_N is None:
        a_N = default_scale(eta, N)
    tree = gw_conditioned(eta, N, rng, edge_length=a_N)
    sm = standard_measures(tree, N, a_N)
    return BiMeasureTree(tree, sm.get(mu, a=height), sm.get(nu, a=height))
