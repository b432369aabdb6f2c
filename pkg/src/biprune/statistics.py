"""Sampled subtrees, polynomials, Gromov-Prohorov bounds and convergence reports.

``tau_n`` turns a list of points of a bi-measure tree into the subtree they
span together with the root, carrying the restricted pruning measure.  The
resulting :class:`PointedSample` objects are the building blocks of the test
functions and can be compared with :func:`gp_distance_upper` and
:func:`gp_distance_lower`, which bracket the pointed Gromov-Prohorov distance.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._flat import FlatTree, sample_weighted
from .generators import poisson_mean_depth
from .measure import BiMeasureTree, TreeMeasure, sample_points
from .prohorov import prohorov_bipartite
from .pruning import psi_along_path, semigroup_sample
from .rng import as_seed, parallel_map, replicate_rng
from .testfunctions import PolynomialSpec, TestFunctionSpec, poly_integral
from .tree import FiniteRTree, Span, TreePoint, distance_matrix

# -- pointed samples ------------------------------------------------------------------


@dataclass(frozen=True)
class PointedSample:
    """Span of the root and ``points`` as a tree of its own, with nu restricted to it."""

    tree: FiniteRTree
    points: tuple[TreePoint, ...]
    nu: TreeMeasure

    @property
    def n(self) -> int:
        return len(self.points)

    def distance_matrix(self) -> np.ndarray:
        return distance_matrix(self.tree, self.points)

    def to_dict(self) -> dict:
        from .io import measure_to_dict, point_to_dict, tree_to_dict

        d = tree_to_dict(self.tree)
        d["nu"] = measure_to_dict(self.nu)
        d["marked"] = [point_to_dict(self.tree, p) for p in self.points]
        return d


def materialize_span(tree: FiniteRTree, points: Sequence[TreePoint], nu: TreeMeasure) -> PointedSample:
    """Build the span as a fresh tree and move ``nu`` and the points onto it."""
    sp = Span(tree, points)
    cover = sp.cover
    parents: list[int | None] = [None]
    lengths = [0.0]
    new_id = {tree.root: 0}
    for v in tree.preorder[1:]:
        v = int(v)
        c = cover.get(v, 0.0)
        if c <= 0:
            continue
        parents.append(new_id[int(tree.parent[v])])
        lengths.append(c)
        new_id[v] = len(parents) - 1
    new = FiniteRTree(parents, lengths)

    def move(p: TreePoint) -> TreePoint:
        e, off = tree.edge_coord(p)
        if e == tree.root:
            return new.root_point
        return new.point(new_id[e], off)

    coeff = np.zeros(new.n_nodes)
    ext = np.zeros(new.n_nodes)
    for e, c in cover.items():
        coeff[new_id[e]] = nu.length_coeff[e]
        ext[new_id[e]] = min(nu.extent[e], c)
    atoms: dict[TreePoint, float] = {}
    for p, w in nu.atoms.items():
        if sp.contains(p):
            q = move(p)
            atoms[q] = atoms.get(q, 0.0) + w
    return PointedSample(new, tuple(move(p) for p in points), TreeMeasure(new, coeff, atoms, ext))


def tau_n(x: BiMeasureTree, u: Sequence[TreePoint]) -> PointedSample:
    """The pointed subtree spanned by ``u`` with nu restricted to it (closed span)."""
    if len(u) == 0:
        raise ValueError("tau_n needs at least one point")
    if x.cuts:
        for p in u:
            if not x.pruned.contains(p):
                raise ValueError(f"{p} is not in the pruned tree")
    return materialize_span(x.tree, u, x.nu)


def sample_subtree_vector(x: BiMeasureTree, n: int, rng: np.random.Generator) -> PointedSample:
    """``tau_n`` of ``n`` i.i.d. draws from the normalized sampling measure."""
    if not x.mu.total > 0:
        raise ValueError("the sampling measure is zero")
    if n < 1:
        raise ValueError("n must be positive")
    return tau_n(x, sample_points(x.mu, n, rng))


# -- polynomials ---------------------------------------------------------------------------


def eval_polynomial(
    spec: PolynomialSpec,
    target: BiMeasureTree | PointedSample,
    marked: Sequence[TreePoint] = (),
    rng: np.random.Generator | None = None,
    draws: int = 4096,
) -> tuple[float, float]:
    """``gamma(|m|) * int m^k(dv) phi(R(root, u, v))`` as ``(value, stderr)``.

    On a bi-measure tree ``m`` is mu and ``u`` is ``marked``; on a pointed
    sample ``m`` is its pruning measure and ``u`` its marked points.  Atomic
    measures are summed exactly (stderr 0); otherwise Monte-Carlo needs
    ``rng``, and its absence raises :class:`~biprune.testfunctions.ModeError`.
    """
    if isinstance(target, PointedSample):
        tree, m, u = target.tree, target.nu, list(target.points)
    else:
        tree, m, u = target.tree, target.mu, list(marked)
    spec.check_arity(len(u))
    return poly_integral(tree, m, u, spec, rng, draws)


def distance_matrix_sample(
    x: BiMeasureTree,
    marked: Sequence[TreePoint],
    m: int,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Distance matrix of ``(root, marked, v_1..v_m)`` with ``v`` i.i.d. from normalized mu.

    Returns one matrix, or a stack of ``size`` independent matrices.
    """
    ft = FlatTree.from_bimeasure(x)
    k = 1 + len(marked) + m
    reps = 1 if size is None else int(size)
    mu_w = np.concatenate([ft.mu.coeff * ft.mu.ext, ft.mu.atom_mass])
    fixed = [ft.from_point(p) for p in marked]
    S = np.empty((reps, k - 1), dtype=np.int64)
    O = np.empty((reps, k - 1))
    for j, (s, o) in enumerate(fixed):
        S[:, j], O[:, j] = s, o
    if m:
        if not mu_w.sum() > 0:
            raise ValueError("the sampling measure is zero")
        s, o = sample_weighted(ft.mu, mu_w, np.full(ft.n, np.inf), reps * m, rng)
        S[:, len(fixed) :] = s.reshape(reps, m)
        O[:, len(fixed) :] = o.reshape(reps, m)
    S = np.concatenate([np.zeros((reps, 1), dtype=np.int64), S], axis=1)
    O = np.concatenate([np.zeros((reps, 1)), O], axis=1)
    R = np.zeros((reps, k, k))
    for a in range(k):
        for b in range(a + 1, k):
            d = ft.distance(S[:, a], O[:, a], S[:, b], O[:, b])
            R[:, a, b] = R[:, b, a] = d
    return R[0] if size is None else R


# -- Gromov-Prohorov bounds ------------------------------------------------------------------


@dataclass
class _Discrete:
    ft: FlatTree
    S: np.ndarray  # support points
    O: np.ndarray
    W: np.ndarray
    mS: np.ndarray  # root followed by marked points
    mO: np.ndarray


def _discretize(s: PointedSample, grid: float) -> _Discrete:
    """Atoms stay; each length component is cut into pieces of size ``<= grid`` lumped at midpoints."""
    nu = s.nu
    ft = FlatTree(s.tree, nu, nu)
    m = ft.nu
    S, O, W = [m.atom_slot], [m.atom_off], [m.atom_mass]
    for slot in np.flatnonzero(m.coeff * m.ext > 0):
        ext = m.ext[slot]
        k = max(1, int(math.ceil(ext / grid - 1e-12)))
        h = ext / k
        S.append(np.full(k, slot))
        O.append((np.arange(k) + 0.5) * h)
        W.append(np.full(k, m.coeff[slot] * h))
    S, O, W = np.concatenate(S).astype(np.int64), np.concatenate(O), np.concatenate(W)
    keep = W > 0
    marks = [(0, 0.0)] + [ft.from_point(p) for p in s.points]
    mS = np.array([a for a, _ in marks], dtype=np.int64)
    mO = np.array([b for _, b in marks], dtype=float)
    return _Discrete(ft, S[keep], O[keep], W[keep], mS, mO)


def _grid_size(s1: PointedSample, s2: PointedSample, grid: float | None) -> float:
    if grid is not None:
        if grid <= 0:
            raise ValueError("grid must be positive")
        return float(grid)
    h = max(s1.tree.tree_height, s2.tree.tree_height)
    return 1e-3 * h if h > 0 else 1e-3


def _pairwise(ft: FlatTree, S1, O1, S2, O2, chunk: int = 512) -> np.ndarray:
    out = np.empty((len(S1), len(S2)))
    for i in range(0, len(S1), chunk):
        a = slice(i, i + chunk)
        k = len(S1[a])
        out[a] = ft.distance(
            np.repeat(S1[a], len(S2)), np.repeat(O1[a], len(S2)), np.tile(S2, k), np.tile(O2, k)
        ).reshape(k, len(S2))
    return out


def _feature(d: _Discrete) -> np.ndarray:
    """Distances of each support point to the root and the marked points."""
    return _pairwise(d.ft, d.S, d.O, d.mS, d.mO)


def _check_pair(s1: PointedSample, s2: PointedSample) -> None:
    if s1.n != s2.n:
        raise ValueError(f"pointed samples carry {s1.n} and {s2.n} marked points")


def gp_distance_lower(s1: PointedSample, s2: PointedSample, grid: float | None = None) -> float:
    """A lower bound on the pointed Gromov-Prohorov distance.

    Any admissible metric on the disjoint union moves the vector of distances
    to the root and the marked points by at most ``d(v, v') + delta`` where
    ``delta`` is the point term of the objective.  Hence the Prohorov distance
    of the pushed-forward measures on ``R^(n+1)`` (sup norm) and the largest
    discrepancy between the marked distance matrices are both lower bounds.
    """
    _check_pair(s1, s2)
    g = _grid_size(s1, s2, grid)
    d1, d2 = _discretize(s1, g), _discretize(s2, g)
    gap = float(np.max(np.abs(s1.distance_matrix() - s2.distance_matrix())))
    if len(d1.W) == 0 or len(d2.W) == 0:
        return max(gap, float(max(d1.W.sum(), d2.W.sum())))
    f1, f2 = _feature(d1), _feature(d2)
    cross = np.max(np.abs(f1[:, None, :] - f2[None, :, :]), axis=2)
    return max(gap, prohorov_bipartite(cross, d1.W, d2.W))


def _partners(src: _Discrete, dst: _Discrete, S, O, mode: str):
    """Map points of the source span onto the destination span along marked geodesics.

    A point on ``[root, u_k]`` at height ``h`` goes to the point of
    ``[root', v_k]`` at height ``h * H'_k / H_k`` (``mode="scale"``) or
    ``min(h, H'_k)`` (``mode="height"``).
    """
    fs, fd = src.ft, dst.ft
    h = fs.point_height(S, O)
    outS = np.zeros(len(S), dtype=np.int64)
    outO = np.zeros(len(S))
    done = S == 0
    for k in range(1, len(src.mS)):
        us, uo = src.mS[k], src.mO[k]
        on = ~done & np.where(S == us, O <= uo, fs.is_slot_ancestor(S, us) & (S != us))
        if not on.any():
            continue
        Hs = float(fs.point_height(np.array([us]), np.array([uo]))[0])
        vs, vo = dst.mS[k], dst.mO[k]
        Hd = float(fd.point_height(np.array([vs]), np.array([vo]))[0])
        target = h[on] * (Hd / Hs) if mode == "scale" and Hs > 0 else np.minimum(h[on], Hd)
        # slots on the destination root path, top down
        path = []
        v = int(vs)
        while v != 0:
            path.append(v)
            v = int(fd.par[v])
        path = np.array(path[::-1], dtype=np.int64)
        if len(path) == 0:
            outS[on], outO[on] = 0, 0.0
        else:
            low = fd.H[fd.par[path]]
            i = np.clip(np.searchsorted(low, target, side="left") - 1, 0, len(path) - 1)
            sl = path[i]
            off = np.minimum(target - low[i], np.where(sl == vs, vo, fd.L[sl]))
            at_root = target <= 0
            outS[on] = np.where(at_root, 0, sl)
            outO[on] = np.where(at_root, 0.0, off)
        done |= on
    return outS, outO


def _candidate(d1: _Discrete, d2: _Discrete, mode: str) -> float:
    """Objective of the metric induced by matching each support point with its partner."""
    f1S, f1O = _partners(d1, d2, d1.S, d1.O, mode)  # partners of X points in Y
    g2S, g2O = _partners(d2, d1, d2.S, d2.O, mode)  # partners of Y points in X
    # relation: (x, f(x)), (g(y), y), (root, root'), (u_k, v_k)
    AS = np.concatenate([d1.S, g2S, d1.mS])
    AO = np.concatenate([d1.O, g2O, d1.mO])
    BS = np.concatenate([f1S, d2.S, d2.mS])
    BO = np.concatenate([f1O, d2.O, d2.mO])
    dis = 0.0
    chunk = 256
    for i in range(0, len(AS), chunk):
        a = slice(i, i + chunk)
        ra = _pairwise(d1.ft, AS[a], AO[a], AS, AO)
        rb = _pairwise(d2.ft, BS[a], BO[a], BS, BO)
        dis = max(dis, float(np.max(np.abs(ra - rb))))
    # cross distances dominating the relation metric: dis/2 + min(r'(f(x), y), r(x, g(y)))
    via_f = _pairwise(d2.ft, f1S, f1O, d2.S, d2.O)
    via_g = _pairwise(d1.ft, d1.S, d1.O, g2S, g2O)
    cross = dis / 2 + np.minimum(via_f, via_g)
    return prohorov_bipartite(cross, d1.W, d2.W) + len(d1.mS) * dis / 2


def _wedge(d1: _Discrete, d2: _Discrete) -> float:
    """Both roots glued: cross distances are sums of heights."""
    h1 = d1.ft.point_height(d1.S, d1.O)
    h2 = d2.ft.point_height(d2.S, d2.O)
    cross = h1[:, None] + h2[None, :]
    marks = d1.ft.point_height(d1.mS, d1.mO).sum() + d2.ft.point_height(d2.mS, d2.mO).sum()
    return prohorov_bipartite(cross, d1.W, d2.W) + float(marks)


def gp_distance_upper(s1: PointedSample, s2: PointedSample, grid: float | None = None) -> float:
    """An upper bound on the pointed Gromov-Prohorov distance (an estimator, not the infimum).

    Candidate metrics on the disjoint union come from relations matching the
    roots, the marked points and every discretized support point with a
    partner on the other span (matched along the geodesics to the marked
    points by proportional or equal height), plus the metric gluing the two
    roots.  Each candidate's objective is evaluated on measures discretized
    with mesh ``grid`` (default ``1e-3`` times the larger height); the
    smallest value is returned.
    """
    _check_pair(s1, s2)
    g = _grid_size(s1, s2, grid)
    d1, d2 = _discretize(s1, g), _discretize(s2, g)
    if len(d1.W) == 0 or len(d2.W) == 0:
        # Prohorov against a zero measure is the other total mass; only the points matter
        mass = float(max(d1.W.sum(), d2.W.sum()))
        dis = float(np.max(np.abs(s1.distance_matrix() - s2.distance_matrix())))
        glued = float(d1.ft.point_height(d1.mS, d1.mO).sum() + d2.ft.point_height(d2.mS, d2.mO).sum())
        return mass + min(len(d1.mS) * dis / 2, glued)
    return min(_candidate(d1, d2, "scale"), _candidate(d1, d2, "height"), _wedge(d1, d2))


# -- convergence reports -----------------------------------------------------------------------


Family = Callable[[int, np.random.Generator], BiMeasureTree]


@dataclass
class ConvergenceReport:
    """Monte-Carlo means of ``E[Psi(X_t)]`` along a family of random trees."""

    indices: list[int]
    times: list[float]
    psi_ids: list[str]
    mean: np.ndarray  # [index, psi, t]
    stderr: np.ndarray
    replicates: int
    seed: int
    config: dict = field(default_factory=dict)

    def value(self, index: int, psi_id: str, t: float = 0.0) -> tuple[float, float]:
        i = self.indices.index(index)
        p = self.psi_ids.index(psi_id)
        j = self.times.index(t)
        return float(self.mean[i, p, j]), float(self.stderr[i, p, j])

    def trend(self) -> np.ndarray:
        """``|mean(N_i) - mean(N_{i+1})|`` for consecutive indices, shape ``[i, psi, t]``."""
        return np.abs(np.diff(self.mean, axis=0))

    def trend_decreasing(self, atol: float = 1e-12) -> np.ndarray:
        """Per ``(psi, t)``: whether the consecutive differences strictly decrease.

        Differences below ``atol`` count as zero, and a run of zeros passes:
        that is the only possible trend for quantities that do not depend on
        the tree, such as damped total mass at time 0.
        """
        d = self.trend()
        if len(d) < 2:
            return np.ones(d.shape[1:], dtype=bool)
        zero = d <= atol
        ok = (np.diff(d, axis=0) < 0) | (zero[1:] & zero[:-1])
        return np.all(ok, axis=0)

    def rows(self) -> list[dict]:
        out = []
        for i, idx in enumerate(self.indices):
            for p, pid in enumerate(self.psi_ids):
                for j, t in enumerate(self.times):
                    out.append(
                        {
                            "index": idx,
                            "t": t,
                            "psi_id": pid,
                            "mean": float(self.mean[i, p, j]),
                            "stderr": float(self.stderr[i, p, j]),
                            "replicates": self.replicates,
                            "seed": self.seed,
                        }
                    )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, ["index", "t", "psi_id", "mean", "stderr", "replicates", "seed"], lineterminator="\n")
        w.writeheader()
        for r in self.rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()


def replicate_values(
    x: BiMeasureTree | FlatTree,
    psis: Sequence[TestFunctionSpec],
    times: Sequence[float],
    rng: np.random.Generator,
    draws: int = 256,
    paths: int = 1,
) -> np.ndarray:
    """One unbiased draw of ``E[Psi(X_t) | X_0 = x]`` per test function and time.

    Undamped test functions use the product formula averaged over ``draws``
    sampled tuples; damped ones are averaged over ``paths`` simulated paths.
    """
    ft = x if isinstance(x, FlatTree) else FlatTree.from_bimeasure(x)
    ts = np.asarray(times, dtype=float)
    out = np.empty((len(psis), len(ts)))
    damped = [i for i, p in enumerate(psis) if p.damping is not None]
    for i, p in enumerate(psis):
        if p.damping is None:
            out[i] = semigroup_sample(ft, ts, p, draws, rng)
    if damped:
        sub = [psis[i] for i in damped]
        out[damped] = np.mean([psi_along_path(ft, ts, sub, draws, rng) for _ in range(paths)], axis=0)
    return out


def depth_control(x: BiMeasureTree, N: int) -> tuple[float, float]:
    """Mean generation of the non-root nodes and its exact expectation.

    Valid for conditioned Poisson GW families, where the expectation is
    :func:`~biprune.generators.poisson_mean_depth`.
    """
    return float(x.tree.depths[1:].mean()), poisson_mean_depth(N)


Control = Callable[[BiMeasureTree, int], "tuple[float, float]"]


def convergence_report(
    family: Family,
    indices: Sequence[int],
    psi_set: Sequence[TestFunctionSpec],
    replicates: int,
    seed: int | np.random.Generator,
    times: Sequence[float] = (0.0,),
    draws: int = 256,
    threads: int | None = None,
    paths: int = 1,
    control: Control | None = None,
) -> ConvergenceReport:
    """Means and standard errors of ``E[Psi(X_t)]`` with ``X_0`` drawn from ``family(index, rng)``.

    Replicate ``r`` of index ``N`` uses the stream ``(seed, N * 2**20 + r)``
    for both the tree and its pruning, so two families that build the same
    trees from the same stream are evaluated on identical trees.

    ``control(x, N)`` may return a statistic of the tree and its exact
    expectation; the means are then regression-adjusted by it, which keeps
    them consistent and removes the part of the tree-to-tree noise that the
    statistic explains.
    """
    if not psi_set:
        raise ValueError("need at least one test function")
    if replicates < 2:
        raise ValueError("need at least two replicates")
    if paths < 1:
        raise ValueError("paths must be positive")
    seed = as_seed(seed)
    idx = [int(i) for i in indices]
    ts = [float(t) for t in times]
    mean = np.empty((len(idx), len(psi_set), len(ts)))
    se = np.empty_like(mean)
    for a, N in enumerate(idx):

        def one(r: int, N=N):
            g = replicate_rng(seed, N * 2**20 + r)
            x = family(N, g)
            h = control(x, N) if control is not None else (0.0, 0.0)
            return replicate_values(x, psi_set, ts, g, draws, paths), h

        out = parallel_map(one, range(replicates), threads)
        vals = np.stack([v for v, _ in out], axis=-1)
        if control is not None:
            hc = np.array([h - eh for _, (h, eh) in out])
            dev = hc - hc.mean()
            var = float(dev @ dev)
            if var > 0:
                beta = (vals - vals.mean(axis=-1, keepdims=True)) @ dev / var
                vals = vals - beta[..., None] * hc
        mean[a] = vals.mean(axis=-1)
        se[a] = vals.std(axis=-1, ddof=1) / math.sqrt(replicates)
    ids = [p.name or f"psi{i}" for i, p in enumerate(psi_set)]
    return ConvergenceReport(idx, ts, ids, mean, se, replicates, seed)
