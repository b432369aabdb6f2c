"""Cutting down a tree: separation times, their moments and cut counts.

A point ``u`` is separated from the root at the first cut on the closed path
``[root, u]``; ``Theta`` is the ``mu``-average of these times.  For atomic
``mu`` the joint law of separation times has the product form implemented in
:func:`joint_survival`, which gives the moments in :func:`theta_moment_exact`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._flat import FlatState, FlatTree, run_thinning
from .generators import OffspringDistribution, gw_bimeasure
from .measure import BiMeasureTree, measure_of_span
from .rng import as_seed, parallel_map, replicate_rng
from .tree import TreePoint

EXACT_LIMIT = 10**7
LENGTH_TOL = 1e-12  # relative mu mass left when a length component is cut down

RAYLEIGH_MEAN = math.sqrt(math.pi / 2.0)


@dataclass
class CutdownResult:
    """Per-replicate separation times and cut counts of a cutting-down run."""

    thetas: np.ndarray
    cut_counts: np.ndarray
    seed: int
    records: list[dict] = field(default_factory=list, repr=False)

    @property
    def theta(self) -> float:
        return float(np.mean(self.thetas))

    @property
    def theta_stderr(self) -> float:
        if len(self.thetas) < 2 or not np.all(np.isfinite(self.thetas)):
            return math.nan
        return float(np.std(self.thetas, ddof=1) / math.sqrt(len(self.thetas)))

    @property
    def cut_count(self) -> float:
        return float(np.mean(self.cut_counts))


def _flat(x) -> FlatTree:
    return x if isinstance(x, FlatTree) else FlatTree.from_bimeasure(x)


def separable(x: BiMeasureTree | FlatTree) -> bool:
    """``nu([root, u]) > 0`` for mu-almost every ``u``."""
    ft = _flat(x)
    mu, nu = ft.mu, ft.nu
    if mu.n_atoms:
        path = ft.nu_root_path(mu.atom_slot, mu.atom_off)
        if np.any((path <= 0) & (mu.atom_mass > 0)):
            return False
    for s in np.flatnonzero(mu.coeff * mu.ext > 0):
        if s == 0:
            continue
        if ft.F_node[ft.par[s]] > 0:
            continue
        # first point of slot s that carries nu
        first = math.inf
        if nu.coeff[s] > 0 and nu.ext[s] > 0:
            first = 0.0
        a0, a1 = nu.ptr[s], nu.ptr[s + 1]
        if a1 > a0:
            first = min(first, float(nu.atom_off[a0]))
        if first > 0:
            return False
    return True


def _run(ft: FlatTree, rng: np.random.Generator):
    if ft.mu.atomic:
        tol = 0.0
    else:
        tol = LENGTH_TOL * float((ft.mu.coeff * ft.mu.ext).sum() + ft.mu.atom_mass.sum())
    return run_thinning(ft, math.inf, rng, stop_when_mu_gone=True, mu_tol=tol)


def theta_simulate(x: BiMeasureTree | FlatTree, rng: np.random.Generator, return_count: bool = False):
    """One draw of ``Theta``; ``inf`` when some mu mass can never be separated.

    For atomic ``mu`` the value is exact given the event log.  With a length
    component the run stops once a fraction ``LENGTH_TOL`` of mu is left.
    """
    ft = _flat(x)
    if not separable(ft):
        return (math.inf, math.inf) if return_count else math.inf
    path = _run(ft, rng)
    mu = ft.mu
    theta = path.theta_length
    if mu.n_atoms:
        theta += float(np.dot(mu.atom_mass, path.mu_atom_death))
    if return_count:
        return theta, len(path.times)
    return theta


def cutdown_count(x: BiMeasureTree | FlatTree, rng: np.random.Generator) -> float:
    """Effective cuts until every point of mu is separated from the root.

    With mu = mu_nod this is the number of cuts until all nodes are gone.
    Returns ``inf`` when the process cannot terminate.
    """
    ft = _flat(x)
    if not separable(ft):
        return math.inf
    if not ft.mu.atomic:
        # length mu is never exhausted by finitely many cuts unless the root is hit
        if not np.any((ft.nu.atom_slot == 0) & (ft.nu.atom_mass > 0)):
            return math.inf
    return len(_run(ft, rng).times)


def cutdown(
    x: BiMeasureTree,
    replicates: int,
    seed: int | np.random.Generator,
    threads: int | None = None,
) -> CutdownResult:
    """Independent cutting-down runs on one tree; replicate ``i`` uses stream ``(seed, i)``."""
    seed = as_seed(seed)
    ft = _flat(x)

    def one(i: int):
        return theta_simulate(ft, replicate_rng(seed, i), return_count=True)

    out = parallel_map(one, range(replicates), threads)
    thetas = np.array([o[0] for o in out], dtype=float)
    counts = np.array([o[1] for o in out], dtype=float)
    recs = [{"replicate": i, "theta": thetas[i], "cut_count": counts[i], "seed": seed} for i in range(replicates)]
    return CutdownResult(thetas, counts, seed, recs)


# -- exact formulas -----------------------------------------------------------------


def joint_survival(x: BiMeasureTree, u: Sequence[TreePoint], t: Sequence[float]) -> float:
    """``P(no cut on [root, u_i] before t_i for all i)``.

    Sorting the times decreasingly, the span of the points whose time is at
    least ``t`` shrinks as ``t`` grows; each layer of ``nu`` between two
    consecutive spans is exposed for the corresponding time.
    """
    if len(u) != len(t):
        raise ValueError("need one time per point")
    if len(u) == 0:
        return 1.0
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("times must be finite and nonnegative")
    order = np.argsort(t, kind="stable")
    pts = [u[i] for i in order]
    ts = t[order]
    expo = 0.0
    nxt = 0.0
    for l in range(len(pts) - 1, -1, -1):
        cur = measure_of_span(x.nu, pts[l:])
        expo += ts[l] * (cur - nxt)
        nxt = cur
    return math.exp(-expo)


def _mu_atoms(ft: FlatTree):
    mu = ft.mu
    keep = mu.atom_mass > 0
    return mu.atom_slot[keep], mu.atom_off[keep], mu.atom_mass[keep]


def theta_moment_exact(x: BiMeasureTree | FlatTree, n: int) -> float:
    """``E[Theta^n] = n! * sum mu(u_1)...mu(u_n) / prod_j nu(span(u_1..u_j))``.

    Requires atomic mu with at most ``EXACT_LIMIT`` tuples; returns ``inf``
    when a span of zero nu mass carries positive weight.
    """
    if n < 1:
        raise ValueError("n must be positive")
    ft = _flat(x)
    if not ft.mu.atomic:
        raise ValueError("exact moments need an atomic sampling measure; use theta_moment_mc")
    S, O, W = _mu_atoms(ft)
    A = len(W)
    if A == 0:
        return 0.0
    if A**n > EXACT_LIMIT:
        raise ValueError(f"{A}^{n} tuples exceed the exact-mode limit")
    idx = np.zeros((1, 0), dtype=np.int64)
    val = np.ones(1)
    for j in range(1, n + 1):
        idx = np.concatenate([np.repeat(idx, A, axis=0), np.tile(np.arange(A), len(idx))[:, None]], axis=1)
        val = np.repeat(val, A) * W[idx[:, -1]]
        nus = ft.nu_span(S[idx], O[idx])
        if np.any((nus <= 0) & (val > 0)):
            return math.inf
        val = val / nus
    return float(math.factorial(n) * val.sum())


def theta_moment_mc(x: BiMeasureTree | FlatTree, n: int, draws: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo version of :func:`theta_moment_exact` over ``mu^n`` draws."""
    ft = _flat(x)
    st = FlatState(ft)
    total = st.mu_total
    if total <= 0:
        return 0.0, 0.0
    cols = [st.sample_mu(rng, draws) for _ in range(n)]
    S = np.stack([c[0] for c in cols], axis=1)
    O = np.stack([c[1] for c in cols], axis=1)
    val = np.full(draws, total**n * math.factorial(n))
    for j in range(1, n + 1):
        nus = ft.nu_span(S[:, :j], O[:, :j])
        with np.errstate(divide="ignore"):
            val = val / nus
    if not np.all(np.isfinite(val)):
        return math.inf, math.nan
    return float(val.mean()), float(val.std(ddof=1) / math.sqrt(draws)) if draws > 1 else math.nan


def theta_moment(x: BiMeasureTree, n: int, rng=None, draws: int = 10**5) -> tuple[float, float, str]:
    """``(value, stderr, mode)`` choosing the exact sum whenever it is feasible."""
    ft = _flat(x)
    if ft.mu.atomic and int((ft.mu.atom_mass > 0).sum()) ** n <= EXACT_LIMIT:
        return theta_moment_exact(ft, n), 0.0, "exact"
    if rng is None:
        raise ValueError("Monte Carlo moments need an rng")
    est, se = theta_moment_mc(ft, n, draws, rng)
    return est, se, "mc"


def theta_sample_moments(samples: np.ndarray, n: int) -> tuple[float, float]:
    """Sample mean and standard error of ``Theta^n``."""
    v = np.asarray(samples, dtype=float) ** n
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


# -- oracles for small instances ------------------------------------------------------


def record_count_law(k: int) -> np.ndarray:
    """Law of the number of cuts on a path of ``k`` edges with one unit atom each.

    Cutting edge ``i`` removes edges ``i..k``, so the cut edges are the
    successive lower records of a uniform random order.  Computed by brute
    force over all ``k!`` orders; entry ``c`` is ``P(count = c)``.
    """
    law = np.zeros(k + 1)
    perms = list(itertools.permutations(range(k)))
    for perm in perms:
        low, c = k, 0
        for e in perm:
            if e < low:
                low, c = e, c + 1
        law[c] += 1
    return law / len(perms)


# -- the Rayleigh experiment -----------------------------------------------------------


def rayleigh_experiment(
    N: int = 2000,
    replicates: int = 2000,
    seed: int | np.random.Generator = 0,
    eta: OffspringDistribution | None = None,
    mu: str = "mu_nod",
    nu: str = "nu_ske",
    a_N: float | None = None,
    threads: int | None = None,
) -> CutdownResult:
    """``Theta_N`` on independent conditioned GW trees (one tree per replicate).

    Defaults: Poisson(1) offspring, edges ``1/sqrt(N)``, node sampling measure
    and length pruning measure.  The limit law of ``Theta_N`` is Rayleigh with
    mean ``sqrt(pi/2)``.
    """
    seed = as_seed(seed)
    eta = OffspringDistribution.poisson(1.0) if eta is None else eta

    def one(i: int):
        rng = replicate_rng(seed, i)
        x = gw_bimeasure(eta, N, rng, mu=mu, nu=nu, a_N=a_N)
        return theta_simulate(x, rng, return_count=True)

    out = parallel_map(one, range(replicates), threads)
    thetas = np.array([o[0] for o in out], dtype=float)
    counts = np.array([o[1] for o in out], dtype=float)
    recs = [{"replicate": i, "theta": thetas[i], "cut_count": counts[i], "seed": seed} for i in range(replicates)]
    return CutdownResult(thetas, counts, seed, recs)
