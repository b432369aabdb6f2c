"""The pruning process: simulation, states along a path, semigroup and generator.

Cuts arrive as a Poisson process with intensity ``dt x nu(dv)``; a cut at
``v`` removes every point ``w`` with ``v`` on ``[root, w]``, and cuts that
land outside the current tree have no effect.  The production simulator uses
sequential thinning (exponential waits at rate ``nu(current tree)``), while
:func:`simulate_naive` draws the whole Poisson process and filters shadowed
cuts afterwards; it is kept as an independent check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._flat import FlatPath, FlatState, FlatTree, run_thinning, sample_weighted, state_from_events
from .measure import BiMeasureTree, restrict, sample_points
from .rng import as_seed, replicate_rng
from .testfunctions import (
    ModeError,
    TestFunctionSpec,
    atom_table,
    mask_masses,
    phitilde_rows,
    psi_from_state,
)
from .io import point_to_dict
from .tree import PrunedTree, TreePoint

MASK_LIMIT = 12  # atoms handled by inclusion-exclusion over survivor sets


@dataclass(frozen=True)
class CutEvent:
    time: float
    point: TreePoint
    removed_mu_mass: float = 0.0
    removed_nu_mass: float = 0.0


@dataclass
class PruningPath:
    """An initial bi-measure tree and its effective cuts up to ``horizon``."""

    initial: BiMeasureTree
    events: tuple[CutEvent, ...]
    horizon: float
    flat: FlatPath | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events])

    def state_at(self, t: float) -> BiMeasureTree:
        return state_at(self, t)

    def mu_mass_at(self, t: float) -> float:
        """``|mu_t|`` from the event log alone."""
        _check_time(self, t)
        return self.initial.mu.total - sum(e.removed_mu_mass for e in self.events if e.time <= t)

    def event_records(self) -> list[dict]:
        return [
            {
                "t": e.time,
                "point": point_to_dict(self.initial.tree, e.point),
                "removed_mu_mass": e.removed_mu_mass,
                "removed_nu_mass": e.removed_nu_mass,
            }
            for e in self.events
        ]


def _check_time(path: PruningPath, t: float) -> None:
    if not 0 <= t <= path.horizon:
        raise ValueError(f"time {t} outside [0, {path.horizon}]")


def _flat_of(x: BiMeasureTree) -> FlatTree:
    return FlatTree(x.tree, x.mu, x.nu)


def simulate(x: BiMeasureTree, horizon: float, rng: np.random.Generator, ft: FlatTree | None = None) -> PruningPath:
    """Simulate the pruning process started in ``x`` up to ``horizon``."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    ft = ft or _flat_of(x)
    fp = run_thinning(ft, horizon, rng)
    events = tuple(
        CutEvent(float(t), ft.to_point(s, o), float(dm), float(dn))
        for t, s, o, dm, dn in zip(fp.times, fp.slots, fp.offsets, fp.removed_mu, fp.removed_nu)
    )
    return PruningPath(x, events, float(horizon), fp)


def simulate_naive(x: BiMeasureTree, horizon: float, rng: np.random.Generator) -> PruningPath:
    """Draw the full Poisson process on ``[0, horizon] x T`` and drop shadowed cuts."""
    if not math.isfinite(horizon) or horizon < 0:
        raise ValueError("the naive simulator needs a finite horizon")
    tree = x.tree
    total = x.nu.total
    k = rng.poisson(horizon * total) if total > 0 else 0
    times = np.sort(rng.uniform(0.0, horizon, size=k))
    pts = sample_points(x.nu, k, rng) if k else []
    kept: list[TreePoint] = list(x.cuts)
    events = []
    mu_prev, nu_prev = x.mu.total, x.nu.total
    for t, p in zip(times, pts):
        if any(tree.is_ancestor(c, p) for c in kept):
            continue
        kept.append(p)
        P = PrunedTree(tree, kept)
        mu_now, nu_now = restrict(x.mu, P).total, restrict(x.nu, P).total
        events.append(CutEvent(float(t), p, mu_prev - mu_now, nu_prev - nu_now))
        mu_prev, nu_prev = mu_now, nu_now
    return PruningPath(x, tuple(events), float(horizon))


def state_at(path: PruningPath, t: float) -> BiMeasureTree:
    """Right-continuous state: the initial tree pruned at every cut with time ``<= t``."""
    _check_time(path, t)
    x = path.initial
    cuts = list(x.cuts) + [e.point for e in path.events if e.time <= t]
    P = PrunedTree(x.tree, cuts)
    return BiMeasureTree(x.tree, restrict(x.mu, P), restrict(x.nu, P), cuts=P.cuts, check=False)


# -- exact formulas ---------------------------------------------------------------


def _survivor_probs(ft: FlatTree, t: float) -> np.ndarray:
    """``P(surviving mu-atoms == A)`` for every mask ``A`` by inclusion-exclusion."""
    mu = ft.mu
    A = mu.n_atoms
    masks = np.arange(1 << A)
    bits = ((masks[:, None] >> np.arange(A)) & 1).astype(bool)
    span = np.empty(1 << A)
    span[0] = 0.0
    # nu(span B) for every nonempty B: points padded by repeating the first member
    counts = bits.sum(axis=1)
    for c in range(1, A + 1):
        sel = np.flatnonzero(counts == c)
        idx = np.array([np.flatnonzero(bits[m]) for m in sel]).reshape(len(sel), c)
        span[sel] = ft.nu_span(mu.atom_slot[idx], mu.atom_off[idx])
    p = np.exp(-t * span)  # P(survivors contain B)
    for b in range(A):  # Moebius transform over supersets
        bit = 1 << b
        lo = masks[(masks & bit) == 0]
        p[lo] -= p[lo | bit]
    return np.clip(p, 0.0, 1.0)


def semigroup_exact(x: BiMeasureTree | FlatTree, t: float, psi: TestFunctionSpec) -> float:
    """``E[Psi(X_t) | X_0 = x]`` for atomic ``mu``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    ft = x if isinstance(x, FlatTree) else _flat_of(x)
    if psi.damping is None:
        tab = atom_table(ft, psi, with_masks=False)
        return float(np.sum(tab.weight * np.exp(-t * tab.nu_span) * tab.phitilde))
    if ft.mu.n_atoms > MASK_LIMIT:
        raise ModeError(f"damped semigroup is exact only up to {MASK_LIMIT} atoms")
    tab = atom_table(ft, psi, with_masks=True)
    probs = _survivor_probs(ft, t)
    g = np.exp(-psi.damping * tab.mask_mass)
    return float(np.sum(probs * g * tab.G))


def semigroup_sample(
    ft: FlatTree, ts: Sequence[float], psi: TestFunctionSpec, draws: int, rng: np.random.Generator
) -> np.ndarray:
    """Unbiased estimates of ``S_t Psi(x)`` at each ``t``, for undamped ``Psi``.

    Uses ``int mu^n(du) exp(-t nu(span u)) Phi~(u)`` with one batch of ``draws``
    samples of ``u`` shared by all times.
    """
    if psi.damping is not None:
        raise ModeError("the product formula holds for undamped test functions")
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    mu_w = np.concatenate([ft.mu.coeff * ft.mu.ext, ft.mu.atom_mass])
    total = float(mu_w.sum())
    lim = np.full(ft.n, np.inf)
    if psi.n == 0:
        return np.full(len(ts), float(psi_from_state(ft, psi, mu_w, lim, 1, rng)[0]))
    if total <= 0:
        return np.zeros(len(ts))
    S, O = sample_weighted(ft.mu, mu_w, lim, draws * psi.n, rng)
    S, O = S.reshape(draws, psi.n), O.reshape(draws, psi.n)
    span = ft.nu_span(S, O)
    phit = phitilde_rows(ft, psi, S, O, rng)
    return total**psi.n * (np.exp(-ts[:, None] * span[None, :]) * phit[None, :]).mean(axis=1)


def semigroup_mc(
    x: BiMeasureTree, t: float, psi: TestFunctionSpec, draws: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte-Carlo version of the semigroup formula.

    Undamped ``Psi`` integrates the product formula over ``mu``; damped ones
    fall back to averaging over simulated paths.
    """
    if psi.damping is not None:
        est, se = mc_expectation(x, [t], psi, draws, rng)
        return float(est[0]), float(se[0])
    ft = _flat_of(x)
    mu_w = np.concatenate([ft.mu.coeff * ft.mu.ext, ft.mu.atom_mass])
    total = float(mu_w.sum())
    if psi.n == 0:
        return float(psi_from_state(ft, psi, mu_w, np.full(ft.n, np.inf), 1, rng)[0]), 0.0
    if total <= 0:
        return 0.0, 0.0
    S, O = sample_weighted(ft.mu, mu_w, np.full(ft.n, np.inf), draws * psi.n, rng)
    S, O = S.reshape(draws, psi.n), O.reshape(draws, psi.n)
    vals = np.exp(-t * ft.nu_span(S, O)) * phitilde_rows(ft, psi, S, O, rng)
    scale = total**psi.n
    return scale * float(vals.mean()), scale * float(vals.std(ddof=1)) / math.sqrt(draws)


def _killed_masks(ft: FlatTree) -> tuple[list, list]:
    """Pieces of nu with a constant killed set: ``(mass, killed_mask)`` pairs."""
    mu, nu = ft.mu, ft.nu
    A = mu.n_atoms
    full = (1 << A) - 1
    pieces = []
    # mask of mu-atoms strictly inside the subtree of each slot node
    for s in range(ft.n):
        a_sub0, a_sub1 = mu.ptr[s + 1], mu.ptr[s + ft.size[s]]
        sub = 0
        for k in range(a_sub0, a_sub1):
            sub |= 1 << k
        a0, a1 = mu.ptr[s], mu.ptr[s + 1]
        offs = mu.atom_off[a0:a1]

        def killed_at(o, a0=a0, a1=a1, offs=offs, sub=sub):
            m = sub
            for k in range(a0 + int(np.searchsorted(offs, o, side="left")), a1):
                m |= 1 << k
            return m

        # atoms of nu on this slot
        for k in range(nu.ptr[s], nu.ptr[s + 1]):
            o = nu.atom_off[k]
            pieces.append((nu.atom_mass[k], full if s == 0 else killed_at(o)))
        ext = nu.ext[s]
        if nu.coeff[s] > 0 and ext > 0:
            cuts = np.concatenate([[0.0], offs[offs < ext], [ext]])
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                if hi > lo:
                    pieces.append((nu.coeff[s] * (hi - lo), killed_at(hi)))
    return pieces, full


def generator_apply(x: BiMeasureTree | FlatTree, psi: TestFunctionSpec, form: str = "integral") -> float:
    """Exact generator on atomic ``mu``.

    ``form="integral"`` uses ``-int mu^n(du) nu(span u) Phi~`` (undamped only);
    ``form="jump"`` uses ``int nu(dv) [Psi(x^v) - Psi(x)]``.
    """
    ft = x if isinstance(x, FlatTree) else _flat_of(x)
    if form == "integral":
        if psi.damping is not None:
            raise ModeError("the integral form holds for undamped test functions; use form='jump'")
        tab = atom_table(ft, psi, with_masks=False)
        return -float(np.sum(tab.weight * tab.nu_span * tab.phitilde))
    if form != "jump":
        raise ValueError(f"unknown generator form {form!r}")
    if ft.mu.n_atoms > 20:
        raise ModeError("jump form is exact only up to 20 mu-atoms")
    tab = atom_table(ft, psi, with_masks=True)
    g = np.ones(len(tab.G)) if psi.damping is None else np.exp(-psi.damping * tab.mask_mass)
    psi_of = g * tab.G
    pieces, full = _killed_masks(ft)
    base = psi_of[full]
    return float(sum(w * (psi_of[full & ~k] - base) for w, k in pieces))


def generator_mc(x: BiMeasureTree, psi: TestFunctionSpec, draws: int, rng) -> tuple[float, float]:
    """Integral form of the generator by Monte-Carlo over ``mu``."""
    if psi.damping is not None:
        raise ModeError("the integral form holds for undamped test functions")
    ft = _flat_of(x)
    mu_w = np.concatenate([ft.mu.coeff * ft.mu.ext, ft.mu.atom_mass])
    total = float(mu_w.sum())
    if psi.n == 0 or total <= 0:
        return 0.0, 0.0
    S, O = sample_weighted(ft.mu, mu_w, np.full(ft.n, np.inf), draws * psi.n, rng)
    S, O = S.reshape(draws, psi.n), O.reshape(draws, psi.n)
    vals = -ft.nu_span(S, O) * phitilde_rows(ft, psi, S, O, rng)
    scale = total**psi.n
    return scale * float(vals.mean()), scale * float(vals.std(ddof=1)) / math.sqrt(draws)


# -- Monte-Carlo over paths ------------------------------------------------------


def mc_expectation(
    x: BiMeasureTree,
    t: float | Sequence[float],
    psi: TestFunctionSpec | Sequence[TestFunctionSpec],
    replicates: int,
    rng: np.random.Generator | int,
    draws: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """Average of ``Psi(X_t)`` over independent paths, with standard errors.

    All requested times (and test functions) share the same paths.  When
    ``mu`` has few atoms, ``Psi`` of a state is evaluated exactly from the set
    of surviving atoms; otherwise each state is evaluated with ``draws``
    Monte-Carlo samples.  Returns arrays indexed ``[psi, t]`` (squeezed for
    scalar inputs).
    """
    if replicates < 2:
        raise ValueError("need at least two replicates")
    scalar_t = np.isscalar(t)
    single = isinstance(psi, TestFunctionSpec)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    psis = [psi] if single else list(psi)
    if np.any(ts < 0):
        raise ValueError("times must be nonnegative")
    seed = as_seed(rng)
    ft = _flat_of(x)
    horizon = float(ts.max())
    vals = np.empty((len(psis), len(ts), replicates))

    exact = ft.mu.atomic and ft.mu.n_atoms <= 20
    if exact:
        try:
            tables = [atom_table(ft, p, with_masks=True) for p in psis]
        except ModeError:
            exact = False
    if exact:
        mm = mask_masses(ft.mu.atom_mass)
        psi_of = [
            (np.ones(len(tab.G)) if p.damping is None else np.exp(-p.damping * mm)) * tab.G
            for p, tab in zip(psis, tables)
        ]
        weights = 1 << np.arange(ft.mu.n_atoms)
        for r in range(replicates):
            fp = run_thinning(ft, horizon, replicate_rng(seed, r), stop_when_mu_gone=True)
            alive = fp.mu_atom_death[None, :] > ts[:, None]
            masks = alive.astype(np.int64) @ weights
            for i, po in enumerate(psi_of):
                vals[i, :, r] = po[masks]
    else:
        for r in range(replicates):
            g = replicate_rng(seed, r)
            fp = run_thinning(ft, horizon, g)
            for j, tj in enumerate(ts):
                k = int(np.searchsorted(fp.times, tj, side="right"))
                st = state_from_events(ft, fp.slots[:k], fp.offsets[:k])
                for i, p in enumerate(psis):
                    vals[i, j, r] = _psi_of_state(ft, st, p, draws, g)
    mean = vals.mean(axis=2)
    se = vals.std(axis=2, ddof=1) / math.sqrt(replicates)
    if single and scalar_t:
        return mean[0, 0], se[0, 0]
    if single:
        return mean[0], se[0]
    if scalar_t:
        return mean[:, 0], se[:, 0]
    return mean, se


def _psi_of_state(ft: FlatTree, st: FlatState, p: TestFunctionSpec, draws: int, rng) -> float:
    total = st.mu_total
    g = 1.0 if p.damping is None else math.exp(-p.damping * total)
    if p.n == 0:
        return g * float(psi_from_state(ft, p, st.mu_w, st.lim, 1, rng)[0])
    if total <= 0:
        return 0.0
    return g * total**p.n * float(psi_from_state(ft, p, st.mu_w, st.lim, draws, rng).mean())


def psi_along_path(
    ft: FlatTree, ts: Sequence[float], psis: Sequence[TestFunctionSpec], draws: int, rng: np.random.Generator
) -> np.ndarray:
    """``Psi(X_t)`` on one simulated path for every test function and time, shape ``[psi, t]``.

    States with non-atomic or large ``mu`` are evaluated with ``draws`` inner samples.
    Functions of the total mass alone are read off the event log.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    fp = run_thinning(ft, float(ts.max()), rng)
    out = np.empty((len(psis), len(ts)))
    mass_only = [p.n == 0 and not p.factors for p in psis]
    ks = np.searchsorted(fp.times, ts, side="right")
    if any(mass_only):
        mu0 = float(ft.mu.coeff @ ft.mu.ext + ft.mu.atom_mass.sum())
        left = mu0 - np.concatenate([[0.0], np.cumsum(fp.removed_mu)])[ks]
        left = np.maximum(left, 0.0)
        for i, p in enumerate(psis):
            if mass_only[i]:
                out[i] = 1.0 if p.damping is None else np.exp(-p.damping * left)
    if all(mass_only):
        return out
    for j, k in enumerate(ks):
        st = state_from_events(ft, fp.slots[:k], fp.offsets[:k])
        for i, p in enumerate(psis):
            if not mass_only[i]:
                out[i, j] = _psi_of_state(ft, st, p, draws, rng)
    return out
