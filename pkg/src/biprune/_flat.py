"""Array form of a bi-measure tree used by the simulators and MC evaluators.

Nodes are renumbered into preorder *slots*, so every subtree occupies a
contiguous slot range ``[s, s + size[s])``.  A point is a pair
``(slot, offset)`` with ``offset`` measured from the parent end of the edge
above the slot node; the root is ``(0, 0.0)`` and the node itself is
``(s, length[s])``.

A pruned state is one float per slot, ``lim``: a point ``(s, o)`` is kept
iff ``o < lim[s]``.  Uncut slots hold ``inf``, slots inside a removed
subtree hold ``0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measure import BiMeasureTree, TreeMeasure
from .tree import FiniteRTree, TreePoint


@dataclass
class FlatMeasure:
    coeff: np.ndarray  # per slot density
    ext: np.ndarray  # per slot support end
    atom_slot: np.ndarray
    atom_off: np.ndarray
    atom_mass: np.ndarray
    ptr: np.ndarray  # atoms of slot s are atom_*[ptr[s]:ptr[s+1]]

    @property
    def n_atoms(self) -> int:
        return len(self.atom_mass)

    @property
    def atomic(self) -> bool:
        return not np.any(self.coeff * self.ext > 0)


class FlatTree:
    def __init__(self, tree: FiniteRTree, mu: TreeMeasure, nu: TreeMeasure):
        self.tree = tree
        order = tree.preorder
        n = tree.n_nodes
        slot_of = np.empty(n, dtype=np.int64)
        slot_of[order] = np.arange(n)
        self.node_of = np.asarray(order)
        self.slot_of = slot_of
        par_node = tree.parent[order]
        self.par = np.where(par_node >= 0, slot_of[np.maximum(par_node, 0)], -1)
        self.L = tree.lengths[order].astype(float)
        self.H = tree.heights[order].astype(float)
        self.size = tree.subtree_sizes[order].astype(np.int64)
        self.depth = tree.depths[order].astype(np.int64)
        self.n = n
        self.mu = self._flatten(mu)
        self.nu = self._flatten(nu)
        self._build_lifting()
        self._build_nu_paths()

    @classmethod
    def from_bimeasure(cls, x: BiMeasureTree) -> "FlatTree":
        if x.cuts:
            x = x.materialize()
        return cls(x.tree, x.mu, x.nu)

    def _flatten(self, m: TreeMeasure) -> FlatMeasure:
        tree = self.tree
        coeff = m.length_coeff[self.node_of].astype(float)
        ext = m.extent[self.node_of].astype(float)
        slots, offs, mass = [], [], []
        for p, w in m.atoms.items():
            e, o = tree.edge_coord(p)
            slots.append(self.slot_of[e])
            offs.append(o)
            mass.append(w)
        slots = np.array(slots, dtype=np.int64)
        offs = np.array(offs, dtype=float)
        mass = np.array(mass, dtype=float)
        idx = np.lexsort((offs, slots))
        slots, offs, mass = slots[idx], offs[idx], mass[idx]
        ptr = np.searchsorted(slots, np.arange(self.n + 1))
        return FlatMeasure(coeff, ext, slots, offs, mass, ptr)

    # -- geometry --------------------------------------------------------------

    def _build_lifting(self):
        n = self.n
        levels = max(1, int(np.ceil(np.log2(max(2, self.depth.max() + 1)))) + 1)
        up = np.empty((levels, n), dtype=np.int64)
        up[0] = np.where(self.par >= 0, self.par, 0)
        for k in range(1, levels):
            up[k] = up[k - 1][up[k - 1]]
        self.up = up

    def lca_slots(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.array(a, dtype=np.int64, copy=True)
        b = np.array(b, dtype=np.int64, copy=True)
        swap = self.depth[a] < self.depth[b]
        a[swap], b[swap] = b[swap], a[swap].copy()
        diff = self.depth[a] - self.depth[b]
        for k in range(len(self.up)):
            bit = ((diff >> k) & 1).astype(bool)
            a[bit] = self.up[k][a[bit]]
        for k in range(len(self.up) - 1, -1, -1):
            ua, ub = self.up[k][a], self.up[k][b]
            move = ua != ub
            a[move], b[move] = ua[move], ub[move]
        same = a == b
        return np.where(same, a, self.up[0][a])

    def is_slot_ancestor(self, a, b):
        """Node ``a`` is an ancestor of (or equal to) node ``b``."""
        return (a <= b) & (b < a + self.size[a])

    def point_height(self, s, o):
        return np.where(s == 0, 0.0, self.H[np.maximum(self.par[s], 0)] + o)

    def branch_height(self, s1, o1, s2, o2):
        h1 = self.point_height(s1, o1)
        h2 = self.point_height(s2, o2)
        a12 = self.is_slot_ancestor(s1, s2)
        a21 = self.is_slot_ancestor(s2, s1)
        out = np.where(s1 == s2, np.minimum(h1, h2), np.where(a12, h1, np.where(a21, h2, 0.0)))
        other = ~(a12 | a21)
        if np.any(other):
            c = self.lca_slots(np.asarray(s1)[other], np.asarray(s2)[other])
            out = np.array(out, dtype=float)
            out[other] = self.H[c]
        return out

    def branch_point(self, s1, o1, s2, o2):
        """Vectorized branch point as ``(slot, offset)`` arrays."""
        s1, o1, s2, o2 = (np.asarray(v) for v in (s1, o1, s2, o2))
        a12 = self.is_slot_ancestor(s1, s2)
        a21 = self.is_slot_ancestor(s2, s1)
        same = s1 == s2
        bs = np.where(a12 & ~same, s1, s2)
        bo = np.where(same, np.minimum(o1, o2), np.where(a12, o1, o2))
        other = ~(a12 | a21)
        if np.any(other):
            c = self.lca_slots(s1[other], s2[other])
            bs = bs.copy()
            bo = bo.astype(float).copy()
            bs[other] = c
            bo[other] = self.L[c]
        return bs, bo

    def distance(self, s1, o1, s2, o2):
        h1 = self.point_height(s1, o1)
        h2 = self.point_height(s2, o2)
        return h1 + h2 - 2.0 * self.branch_height(s1, o1, s2, o2)

    # -- nu along root paths -------------------------------------------------------

    def _build_nu_paths(self):
        nu = self.nu
        per_slot_atoms = np.bincount(nu.atom_slot, weights=nu.atom_mass, minlength=self.n)
        own = nu.coeff * nu.ext + per_slot_atoms
        F = np.empty(self.n)
        for s in range(self.n):  # preorder: parents first
            F[s] = own[s] + (F[self.par[s]] if s > 0 else 0.0)
        self.F_node = F
        self._nu_keys = nu.atom_slot + 1j * nu.atom_off
        self._nu_cum = np.concatenate([[0.0], np.cumsum(nu.atom_mass)])

    def nu_root_path(self, s, o):
        """``nu([root, (s, o)])`` (closed path), vectorized."""
        s = np.asarray(s, dtype=np.int64)
        o = np.asarray(o, dtype=float)
        nu = self.nu
        base = np.where(s == 0, 0.0, self.F_node[np.maximum(self.par[s], 0)])
        length = nu.coeff[s] * np.minimum(o, nu.ext[s])
        lo = nu.ptr[s]
        hi = np.searchsorted(self._nu_keys, s + 1j * o, side="right") if nu.n_atoms else lo
        return base + length + (self._nu_cum[hi] - self._nu_cum[lo])

    def nu_span(self, S: np.ndarray, O: np.ndarray) -> np.ndarray:
        """``nu(span(points))`` for rows of points, arrays of shape ``(K, k)``."""
        S = np.asarray(S, dtype=np.int64)
        O = np.asarray(O, dtype=float)
        if S.ndim == 1:
            S, O = S[:, None], O[:, None]
        order = np.lexsort((O, S), axis=-1)
        S = np.take_along_axis(S, order, -1)
        O = np.take_along_axis(O, order, -1)
        F = self.nu_root_path(S, O)
        total = F.sum(axis=1)
        for j in range(1, S.shape[1]):
            bs, bo = self.branch_point(S[:, j - 1], O[:, j - 1], S[:, j], O[:, j])
            total -= self.nu_root_path(bs, bo)
        return total

    # -- conversion ------------------------------------------------------------------

    def to_point(self, s: int, o: float) -> TreePoint:
        s = int(s)
        if s == 0:
            return self.tree.root_point
        return self.tree.point(int(self.node_of[s]), float(o))

    def from_point(self, p: TreePoint) -> tuple[int, float]:
        e, o = self.tree.edge_coord(p)
        return int(self.slot_of[e]), float(o)


# -- pruned states ---------------------------------------------------------------


class FlatState:
    """Mutable pruned state with cached measure weights."""

    def __init__(self, ft: FlatTree):
        self.ft = ft
        self.lim = np.full(ft.n, np.inf)
        self.nu_w = self._weights(ft.nu)
        self.mu_w = self._weights(ft.mu)
        self.nu_total = float(self.nu_w.sum())
        self.mu_total = float(self.mu_w.sum())

    def copy(self) -> "FlatState":
        new = object.__new__(FlatState)
        new.ft = self.ft
        new.lim = self.lim.copy()
        new.nu_w = self.nu_w.copy()
        new.mu_w = self.mu_w.copy()
        new.nu_total = self.nu_total
        new.mu_total = self.mu_total
        return new

    def _weights(self, m: FlatMeasure) -> np.ndarray:
        return np.concatenate([m.coeff * m.ext, m.atom_mass])

    def alive(self, s, o):
        return np.asarray(o) < self.lim[np.asarray(s)]

    def cut(self, s: int, o: float) -> tuple[float, float]:
        """Apply a cut at a kept point; returns the removed ``(mu, nu)`` masses."""
        ft = self.ft
        hi = s + ft.size[s]
        removed = []
        for m, w in ((ft.mu, self.mu_w), (ft.nu, self.nu_w)):
            before = 0.0
            # slot s: length beyond o, atoms at offset >= o
            old_len = w[s]
            new_len = m.coeff[s] * min(m.ext[s], o)
            before += old_len - new_len
            w[s] = new_len
            a0, a1 = m.ptr[s], m.ptr[s + 1]
            if a1 > a0:
                k = a0 + np.searchsorted(m.atom_off[a0:a1], o, side="left")
                before += w[ft.n + k : ft.n + a1].sum()
                w[ft.n + k : ft.n + a1] = 0.0
            if hi > s + 1:
                before += w[s + 1 : hi].sum()
                w[s + 1 : hi] = 0.0
                b0, b1 = m.ptr[s + 1], m.ptr[hi]
                before += w[ft.n + b0 : ft.n + b1].sum()
                w[ft.n + b0 : ft.n + b1] = 0.0
            removed.append(before)
        self.lim[s] = min(self.lim[s], o)
        self.lim[s + 1 : hi] = 0.0
        if s == 0:
            self.lim[:] = 0.0
        self.mu_total = max(self.mu_total - removed[0], 0.0)
        self.nu_total = max(self.nu_total - removed[1], 0.0)
        if not np.any(self.nu_w > 0):
            self.nu_total = 0.0
        if not np.any(self.mu_w > 0):
            self.mu_total = 0.0
        return removed[0], removed[1]

    def _sample(self, m: FlatMeasure, w: np.ndarray, size: int, rng: np.random.Generator):
        return sample_weighted(m, w, self.lim, size, rng)

    def sample_nu(self, rng, size: int = 1):
        return self._sample(self.ft.nu, self.nu_w, size, rng)

    def sample_mu(self, rng, size: int = 1):
        return self._sample(self.ft.mu, self.mu_w, size, rng)

    def mu_atom_alive(self) -> np.ndarray:
        m = self.ft.mu
        return m.atom_off < self.lim[m.atom_slot]


def sample_weighted(m: FlatMeasure, w: np.ndarray, lim: np.ndarray, size: int, rng: np.random.Generator):
    """Draw points from the measure whose current component weights are ``w``.

    ``w`` holds the per-slot length masses followed by the atom masses; length
    components are uniform on their kept extent ``min(ext, lim)``.
    """
    n = len(m.coeff)
    cdf = np.cumsum(w)
    tot = cdf[-1] if len(cdf) else 0.0
    if not tot > 0:
        raise ValueError("cannot sample from the zero measure")
    idx = np.searchsorted(cdf, rng.random(size) * tot, side="right")
    idx = np.minimum(idx, len(w) - 1)
    is_len = idx < n
    S = np.empty(size, dtype=np.int64)
    O = np.empty(size)
    li = idx[is_len]
    kept = np.minimum(m.ext[li], lim[li])
    S[is_len] = li
    O[is_len] = (1.0 - rng.random(len(li))) * kept  # in (0, kept]
    ai = idx[~is_len] - n
    S[~is_len] = m.atom_slot[ai]
    O[~is_len] = m.atom_off[ai]
    return S, O


@dataclass
class FlatPath:
    """Effective cut events of one simulated path."""

    times: np.ndarray
    slots: np.ndarray
    offsets: np.ndarray
    removed_mu: np.ndarray
    removed_nu: np.ndarray
    mu_atom_death: np.ndarray  # inf when never separated
    theta_length: float  # sum of time * removed length-mu mass
    final_mu: float
    final_nu: float


def run_thinning(
    ft: FlatTree,
    horizon: float,
    rng: np.random.Generator,
    stop_when_mu_gone: bool = False,
    state: FlatState | None = None,
    t0: float = 0.0,
    mu_tol: float = 0.0,
) -> FlatPath:
    """Sequential thinning: exponential waits at the current rate of nu.

    With ``stop_when_mu_gone`` the run ends once at most ``mu_tol`` of mu is
    left; a positive tolerance is needed when mu has a length component,
    since kept stumps then never lose all of their mass.
    """
    st = FlatState(ft) if state is None else state
    times, slots, offs, rmu, rnu = [], [], [], [], []
    death = np.full(ft.mu.n_atoms, np.inf)
    if state is not None:
        death[~st.mu_atom_alive()] = -np.inf
    theta_len = 0.0
    t = t0
    mu = ft.mu
    while st.nu_total > 0:
        if stop_when_mu_gone and st.mu_total <= mu_tol:
            break
        t += rng.exponential(1.0 / st.nu_total)
        if t > horizon:
            break
        S, O = st.sample_nu(rng, 1)
        s, o = int(S[0]), float(O[0])
        alive_before = st.mu_atom_alive() if mu.n_atoms else None
        dm, dn = st.cut(s, o)
        atom_loss = 0.0
        if alive_before is not None:
            died = alive_before & ~st.mu_atom_alive()
            death[died] = t
            atom_loss = float(mu.atom_mass[died].sum())
        theta_len += t * max(dm - atom_loss, 0.0)
        times.append(t)
        slots.append(s)
        offs.append(o)
        rmu.append(dm)
        rnu.append(dn)
    return FlatPath(
        np.array(times),
        np.array(slots, dtype=np.int64),
        np.array(offs),
        np.array(rmu),
        np.array(rnu),
        death,
        theta_len,
        st.mu_total,
        st.nu_total,
    )


def state_from_events(ft: FlatTree, slots, offsets) -> FlatState:
    st = FlatState(ft)
    for s, o in zip(slots, offsets):
        if st.alive(s, o):
            st.cut(int(s), float(o))
    return st
