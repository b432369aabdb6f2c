"""Test functions on bi-measure trees.

A test function is

    Psi(x) = gamma(|mu|) * int mu^n(du) prod_I Phi_I(span(u_I), u_I, nu|span(u_I))

where each factor ``Phi_I`` is a (possibly damped) polynomial of the
sub-list ``u_I``: ``gamma_I(|nu_S|) * int nu_S^m(dv) phi(R(root, u_I, v))``
with ``nu_S`` the pruning measure restricted to the span ``S`` of ``u_I``.

``phi`` is built from a small closed family of bounded primitives so that
sup bounds are always available.  In ``phi`` the distance-matrix index 0 is
the root, ``1..k`` are the marked points ``u_I`` and ``k+1..k+m`` the
integration points ``v``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._flat import FlatTree, sample_weighted
from .measure import BiMeasureTree, TreeMeasure, restrict, sample_points
from .tree import Span, TreePoint, distance_matrix

EXACT_LIMIT = 10**7


class ModeError(ValueError):
    """Exact evaluation was requested where only Monte-Carlo is available."""


# -- phi primitives -------------------------------------------------------------


class Phi:
    def __call__(self, R: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sup(self) -> float:
        raise NotImplementedError

    def max_index(self) -> int:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __add__(self, other: "Phi") -> "Phi":
        return Sum((self, other))

    def __mul__(self, other: "Phi") -> "Phi":
        return Prod((self, other))


@dataclass(frozen=True)
class Const(Phi):
    c: float = 1.0

    def __call__(self, R):
        return np.full(R.shape[:-2], float(self.c))

    def sup(self):
        return abs(self.c)

    def max_index(self):
        return 0

    def to_dict(self):
        return {"const": self.c}


@dataclass(frozen=True)
class ExpDist(Phi):
    """``exp(-rate * r_ij)``."""

    i: int
    j: int
    rate: float = 1.0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")

    def __call__(self, R):
        return np.exp(-self.rate * R[..., self.i, self.j])

    def sup(self):
        return 1.0

    def max_index(self):
        return max(self.i, self.j)

    def to_dict(self):
        return {"exp": [self.i, self.j, self.rate]}


@dataclass(frozen=True)
class RationalDist(Phi):
    """``1 / (1 + scale * r_ij)``."""

    i: int
    j: int
    scale: float = 1.0

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")

    def __call__(self, R):
        return 1.0 / (1.0 + self.scale * R[..., self.i, self.j])

    def sup(self):
        return 1.0

    def max_index(self):
        return max(self.i, self.j)

    def to_dict(self):
        return {"rational": [self.i, self.j, self.scale]}


@dataclass(frozen=True)
class Sum(Phi):
    terms: tuple

    def __call__(self, R):
        return sum(t(R) for t in self.terms)

    def sup(self):
        return float(sum(t.sup() for t in self.terms))

    def max_index(self):
        return max((t.max_index() for t in self.terms), default=0)

    def to_dict(self):
        return {"sum": [t.to_dict() for t in self.terms]}


@dataclass(frozen=True)
class Prod(Phi):
    factors: tuple

    def __call__(self, R):
        out = np.ones(R.shape[:-2])
        for f in self.factors:
            out = out * f(R)
        return out

    def sup(self):
        return float(np.prod([f.sup() for f in self.factors]))

    def max_index(self):
        return max((f.max_index() for f in self.factors), default=0)

    def to_dict(self):
        return {"prod": [f.to_dict() for f in self.factors]}


def phi_from_dict(d: dict) -> Phi:
    (key, val), = d.items()
    if key == "const":
        return Const(float(val))
    if key == "exp":
        return ExpDist(int(val[0]), int(val[1]), float(val[2]))
    if key == "rational":
        return RationalDist(int(val[0]), int(val[1]), float(val[2]))
    if key == "sum":
        return Sum(tuple(phi_from_dict(v) for v in val))
    if key == "prod":
        return Prod(tuple(phi_from_dict(v) for v in val))
    raise ValueError(f"unknown phi primitive {key!r}")


def damping_sup(c: float | None, power: int) -> float:
    """``sup_x x^power * gamma(x)`` for ``gamma(x) = exp(-c x)`` (or 1 when ``c`` is None)."""
    if c is None:
        return 1.0 if power == 0 else math.inf
    if power == 0:
        return 1.0
    return (power / (c * math.e)) ** power


def gamma(c: float | None, x):
    return np.ones_like(np.asarray(x, dtype=float)) if c is None else np.exp(-c * np.asarray(x, dtype=float))


# -- specs ----------------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialSpec:
    """``gamma(|m_S|) * int m_S^m(dv) phi(R(root, u, v))`` with optional damping ``exp(-c x)``."""

    m: int = 0
    phi: Phi = field(default_factory=Const)
    damping: float | None = None

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        if self.damping is not None and self.damping <= 0:
            raise ValueError("damping rate must be positive")

    def check_arity(self, k: int) -> None:
        if self.phi.max_index() > k + self.m:
            raise ValueError(f"phi uses index {self.phi.max_index()} but only {k + self.m} points exist")

    def sup_bound(self) -> float:
        return self.phi.sup() * damping_sup(self.damping, self.m)

    def to_dict(self) -> dict:
        return {"m": self.m, "phi": self.phi.to_dict(), "damping": self.damping}

    @classmethod
    def from_dict(cls, d: dict) -> "PolynomialSpec":
        return cls(int(d.get("m", 0)), phi_from_dict(d["phi"]), d.get("damping"))


@dataclass(frozen=True)
class TestFunctionSpec:
    """``Psi^{gamma, n, prod_I Phi_I}``; ``factors`` pairs 1-based index tuples with polynomials."""

    n: int
    factors: tuple[tuple[tuple[int, ...], PolynomialSpec], ...] = ()
    damping: float | None = None
    name: str = ""

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        for I, p in self.factors:
            if any(not 1 <= i <= self.n for i in I) or len(set(I)) != len(I):
                raise ValueError(f"bad index set {I} for n={self.n}")
            p.check_arity(len(I))
        if self.damping is not None and self.damping <= 0:
            raise ValueError("damping rate must be positive")

    @property
    def needs_nu_draws(self) -> bool:
        return any(p.m > 0 for _, p in self.factors)

    def phitilde_sup(self) -> float:
        return float(np.prod([p.sup_bound() for _, p in self.factors])) if self.factors else 1.0

    def bound(self, mass_cap: float | None = None) -> float:
        """Upper bound on ``|Psi|``; needs a cap on ``|mu|`` when undamped and ``n > 0``."""
        s = self.phitilde_sup()
        if self.damping is not None:
            return s * damping_sup(self.damping, self.n)
        if self.n == 0:
            return s
        if mass_cap is None:
            return math.inf
        return s * mass_cap**self.n

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "damping": self.damping,
            "factors": [{"I": list(I), "poly": p.to_dict()} for I, p in self.factors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TestFunctionSpec":
        return cls(
            int(d["n"]),
            tuple((tuple(int(i) for i in f["I"]), PolynomialSpec.from_dict(f["poly"])) for f in d.get("factors", [])),
            d.get("damping"),
            d.get("name", ""),
        )


def default_suite() -> list[TestFunctionSpec]:
    """Five test functions touching both the mu-geometry and the nu-restriction."""
    return [
        TestFunctionSpec(0, (), damping=1.0, name="damped_mass"),
        TestFunctionSpec(1, (((1,), PolynomialSpec(0, ExpDist(0, 1))),), name="root_distance"),
        TestFunctionSpec(2, (((1, 2), PolynomialSpec(0, ExpDist(1, 2))),), name="pair_distance"),
        TestFunctionSpec(1, (((1,), PolynomialSpec(0, Const(1.0), damping=1.0)),), name="nu_path"),
        TestFunctionSpec(
            2,
            tuple((I, PolynomialSpec(0, Const(1.0), damping=1.0)) for I in ((1,), (2,), (1, 2))),
            name="nu_spans",
        ),
    ]


# -- evaluation -----------------------------------------------------------------


def _root_matrix(ft: FlatTree, S: np.ndarray, O: np.ndarray) -> np.ndarray:
    """Distance matrices of ``(root, points)`` for each row; shape ``(K, k+1, k+1)``."""
    K, k = S.shape
    R = np.zeros((K, k + 1, k + 1))
    if k == 0:
        return R
    h = ft.point_height(S, O)
    R[:, 0, 1:] = h
    R[:, 1:, 0] = h
    for a in range(k):
        for b in range(a + 1, k):
            d = ft.distance(S[:, a], O[:, a], S[:, b], O[:, b])
            R[:, a + 1, b + 1] = d
            R[:, b + 1, a + 1] = d
    return R


def _factor_fast(ft: FlatTree, I, poly: PolynomialSpec, S, O) -> np.ndarray:
    cols = [i - 1 for i in I]
    Si, Oi = S[:, cols], O[:, cols]
    val = poly.phi(_root_matrix(ft, Si, Oi))
    if poly.damping is not None:
        if len(cols):
            mass = ft.nu_span(Si, Oi)
        else:
            mass = np.full(len(S), ft.nu_root_path(np.zeros(1, int), np.zeros(1))[0])
        val = val * np.exp(-poly.damping * mass)
    return val


def poly_integral(
    tree, m: TreeMeasure, u: Sequence[TreePoint], poly: PolynomialSpec, rng=None, draws: int = 256
) -> tuple[float, float]:
    """``gamma(|m|) * int m^k(dv) phi(R(root, u, v))`` as ``(value, stderr)``.

    Exact (stderr 0) when ``m`` is atomic with at most ``EXACT_LIMIT`` tuples;
    otherwise Monte-Carlo with ``draws`` samples, which needs ``rng``.
    """
    u = list(u)
    mass = m.total
    g = 1.0 if poly.damping is None else math.exp(-poly.damping * mass)
    if poly.m == 0:
        R = distance_matrix(tree, u)
        return g * float(poly.phi(R[None])[0]), 0.0
    if mass == 0:
        return 0.0, 0.0
    if isinstance(poly.phi, Const):
        return g * poly.phi.c * mass**poly.m, 0.0
    if m.is_atomic and len(m.atoms) ** poly.m <= EXACT_LIMIT:
        pts = list(m.atoms)
        w = np.array([m.atoms[p] for p in pts])
        total = 0.0
        for combo in itertools.product(range(len(pts)), repeat=poly.m):
            R = distance_matrix(tree, u + [pts[c] for c in combo])
            total += float(np.prod(w[list(combo)])) * float(poly.phi(R[None])[0])
        return g * total, 0.0
    if rng is None:
        raise ModeError("polynomial over a non-atomic measure needs Monte-Carlo (pass rng)")
    vals = np.empty(draws)
    for r in range(draws):
        v = sample_points(m, poly.m, rng)
        vals[r] = float(poly.phi(distance_matrix(tree, u + v)[None])[0])
    scale = g * mass**poly.m
    se = scale * float(vals.std(ddof=1)) / math.sqrt(draws) if draws > 1 else math.nan
    return scale * float(vals.mean()), se


def _factor_slow(ft: FlatTree, nu: TreeMeasure, u: list[TreePoint], poly: PolynomialSpec, rng, draws: int):
    """One factor on one marked list, with nu restricted to the span of ``u``."""
    tree = ft.tree
    sp = Span(tree, u if u else [tree.root_point])
    return poly_integral(tree, restrict(nu, sp), u, poly, rng, draws)


def phitilde_rows(
    ft: FlatTree, spec: TestFunctionSpec, S: np.ndarray, O: np.ndarray, rng=None, draws: int = 256
) -> np.ndarray:
    """``Phi~(tau(u))`` for each row ``u`` of ``(S, O)`` (shape ``(K, n)``)."""
    S = np.asarray(S, dtype=np.int64)
    O = np.asarray(O, dtype=float)
    if S.ndim == 1:
        S, O = S.reshape(-1, spec.n), O.reshape(-1, spec.n)
    out = np.ones(len(S))
    for I, poly in spec.factors:
        if poly.m == 0:
            out *= _factor_fast(ft, I, poly, S, O)
            continue
        nu = TreeMeasure(
            ft.tree,
            ft.nu.coeff[ft.slot_of],
            {ft.to_point(s, o): w for s, o, w in zip(ft.nu.atom_slot, ft.nu.atom_off, ft.nu.atom_mass)},
            ft.nu.ext[ft.slot_of],
        )
        cache: dict = {}
        for r in range(len(S)):
            key = tuple(zip(S[r, [i - 1 for i in I]], O[r, [i - 1 for i in I]]))
            if key not in cache:
                u = [ft.to_point(s, o) for s, o in key]
                cache[key] = _factor_slow(ft, nu, u, poly, rng, draws)[0]
            out[r] *= cache[key]
    return out


@dataclass
class AtomTable:
    """All ``n``-tuples of mu-atoms with their weights, spans and integrands.

    ``G[mask]`` is ``sum w * Phi~`` over tuples whose atoms all lie in ``mask``,
    so a state whose surviving mu-atoms are ``mask`` has
    ``Psi = gamma(mu(mask)) * G[mask]``.
    """

    masses: np.ndarray
    tuples: np.ndarray  # (T, n) atom indices
    weight: np.ndarray
    nu_span: np.ndarray
    phitilde: np.ndarray
    tuple_mask: np.ndarray
    G: np.ndarray | None
    mask_mass: np.ndarray | None

    @property
    def n_atoms(self) -> int:
        return len(self.masses)


def atom_table(ft: FlatTree, spec: TestFunctionSpec, with_masks: bool = True, rng=None) -> AtomTable:
    mu = ft.mu
    if not mu.atomic:
        raise ModeError("exact evaluation needs an atomic sampling measure")
    A, n = mu.n_atoms, spec.n
    if A**n > EXACT_LIMIT:
        raise ModeError(f"{A}^{n} atom tuples exceed the exact-evaluation limit")
    combos = list(itertools.product(range(A), repeat=n))
    tuples = np.array(combos, dtype=np.int64).reshape(len(combos), n)
    weight = np.prod(mu.atom_mass[tuples], axis=1) if n else np.ones(1)
    S, O = mu.atom_slot[tuples], mu.atom_off[tuples]
    span = ft.nu_span(S, O) if n else np.array([ft.nu_root_path(np.zeros(1, int), np.zeros(1))[0]])
    phit = phitilde_rows(ft, spec, S, O, rng=rng) if len(tuples) else np.zeros(0)
    tmask = np.bitwise_or.reduce(np.left_shift(1, tuples), axis=1) if n else np.zeros(1, dtype=np.int64)
    tmask = tmask.astype(np.int64)
    G = mm = None
    if with_masks and A <= 20:
        G = np.bincount(tmask, weights=weight * phit, minlength=1 << A)
        for b in range(A):  # subset-sum (zeta) transform
            bit = 1 << b
            idx = np.arange(1 << A)
            sel = (idx & bit) != 0
            G[sel] += G[idx[sel] ^ bit]
        mm = mask_masses(mu.atom_mass)
    return AtomTable(mu.atom_mass, tuples, weight, span, phit, tmask, G, mm)


def mask_masses(m: np.ndarray) -> np.ndarray:
    A = len(m)
    idx = np.arange(1 << A)
    bits = ((idx[:, None] >> np.arange(A)) & 1).astype(float)
    return bits @ m


def psi_exact(x: BiMeasureTree | FlatTree, spec: TestFunctionSpec) -> float:
    ft = x if isinstance(x, FlatTree) else FlatTree(x.tree, x.mu, x.nu)
    tab = atom_table(ft, spec, with_masks=False)
    total_mu = float(ft.mu.atom_mass.sum())
    g = 1.0 if spec.damping is None else math.exp(-spec.damping * total_mu)
    return g * float(np.dot(tab.weight, tab.phitilde))


def psi_from_state(
    ft: FlatTree, spec: TestFunctionSpec, mu_w: np.ndarray, lim: np.ndarray, draws: int, rng
) -> np.ndarray:
    """MC draws of ``Phi~`` under the current mu (weights ``mu_w`` and cut limits ``lim``)."""
    n = spec.n
    if n == 0:
        return phitilde_rows(ft, spec, np.zeros((1, 0), int), np.zeros((1, 0)), rng)
    S, O = sample_weighted(ft.mu, mu_w, lim, draws * n, rng)
    return phitilde_rows(ft, spec, S.reshape(draws, n), O.reshape(draws, n), rng)


def psi_mc(x: BiMeasureTree | FlatTree, spec: TestFunctionSpec, draws: int, rng) -> tuple[float, float]:
    """Monte-Carlo estimate of ``Psi(x)`` with its standard error."""
    ft = x if isinstance(x, FlatTree) else FlatTree(x.tree, x.mu, x.nu)
    mu_w = np.concatenate([ft.mu.coeff * ft.mu.ext, ft.mu.atom_mass])
    total = float(mu_w.sum())
    g = 1.0 if spec.damping is None else math.exp(-spec.damping * total)
    if spec.n == 0:
        return g * float(phitilde_rows(ft, spec, np.zeros((1, 0), int), np.zeros((1, 0)), rng)[0]), 0.0
    if total <= 0:
        return 0.0, 0.0
    vals = psi_from_state(ft, spec, mu_w, np.full(ft.n, np.inf), draws, rng)
    scale = g * total**spec.n
    se = scale * float(vals.std(ddof=1)) / math.sqrt(draws) if draws > 1 else math.nan
    return scale * float(vals.mean()), se


def psi_value(x, spec: TestFunctionSpec, rng=None, draws: int = 4096) -> tuple[float, float]:
    """Exact value (stderr 0) when possible, else a Monte-Carlo estimate."""
    ft = x if isinstance(x, FlatTree) else FlatTree(x.tree, x.mu, x.nu)
    try:
        return psi_exact(ft, spec), 0.0
    except ModeError:
        if rng is None:
            raise
        return psi_mc(ft, spec, draws, rng)
