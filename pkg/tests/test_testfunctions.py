import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biprune._flat import FlatTree
from biprune.measure import BiMeasureTree, TreeMeasure, restrict
from biprune.testfunctions import (
    Const,
    ExpDist,
    ModeError,
    PolynomialSpec,
    RationalDist,
    TestFunctionSpec,
    damping_sup,
    default_suite,
    phi_from_dict,
    poly_integral,
    psi_exact,
    psi_mc,
    psi_value,
)
from biprune.tree import Span, distance_matrix

from _instances import random_atomic_instance, single_edge


def psi_oracle(x: BiMeasureTree, spec: TestFunctionSpec) -> float:
    """Direct evaluation: sum over atom tuples of weights times the product of factors."""
    tree = x.tree
    pts = list(x.mu.atoms)
    w = [x.mu.atoms[p] for p in pts]
    total = 0.0
    for combo in itertools.product(range(len(pts)), repeat=spec.n):
        weight = math.prod(w[c] for c in combo)
        val = 1.0
        for I, poly in spec.factors:
            u = [pts[combo[i - 1]] for i in I]
            nu_s = restrict(x.nu, Span(tree, u or [tree.root_point]))
            g = 1.0 if poly.damping is None else math.exp(-poly.damping * nu_s.total)
            if poly.m == 0:
                f = float(poly.phi(distance_matrix(tree, u)[None])[0])
            else:
                vs = list(nu_s.atoms)
                f = 0.0
                for vc in itertools.product(range(len(vs)), repeat=poly.m):
                    R = distance_matrix(tree, u + [vs[k] for k in vc])
                    f += math.prod(nu_s.atoms[vs[k]] for k in vc) * float(poly.phi(R[None])[0])
            val *= g * f
        total += weight * val
    mass = x.mu.total
    return total * (1.0 if spec.damping is None else math.exp(-spec.damping * mass))


def extra_specs():
    return [
        TestFunctionSpec(2, (((1, 2), PolynomialSpec(0, RationalDist(0, 2, 0.5) + ExpDist(1, 2, 2.0))),)),
        TestFunctionSpec(
            1, (((1,), PolynomialSpec(1, ExpDist(1, 2), damping=0.5)),), damping=0.3, name="nu_integral"
        ),
        TestFunctionSpec(0, (((), PolynomialSpec(0, Const(2.0))),), damping=2.0),
        TestFunctionSpec(3, (((1, 3), PolynomialSpec(0, ExpDist(0, 2) * ExpDist(1, 2))), ((2,), PolynomialSpec()))),
    ]


def test_phi_primitives():
    R = np.array([[[0.0, 2.0], [2.0, 0.0]]])
    assert ExpDist(0, 1, 0.5)(R)[0] == pytest.approx(math.exp(-1.0))
    assert RationalDist(0, 1, 2.0)(R)[0] == pytest.approx(0.2)
    assert (Const(3.0) + ExpDist(0, 1))(R)[0] == pytest.approx(3 + math.exp(-2))
    assert (Const(3.0) * ExpDist(0, 1)).sup() == 3.0
    with pytest.raises(ValueError):
        ExpDist(0, 1, -1.0)


@pytest.mark.parametrize("spec", default_suite() + extra_specs())
def test_spec_dict_round_trip(spec):
    assert TestFunctionSpec.from_dict(spec.to_dict()) == spec
    for _, p in spec.factors:
        assert phi_from_dict(p.phi.to_dict()) == p.phi


def test_spec_validation():
    with pytest.raises(ValueError):
        TestFunctionSpec(1, (((2,), PolynomialSpec()),))
    with pytest.raises(ValueError):
        TestFunctionSpec(1, (((1,), PolynomialSpec(0, ExpDist(0, 2))),))
    with pytest.raises(ValueError):
        PolynomialSpec(0, damping=0.0)
    with pytest.raises(ValueError):
        phi_from_dict({"bogus": 1})


@pytest.mark.parametrize("c,k", [(1.0, 1), (0.5, 2), (2.0, 3)])
def test_damping_sup_is_the_maximum(c, k):
    xs = np.linspace(0, 50, 200001)
    assert damping_sup(c, k) == pytest.approx(np.max(xs**k * np.exp(-c * xs)), rel=1e-6)
    assert damping_sup(None, 1) == math.inf


def test_poly_integral_constant_is_mass_power():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = random_atomic_instance(rng, nu_kind="atomic")
        for m in (1, 2, 3):
            val, se = poly_integral(x.tree, x.nu, [], PolynomialSpec(m, Const(1.0)))
            assert se == 0.0
            assert val == pytest.approx(x.nu.total**m, rel=1e-12)


def test_poly_integral_modes():
    x = single_edge(2.0)
    spec = PolynomialSpec(1, ExpDist(0, 1))
    with pytest.raises(ModeError):
        poly_integral(x.tree, x.nu, [], spec)
    val, se = poly_integral(x.tree, x.nu, [], spec, rng=np.random.default_rng(1), draws=4000)
    exact = 1 - math.exp(-2.0)  # int_0^2 exp(-h) dh
    assert abs(val - exact) <= 4 * se


def test_psi_exact_matches_direct_oracle():
    rng = np.random.default_rng(2)
    specs = default_suite() + extra_specs()
    for _ in range(15):
        x = random_atomic_instance(rng, max_atoms=5, nu_kind=str(rng.choice(["atomic", "mixed"])))
        for spec in specs:
            if spec.needs_nu_draws and not x.nu.is_atomic:
                continue
            assert psi_exact(x, spec) == pytest.approx(psi_oracle(x, spec), rel=1e-12, abs=1e-14)


def test_psi_mc_agrees_with_exact():
    rng = np.random.default_rng(3)
    x = random_atomic_instance(rng, nu_kind="mixed")
    for spec in default_suite():
        est, se = psi_mc(x, spec, 20000, rng)
        assert abs(est - psi_exact(x, spec)) <= 4 * se + 1e-12


def test_psi_value_falls_back_to_mc():
    x = single_edge(1.0)
    x = BiMeasureTree(x.tree, TreeMeasure.length(x.tree), x.nu)
    spec = default_suite()[1]  # root_distance: int mu(du) exp(-h(u))
    with pytest.raises(ModeError):
        psi_value(x, spec)
    est, se = psi_value(x, spec, rng=np.random.default_rng(4), draws=20000)
    assert abs(est - (1 - math.exp(-1))) <= 4 * se


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_damped_functions_are_bounded(seed):
    rng = np.random.default_rng(seed)
    x = random_atomic_instance(rng, nu_kind="atomic")
    x = BiMeasureTree(x.tree, x.mu.scaled(float(rng.uniform(0.1, 8))), x.nu)
    for spec in default_suite() + extra_specs():
        if spec.damping is None:
            continue
        assert abs(psi_exact(x, spec)) <= spec.bound() + 1e-12


def test_default_suite_names():
    assert [s.name for s in default_suite()] == ["damped_mass", "root_distance", "pair_distance", "nu_path", "nu_spans"]


def test_flat_tree_geometry_matches_tree():
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = random_atomic_instance(rng)
        ft = FlatTree.from_bimeasure(x)
        pts = list(x.mu.atoms)
        S = np.array([[ft.slot_of[p.node] for p in pts]])
        O = np.array([[x.tree.edge_coord(p)[1] if p.node != x.tree.root else 0.0 for p in pts]])
        want = restrict(x.nu, Span(x.tree, pts)).total
        assert ft.nu_span(S, O)[0] == pytest.approx(want, rel=1e-12)
