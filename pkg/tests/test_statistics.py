import math

import numpy as np
import pytest
from scipy import stats

from biprune.generators import OffspringDistribution, gw_bimeasure, poisson_mean_depth
from biprune.measure import BiMeasureTree, TreeMeasure, measure_of_span, restrict
from biprune.statistics import (
    ConvergenceReport,
    PointedSample,
    convergence_report,
    depth_control,
    distance_matrix_sample,
    eval_polynomial,
    gp_distance_lower,
    gp_distance_upper,
    replicate_values,
    sample_subtree_vector,
    tau_n,
)
from biprune.testfunctions import Const, ExpDist, ModeError, PolynomialSpec, TestFunctionSpec, default_suite
from biprune.tree import FiniteRTree, PrunedTree, Span, distance_matrix, four_point_ok

from _instances import random_atomic_instance, random_point, single_edge

POISSON = OffspringDistribution.poisson(1.0)


def edge_sample(L: float) -> PointedSample:
    x = single_edge(L)
    return tau_n(x, [x.tree.node(1)])


# -- tau_n and subtree vectors ------------------------------------------------------------


def test_tau_n_examples():
    x = single_edge(2.0)
    s = tau_n(x, [x.tree.node(1)])
    assert s.tree.total_length == 2.0 and s.nu.total == x.nu.total
    assert s.points[0] == s.tree.node(1)
    root = tau_n(x, [x.tree.root_point] * 3)
    assert root.tree.n_nodes == 1 and root.nu.total == 0.0
    t = FiniteRTree([None, 0], [0.0, 1.0])
    y = BiMeasureTree(t, TreeMeasure.dirac(t, t.node(1)), TreeMeasure(t, atoms={t.root_point: 0.4}))
    assert tau_n(y, [t.root_point, t.root_point]).nu.total == 0.4
    with pytest.raises(ValueError):
        tau_n(x, [])


def test_tau_n_restricts_nu_like_measure_of_span():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = random_atomic_instance(rng)
        u = [random_point(rng, x.tree) for _ in range(int(rng.integers(1, 4)))]
        s = tau_n(x, u)
        assert s.nu.total == pytest.approx(measure_of_span(x.nu, u), abs=1e-12)
        # the span is generated by the root and the marked points
        assert s.tree.total_length == pytest.approx(Span(x.tree, u).length, abs=1e-12)
        assert np.allclose(s.distance_matrix(), distance_matrix(x.tree, u), atol=1e-12)


def test_tau_n_rejects_pruned_points():
    x = single_edge(2.0)
    cut = x.tree.point(1, 1.0)
    P = PrunedTree(x.tree, [cut])
    y = BiMeasureTree(x.tree, restrict(x.mu, P), restrict(x.nu, P), cuts=P.cuts, check=False)
    with pytest.raises(ValueError):
        tau_n(y, [x.tree.node(1)])
    assert tau_n(y, [x.tree.point(1, 0.5)]).nu.total == pytest.approx(0.5)


def test_sample_subtree_vector_dirac_is_deterministic():
    x = single_edge(1.5)
    rng = np.random.default_rng(1)
    for _ in range(10):
        s = sample_subtree_vector(x, 3, rng)
        assert np.allclose(s.distance_matrix(), [[0, 1.5, 1.5, 1.5], [1.5, 0, 0, 0], [1.5, 0, 0, 0], [1.5, 0, 0, 0]])
    with pytest.raises(ValueError):
        sample_subtree_vector(x, 0, rng)
    z = BiMeasureTree(x.tree, TreeMeasure.zero(x.tree), x.nu)
    with pytest.raises(ValueError):
        sample_subtree_vector(z, 1, rng)


def test_expected_restricted_nu_for_one_point():
    rng = np.random.default_rng(2)
    x = random_atomic_instance(rng)
    want = sum(w * measure_of_span(x.nu, [p]) for p, w in x.mu.atoms.items()) / x.mu.total
    v = np.array([sample_subtree_vector(x, 1, rng).nu.total for _ in range(4000)])
    assert abs(v.mean() - want) <= 3 * v.std(ddof=1) / math.sqrt(len(v))


def test_subtree_pair_distances_match_matrix_sampler():
    rng = np.random.default_rng(3)
    x = random_atomic_instance(rng, nu_kind="length")
    n = 3000
    a = [sample_subtree_vector(x, 2, rng).distance_matrix()[1, 2] for _ in range(n)]
    b = distance_matrix_sample(x, [], 2, rng, size=n)[:, 1, 2]
    assert stats.ks_2samp(np.round(a, 9), np.round(b, 9)).pvalue > 0.01


def test_sublist_projection_is_consistent():
    rng = np.random.default_rng(4)
    x = random_atomic_instance(rng, nu_kind="mixed")
    n = 3000
    proj = []
    for _ in range(n):
        s = sample_subtree_vector(x, 3, rng)
        proj.append(tau_n(BiMeasureTree(s.tree, TreeMeasure.zero(s.tree), s.nu, check=False), [s.points[0], s.points[2]]).nu.total)
    direct = [sample_subtree_vector(x, 2, rng).nu.total for _ in range(n)]
    assert stats.ks_2samp(np.round(proj, 9), np.round(direct, 9)).pvalue > 0.01


# -- polynomials and distance matrices -----------------------------------------------------


def test_eval_polynomial_constant_is_mass_power():
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = random_atomic_instance(rng)
        for m in (0, 1, 2, 3):
            val, se = eval_polynomial(PolynomialSpec(m, Const(1.0)), x)
            assert se == 0.0 and val == pytest.approx(x.mu.total**m, rel=1e-12)


def test_eval_polynomial_on_marked_points_only():
    x = single_edge(2.0)
    spec = PolynomialSpec(0, ExpDist(0, 1))
    val, _ = eval_polynomial(spec, x, [x.tree.node(1)])
    assert val == pytest.approx(math.exp(-2.0))
    s = edge_sample(2.0)
    assert eval_polynomial(PolynomialSpec(1, Const(1.0)), s)[0] == pytest.approx(2.0)


def test_eval_polynomial_exact_vs_mc():
    rng = np.random.default_rng(6)
    x = random_atomic_instance(rng)
    spec = PolynomialSpec(2, ExpDist(1, 2))
    exact, _ = eval_polynomial(spec, x)
    length = BiMeasureTree(x.tree, TreeMeasure.length(x.tree), x.nu, check=False)
    with pytest.raises(ModeError):
        eval_polynomial(spec, length)
    # same measure, forced Monte Carlo through the sampling oracle
    R = distance_matrix_sample(x, [], 2, rng, size=40000)
    vals = np.exp(-R[:, 1, 2]) * x.mu.total**2
    assert abs(vals.mean() - exact) <= 3 * vals.std(ddof=1) / 200


def test_distance_matrix_sample():
    x = single_edge(1.7)
    rng = np.random.default_rng(7)
    R = distance_matrix_sample(x, [], 2, rng, size=10)
    assert np.allclose(R[:, 0, 1:], 1.7) and np.allclose(R[:, 1, 2], 0.0)
    y = random_atomic_instance(rng)
    want = sum(w * y.tree.height(p) for p, w in y.mu.atoms.items()) / y.mu.total
    want2 = sum(w * y.tree.height(p) ** 2 for p, w in y.mu.atoms.items()) / y.mu.total
    R = distance_matrix_sample(y, [random_point(rng, y.tree)], 3, rng, size=20000)
    h = R[:, 0, 2]
    assert abs(h.mean() - want) <= 3 * h.std(ddof=1) / math.sqrt(len(h))
    assert abs((h**2).mean() - want2) <= 3 * (h**2).std(ddof=1) / math.sqrt(len(h))
    for D in R[:200]:
        assert four_point_ok(D, 0, 1, 2, 3) and four_point_ok(D, 1, 2, 3, 4)
    one = distance_matrix_sample(y, [], 1, rng)
    assert one.shape == (2, 2)


# -- Gromov-Prohorov bounds ---------------------------------------------------------------


def test_gp_upper_of_identical_samples_is_zero():
    rng = np.random.default_rng(8)
    for _ in range(5):
        x = random_atomic_instance(rng)
        s = sample_subtree_vector(x, 2, rng)
        assert gp_distance_upper(s, s) <= 1e-6


def test_gp_single_edges():
    L, d = 1.0, 0.05
    s1, s2 = edge_sample(L), edge_sample(L + d)
    up = gp_distance_upper(s1, s2)
    assert up <= 2 * d + 1e-6  # mesh discretization tolerance
    assert gp_distance_lower(s1, s2) <= up


def test_gp_bounds_are_ordered_and_symmetric():
    rng = np.random.default_rng(9)
    for _ in range(8):
        x, y = random_atomic_instance(rng), random_atomic_instance(rng)
        s1, s2 = sample_subtree_vector(x, 2, rng), sample_subtree_vector(y, 2, rng)
        up, lo = gp_distance_upper(s1, s2, grid=0.05), gp_distance_lower(s1, s2, grid=0.05)
        assert up == gp_distance_upper(s2, s1, grid=0.05)
        assert lo == gp_distance_lower(s2, s1, grid=0.05)
        assert up >= lo - 1e-12
    with pytest.raises(ValueError):
        gp_distance_upper(s1, sample_subtree_vector(y, 1, rng))
    with pytest.raises(ValueError):
        gp_distance_lower(s1, s2, grid=0.0)


# -- convergence reports ------------------------------------------------------------------


def test_poisson_mean_depth_small_values():
    assert [poisson_mean_depth(N) for N in (1, 2, 3, 4)] == pytest.approx([1.0, 4 / 3, 1.625, 1.888], rel=1e-12)
    with pytest.raises(ValueError):
        poisson_mean_depth(0)


def test_constant_family_means_agree():
    x = random_atomic_instance(np.random.default_rng(10))
    rep = convergence_report(lambda N, rng: x, [1, 2, 3], default_suite()[1:3], 400, 11, times=[0.0, 0.5])
    for p in range(2):
        for j in range(2):
            m, s = rep.mean[:, p, j], rep.stderr[:, p, j]
            assert np.ptp(m) <= 4 * math.sqrt(2) * s.max()


def test_total_mass_on_skeleton_family_is_one():
    mass = TestFunctionSpec(1, (), name="mass")

    def family(N, rng):
        return gw_bimeasure(POISSON, N, rng)

    rep = convergence_report(family, [10, 20], [mass], 5, 0)
    assert np.allclose(rep.mean, 1.0, rtol=0, atol=1e-12)
    assert rep.value(10, "mass") == pytest.approx((1.0, 0.0), abs=1e-12)


def test_report_csv_and_trend():
    rep = ConvergenceReport([1, 2, 4], [0.0], ["a", "b"], np.array([[[1.0], [2.0]], [[1.5], [2.0]], [[1.6], [2.0]]]),
                            np.zeros((3, 2, 1)), 10, 3)
    assert np.allclose(rep.trend()[:, :, 0], [[0.5, 0.0], [0.1, 0.0]])
    assert rep.trend_decreasing().tolist() == [[True], [True]]
    lines = rep.to_csv().splitlines()
    assert lines[0] == "index,t,psi_id,mean,stderr,replicates,seed"
    assert lines[1] == "1,0.0,a,1.0,0.0,10,3"
    bad = ConvergenceReport([1, 2, 4], [0.0], ["a"], np.array([[[1.0]], [[1.1]], [[1.5]]]), np.zeros((3, 1, 1)), 10, 3)
    assert not bad.trend_decreasing()[0, 0]


def test_report_paths_and_control():
    def family(N, rng):
        return gw_bimeasure(POISSON, N, rng)

    psis = default_suite()[:2]
    a = convergence_report(family, [30], psis, 40, 5, times=[0.5])
    b = convergence_report(family, [30], psis, 40, 5, times=[0.5], threads=2)
    assert np.array_equal(a.mean, b.mean)
    c = convergence_report(family, [30], psis, 40, 5, times=[0.5], control=depth_control)
    assert not np.array_equal(a.mean, c.mean)
    # the adjustment cannot inflate the residual variance
    assert np.all(c.stderr <= a.stderr * (1 + 1e-9))
    d = convergence_report(family, [30], psis, 40, 5, times=[0.5], paths=4)
    assert d.stderr[0, 0, 0] < a.stderr[0, 0, 0]
    with pytest.raises(ValueError):
        convergence_report(family, [30], psis, 1, 5)
    with pytest.raises(ValueError):
        convergence_report(family, [30], [], 5, 5)
    with pytest.raises(ValueError):
        convergence_report(family, [30], psis, 5, 5, paths=0)


def test_replicate_values_unbiased_for_damped_mass():
    from biprune.pruning import semigroup_exact

    rng = np.random.default_rng(12)
    x = random_atomic_instance(rng)
    psi = default_suite()[0]
    v = np.array([replicate_values(x, [psi], [0.7], rng, paths=2)[0, 0] for _ in range(4000)])
    assert abs(v.mean() - semigroup_exact(x, 0.7, psi)) <= 3 * v.std(ddof=1) / math.sqrt(len(v))
