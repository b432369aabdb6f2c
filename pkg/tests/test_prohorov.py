import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biprune import prohorov
from biprune.prohorov import deficiency, prohorov_bipartite, prohorov_distance

from _oracles import prohorov_bruteforce


def random_metric(rng, k):
    # distances between random points on a random tree-free set: use Euclidean
    pts = rng.uniform(0, 1.5, size=(k, 2))
    return np.linalg.norm(pts[:, None] - pts[None], axis=-1)


def test_dirac_examples():
    d = np.array([[0.0, 0.3], [0.3, 0.0]])
    assert prohorov_distance(None, d, [1, 0], [0, 1]) == pytest.approx(0.3)
    far = np.array([[0.0, 4.0], [4.0, 0.0]])
    assert prohorov_distance(None, far, [1, 0], [0, 1]) == 1.0
    assert prohorov_distance(None, np.zeros((1, 1)), [2.0], [1.0]) == 1.0


def test_identical_measures_have_zero_distance():
    rng = np.random.default_rng(0)
    d = random_metric(rng, 6)
    w = rng.uniform(0, 1, 6)
    assert prohorov_distance(None, d, w, w) == 0.0


def test_input_validation():
    with pytest.raises(ValueError):
        prohorov_distance(None, np.zeros((2, 2)), [1.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        prohorov_distance(None, np.zeros((2, 2)), [-1.0, 1.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        prohorov_distance([0], np.zeros((2, 2)), [1.0, 0.0], [1.0, 0.0])


def test_matches_subset_bruteforce_small_supports():
    rng = np.random.default_rng(1)
    for _ in range(40):
        k = int(rng.integers(1, 5))
        d = random_metric(rng, k)
        w1 = rng.uniform(0, 0.6, k) * (rng.random(k) < 0.8)
        w2 = rng.uniform(0, 0.6, k) * (rng.random(k) < 0.8)
        assert abs(prohorov_distance(None, d, w1, w2) - prohorov_bruteforce(d, w1, w2)) <= 1e-4 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 7))
def test_pseudometric_properties(seed, k):
    rng = np.random.default_rng(seed)
    d = random_metric(rng, k)
    ws = [rng.dirichlet(np.ones(k)) for _ in range(3)]
    p = lambda a, b: prohorov_distance(None, d, a, b)
    assert p(ws[0], ws[1]) == p(ws[1], ws[0])
    assert p(ws[0], ws[2]) <= p(ws[0], ws[1]) + p(ws[1], ws[2]) + 1e-9
    assert p(ws[0], ws[0]) == 0.0
    assert 0.0 <= p(ws[0], ws[1]) <= 1.0


def test_value_is_consistent_with_deficiency():
    rng = np.random.default_rng(2)
    for _ in range(30):
        k = 5
        d = random_metric(rng, k)
        w1, w2 = rng.uniform(0, 1, k), rng.uniform(0, 1, k)
        eps = prohorov_distance(None, d, w1, w2)
        assert deficiency(d, w1, w2, eps + 1e-9) <= eps + 1e-9
        if eps > 1e-6:
            below = eps - 1e-6
            assert deficiency(d, w1, w2, below) > below


def test_integer_solver_agrees_with_float_solver(monkeypatch):
    rng = np.random.default_rng(3)
    for _ in range(10):
        k = 12
        d = random_metric(rng, k)
        w1, w2 = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        exact = prohorov_distance(None, d, w1, w2)
        monkeypatch.setattr(prohorov, "EXACT_PAIRS", 0)
        approx = prohorov_distance(None, d, w1, w2)
        monkeypatch.setattr(prohorov, "EXACT_PAIRS", 400)
        assert approx == pytest.approx(exact, abs=1e-8)


def test_bipartite_ignores_internal_distances():
    rng = np.random.default_rng(4)
    d = random_metric(rng, 6)
    w1 = np.r_[rng.uniform(0, 1, 3), np.zeros(3)]
    w2 = np.r_[np.zeros(3), rng.uniform(0, 1, 3)]
    full = prohorov_distance(None, d, w1, w2)
    assert prohorov_bipartite(d[:3, 3:], w1[:3], w2[3:]) == full
    assert prohorov_bipartite(np.zeros((0, 2)), [], [0.5, 0.25]) == 0.75
