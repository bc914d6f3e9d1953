import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gradphi.corpus import small_mixture_corpus
from gradphi.graph import build_lattice_box
from gradphi.inequalities import (
    SmallMixture,
    check_convex_comparison,
    check_det_inequality,
    check_fkg_gci,
    check_log_supermodular,
    check_stoc_domination,
    coordinate_strips,
    convex_comparison_exact,
    convex_comparison_mc,
    det_abc_margin,
    gci_margin,
    hinge,
    negative_controls,
    run_suite,
    strip_probability,
)
from gradphi.mixtures import rho_alpha_eps

CORPUS = {sm.name: sm for sm in small_mixture_corpus()}


def test_det_trivial_cases():
    A, B, C = np.eye(1), 2 * np.eye(1), 3 * np.eye(1)
    assert det_abc_margin(A, B, C) == pytest.approx(1 - 6 / 12)
    A = np.diag([1.0, 2.0])
    assert det_abc_margin(A, 0 * A, 0 * A) == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_det_inequality_random(n):
    assert check_det_inequality(n, 2500, np.random.default_rng(n)).passed


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 4))
def test_det_inequality_property(seed, n):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((3, n, n))
    A = G[0] @ G[0].T + 0.1 * np.eye(n)
    B, C = G[1] @ G[1].T, G[2] @ G[2].T
    assert det_abc_margin(A, B, C) >= -1e-9


def test_single_functional_is_log_supermodular():
    sm = SmallMixture("one", [[1.0]], [[1, 2, 3, 5]], [[0.1, 0.2, 0.3, 0.4]])
    assert check_log_supermodular(sm).passed


def test_product_measure_is_modular():
    # with the determinant term removed the weights are a product: every margin is zero
    sm = CORPUS["path2-two"].mutated(det_power=0.0)
    r = check_log_supermodular(sm)
    assert r.passed and abs(r.worst_margin) < 1e-12


def test_path_two_point_exhaustive():
    sm = CORPUS["path2-two"]
    r = check_log_supermodular(sm)
    assert r.trials == 64 and r.passed
    assert check_stoc_domination(sm).passed


def test_point_mass_domination_is_equality():
    sm = SmallMixture("pm", [[1.0], [1.0]], [[2.0], [3.0]], [[1.0], [1.0]])
    r = check_stoc_domination(sm)
    assert r.passed and r.worst_margin == pytest.approx(0, abs=1e-15)


def test_strip_probability_one_dimensional():
    assert strip_probability(np.eye(1) * 4, [[1.0]], [1.0]) == pytest.approx(2 * stats.norm.cdf(0.5) - 1, abs=1e-12)


def test_strip_probability_bivariate_rectangle():
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    mvn = stats.multivariate_normal(np.zeros(2), cov)
    exact = mvn.cdf([1, 1.5]) - mvn.cdf([-1, 1.5]) - mvn.cdf([1, -1.5]) + mvn.cdf([-1, -1.5])
    A, c = coordinate_strips(2, [0, 1], [1.0, 1.5])
    assert strip_probability(cov, A, c) == pytest.approx(exact, abs=1e-6)


def test_gci_whole_space_is_equality():
    sm = CORPUS["path2-two"]
    m, _ = gci_margin(sm.weights, sm.covariances(), coordinate_strips(2, [0], [1.0]), (np.zeros((0, 2)), np.zeros(0)))
    assert m == pytest.approx(0, abs=1e-12)


def test_gci_one_dimensional_mixture():
    w, covs = [0.5, 0.5], [np.eye(1), 4 * np.eye(1)]
    m, (p1, p2, p12) = gci_margin(w, covs, coordinate_strips(1, [0], [1.0]), coordinate_strips(1, [0], [2.0]))
    g = lambda c: 0.5 * (2 * stats.norm.cdf(c) - 1) + 0.5 * (2 * stats.norm.cdf(c / 2) - 1)
    assert p1 == pytest.approx(g(1), abs=1e-10) and p2 == pytest.approx(g(2), abs=1e-10)
    assert p12 == pytest.approx(g(1), abs=1e-10)
    assert m > 0


def test_gci_path_with_bivariate_oracle():
    sm = CORPUS["path2-two"]
    K1, K2 = coordinate_strips(2, [0], [1.0]), coordinate_strips(2, [1], [1.0])
    r = check_fkg_gci(sm, K1, K2)
    assert r.passed
    p12 = 0.0
    for w, S in zip(sm.weights, sm.covariances()):
        mvn = stats.multivariate_normal(np.zeros(2), S)
        p12 += w * (mvn.cdf([1, 1]) - 2 * mvn.cdf([-1, 1]) + mvn.cdf([-1, -1]))
    assert r.details["p12"] == pytest.approx(p12, abs=1e-6)


def test_convex_comparison_trivial_cases():
    sm = SmallMixture("det", [[1.0, 0], [1, -1], [0, 1]], [[1.0]] * 3, [[1.0]] * 3)
    lhs, rhs, _ = convex_comparison_exact(sm, hinge(0.3), np.array([1.0, 0.0]))
    assert lhs == pytest.approx(rhs)
    sm = CORPUS["star1-two"]
    lhs, rhs, _ = convex_comparison_exact(sm, hinge(0.5), np.array([1.0]))
    assert lhs == pytest.approx(rhs)


def test_convex_comparison_monte_carlo():
    model = build_lattice_box(3, 2)
    y = np.zeros(model.n)
    y[model.origin_index] = 1.0
    res = convex_comparison_mc(model, rho_alpha_eps(3, 1), hinge(1.0), y, 400, np.random.default_rng(0))
    assert res["lhs"] <= res["rhs"] + 3 * math.hypot(res["lhs_se"], res["rhs_se"])


def test_corpus_has_no_violations():
    reports = run_suite(small_mixture_corpus(), np.random.default_rng(0), det_trials=400)
    bad = [r.to_dict() for r in reports if not r.passed]
    assert not bad


def test_negative_controls_trip():
    for sm in (CORPUS["path2-two"], CORPUS["triangle-two"]):
        reports = negative_controls(sm, np.random.default_rng(0))
        assert len(reports) == 5
        assert all(r.violations > 0 for r in reports), [r.to_dict() for r in reports]


def test_convex_comparison_detects_decreasing_phi():
    sm = CORPUS["path2-four"]
    assert not check_convex_comparison(sm, lambda x: -x, np.array([1.0, 0.0])).passed
