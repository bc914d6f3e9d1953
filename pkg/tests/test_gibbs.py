import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import density_cdf
from gradphi.corpus import small_mixture_corpus
from gradphi.field import assemble_precision, variance
from gradphi.gibbs import (
    integrated_autocorr,
    run_replicas,
    sample_gaussian,
    sample_metropolis,
    sample_mixture_exact,
    sample_splice,
    site_colors,
)
from gradphi.graph import build_lattice_box, build_path, build_star, build_tree
from gradphi.mixtures import TwoPoint, eval_V, rho_alpha_eps
from gradphi.potentials import quadratic, splice


def _two_point_cdf(k1, k2, w):
    return lambda t: w * stats.norm.cdf(t / k1) + (1 - w) * stats.norm.cdf(t / k2)


@pytest.mark.parametrize("update", ["block", "local"])
def test_mixture_exact_single_edge_two_point(update):
    ch = sample_mixture_exact(build_star(1), TwoPoint(1.0, 2.0, 0.5), 20_000, 1, burn_in=100, thin=1, phi_update=update)
    assert stats.kstest(ch.probe_samples, _two_point_cdf(1.0, 2.0, 0.5)).statistic < 0.02


def test_mixture_exact_single_edge_pareto():
    rho = rho_alpha_eps(3, 1)
    ch = sample_mixture_exact(build_star(1), rho, 20_000, 2, burn_in=100, thin=1)
    cdf = density_cdf(lambda x: -eval_V(rho, x, "closed").value)
    assert stats.kstest(ch.probe_samples, cdf).statistic < 0.02


def test_splice_single_edge_marginal():
    U = splice(3, 1)
    ch = sample_splice(build_star(1), U, rho_alpha_eps(3, 1), 30_000, 3, burn_in=200, thin=1)
    cdf = density_cdf(lambda x: -U(x))
    assert stats.kstest(ch.probe_samples, cdf).statistic < 0.02
    assert 0 < ch.report().acceptance < 1


def test_splice_quadratic_is_gaussian():
    ch = sample_splice(build_star(1), quadratic(1.0), rho_alpha_eps(3, 0.25), 20_000, 4, burn_in=200, thin=1)
    assert stats.kstest(ch.probe_samples, stats.norm.cdf).statistic < 0.02


def test_metropolis_single_edge_gaussian():
    ch = sample_metropolis(build_star(1), quadratic(1.0), 2.0, 40_000, 5, burn_in=200, thin=1)
    assert stats.kstest(ch.probe_samples, stats.norm.cdf).statistic < 0.03


@pytest.mark.parametrize("update", ["block", "local"])
def test_path_scale_law_matches_brute_force(update):
    sm = next(s for s in small_mixture_corpus() if s.name == "path2-two")
    ch = sample_mixture_exact(build_path(2), TwoPoint(1.0, 2.0, 0.5), 20_000, 6, burn_in=100, thin=1,
                              phi_update=update, store=True)
    code = (ch.xis == 2.0).astype(int) @ (2 ** np.arange(2, -1, -1))
    emp = np.bincount(code, minlength=8) / len(code)
    exact = np.zeros(8)
    exact[sm.index @ (2 ** np.arange(2, -1, -1))] = sm.weights
    assert 0.5 * np.abs(emp - exact).sum() < 0.03


def test_gaussian_sampler_variance():
    model = build_lattice_box(2, 2)
    ch = sample_gaussian(model, 1.0, 20_000, 7)
    exact = variance(assemble_precision(model, 1.0), model.origin_index)
    assert ch.var()[model.origin_index] == pytest.approx(exact, rel=0.05)


def test_rao_blackwell_matches_empirical():
    model = build_path(2)
    ch = sample_mixture_exact(model, TwoPoint(1.0, 2.0, 0.5), 20_000, 8, burn_in=100, thin=1, rao_blackwell=True)
    assert np.mean(ch.rb_variance) == pytest.approx(np.mean(ch.probe_samples**2), rel=0.05)


def test_same_seed_same_csv():
    model = build_lattice_box(2, 1)
    rho = rho_alpha_eps(3, 1)
    a = sample_mixture_exact(model, rho, 300, 11, burn_in=10, phi_update="local").to_csv()
    b = sample_mixture_exact(model, rho, 300, 11, burn_in=10, phi_update="local").to_csv()
    c = sample_mixture_exact(model, rho, 300, 12, burn_in=10, phi_update="local").to_csv()
    assert a == b and a != c


def test_run_replicas_seeds():
    chains = run_replicas(sample_mixture_exact, 5, 3, threads=2, model=build_star(1), rho=TwoPoint(1, 2, 0.5),
                          sweeps=50, burn_in=0)
    assert [c.seed for c in chains] == [5, 6, 7]
    single = sample_mixture_exact(build_star(1), TwoPoint(1, 2, 0.5), 50, 6, burn_in=0)
    assert chains[1].to_csv() == single.to_csv()


def test_integrated_autocorr_ar1():
    rng = np.random.default_rng(0)
    phi, n = 0.5, 200_000
    x = np.empty(n)
    x[0] = 0
    e = rng.standard_normal(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    assert integrated_autocorr(x) == pytest.approx((1 + phi) / (1 - phi), rel=0.1)


@settings(max_examples=15, deadline=None)
@given(kind=st.sampled_from(["box", "tree", "membrane"]), size=st.integers(1, 3))
def test_colour_classes_share_no_functional(kind, size):
    if kind == "box":
        model = build_lattice_box(2, size)
    elif kind == "tree":
        model = build_tree(3, size)
    else:
        model = build_lattice_box(2, size, j=2)
    colors = site_colors(model)
    assert sorted(np.concatenate(colors).tolist()) == list(range(model.n))
    Y = model.Y.tocsc()
    for c in colors:
        touched = np.concatenate([Y.indices[Y.indptr[v] : Y.indptr[v + 1]] for v in c])
        assert len(touched) == len(np.unique(touched))
