import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradphi.mixtures import rho_alpha_eps, rho_tilted_stable
from gradphi.stats import (
    InsufficientExceedances,
    InsufficientSamples,
    decorrelate,
    fit_power_tail,
    fit_stretched_tail,
    max_scaling,
    select_tail_model,
    survival_curve,
    variance_growth,
)


def test_pareto_hill():
    x = np.random.default_rng(0).pareto(3.0, 100_000) + 1.0
    r = fit_power_tail(x)
    assert 2.8 <= r.exponent <= 3.2
    assert r.band[0] < 3.0 < r.band[1]


def test_pareto_calibration_over_datasets():
    rng = np.random.default_rng(1)
    est = [fit_power_tail(rng.pareto(2.0, 20_000) + 1.0).exponent for _ in range(50)]
    assert abs(np.median(est) / 2.0 - 1) < 0.1


def test_gaussian_scale_mixture_power_tail():
    rng = np.random.default_rng(2)
    kappa = rho_alpha_eps(3, 1).sample(rng, 200_000)
    x = rng.standard_normal(len(kappa)) * kappa
    assert fit_power_tail(x, upper=0.02).exponent == pytest.approx(3.0, rel=0.15)


def test_normal_prefers_stretched():
    x = np.random.default_rng(3).standard_normal(100_000)
    sel = select_tail_model(x)
    assert sel.chosen == "stretched"
    # no stable power exponent: the Hill value keeps growing deeper in the tail
    assert fit_power_tail(x, upper=0.01).exponent > fit_power_tail(x, upper=0.05).exponent + 1


def test_pareto_prefers_power():
    x = np.random.default_rng(4).pareto(3.0, 100_000) + 1.0
    assert select_tail_model(x).chosen == "power"


def test_normal_stretched_exponent():
    r = fit_stretched_tail(np.random.default_rng(5).standard_normal(100_000))
    assert 1.8 <= r.exponent <= 2.2
    assert r.band[0] <= r.exponent <= r.band[1]


def test_exponential_stretched_exponent():
    r = fit_stretched_tail(np.random.default_rng(6).exponential(size=100_000), folds=0)
    assert 0.9 <= r.exponent <= 1.1


def test_weibull_survival_form():
    x = np.random.default_rng(7).weibull(0.5, 100_000)
    assert fit_stretched_tail(x, form="survival", folds=0).exponent == pytest.approx(0.5, abs=0.05)


def test_stretched_calibration_over_datasets():
    rng = np.random.default_rng(8)
    est = [fit_stretched_tail(rng.exponential(size=20_000), folds=0).exponent for _ in range(50)]
    assert abs(np.median(est) - 1) < 0.1


def test_tilted_stable_mixture_stretched():
    rng = np.random.default_rng(9)
    kappa = rho_tilted_stable(1.0, 2.0).sample(rng, 100_000)
    x = rng.standard_normal(len(kappa)) * kappa
    assert fit_stretched_tail(x, folds=0).exponent == pytest.approx(1.0, abs=0.3)


def test_too_few_samples():
    with pytest.raises(InsufficientSamples):
        fit_power_tail(np.ones(100))
    with pytest.raises(InsufficientExceedances):
        fit_power_tail(np.random.default_rng(0).standard_normal(20_000), upper=0.001)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(10, 500))
def test_survival_curve_monotone(seed, n):
    x = np.random.default_rng(seed).standard_cauchy(n)
    t, s = survival_curve(x)
    assert t[0] == 0 and s[0] == 1
    assert np.all(np.diff(t) >= 0) and np.all(np.diff(s) <= 0)
    assert np.all((s >= 0) & (s <= 1))


def test_iid_gaussian_maxima_flat():
    rng = np.random.default_rng(10)
    sizes = [1_000, 10_000, 100_000]
    samples = [np.abs(rng.standard_normal((200, n))).max(axis=1) for n in sizes]
    rep = max_scaling(sizes, samples, "log", beta=2.0)
    assert rep.spread() < 0.15


def test_max_scaling_validation():
    with pytest.raises(ValueError):
        max_scaling([10, 10, 20], [np.ones(60)] * 3)
    with pytest.raises(InsufficientSamples):
        max_scaling([10, 20, 30], [np.ones(10)] * 3)
    with pytest.raises(ValueError):
        max_scaling([10, 20, 30], [np.ones(60)] * 3, "power")


def test_decorrelate_spacing():
    rng = np.random.default_rng(11)
    x = np.empty(50_000)
    x[0] = 0
    for t in range(1, len(x)):
        x[t] = 0.9 * x[t - 1] + rng.standard_normal()
    y = decorrelate(x)
    assert len(y) < len(x) / 50


def test_variance_growth_exact_log():
    L = np.array([8, 16, 32, 64])
    r = variance_growth(L, 0.3 * np.log(L) + 1)
    assert r.slope == pytest.approx(0.3) and r.r2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        variance_growth(L[:3], L[:3])
