"""Tail exponents, maximum scaling and variance growth from stored samples."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaincc

from .gibbs import integrated_autocorr


class InsufficientExceedances(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


MIN_SAMPLES = 10_000
MIN_EXCEEDANCES = 100


def survival_curve(samples, thresholds=None, n_grid: int = 64) -> tuple:
    """Empirical ``P[|x| >= t]`` on a threshold grid starting at 0.

    The default grid is 0 followed by a geometric grid from the median of
    ``|x|`` to its maximum.
    """
    x = np.sort(np.abs(np.asarray(samples, dtype=float)))
    if thresholds is None:
        hi = x[-1]
        lo = min(np.median(x), hi)
        grid = np.geomspace(lo, hi, n_grid - 1) if lo > 0 else np.linspace(0, hi, n_grid)[1:]
        thresholds = np.concatenate([[0.0], grid])
    t = np.asarray(thresholds, dtype=float)
    surv = 1.0 - np.searchsorted(x, t, side="left") / len(x)
    return t, surv


@dataclass
class TailReport:
    kind: str  # "power" or "stretched"
    n_samples: int
    tail_points: int
    thresholds: np.ndarray = field(repr=False)
    survival: np.ndarray = field(repr=False)
    exponent: float
    band: tuple
    secondary: float  # power: log-log slope estimate; stretched: the other functional form
    rss: float  # residual variance of the log-survival regression
    form: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "form": self.form,
            "n_samples": self.n_samples,
            "tail_points": self.tail_points,
            "exponent": self.exponent,
            "band": list(self.band),
            "secondary": self.secondary,
            "rss": self.rss,
            **self.details,
        }

    def curve_rows(self):
        return zip(self.thresholds.tolist(), self.survival.tolist())


def _top(samples, frac: float, min_samples: int):
    x = np.abs(np.asarray(samples, dtype=float))
    x = x[np.isfinite(x)]
    if len(x) < min_samples:
        raise InsufficientSamples(f"need at least {min_samples} samples, got {len(x)}")
    x = np.sort(x)[::-1]
    k = int(frac * len(x))
    if k < MIN_EXCEEDANCES:
        raise InsufficientExceedances(f"only {k} tail points (need {MIN_EXCEEDANCES})")
    return x, k


def _tail_regression_points(x, k, drop: int = 20, max_points: int = 1000):
    """Top order statistics ``t_i`` with plotting positions ``log S_i`` and weights ``sqrt(i)``.

    At most ``max_points`` evenly spaced ranks are kept to bound the cost of
    the nonlinear fits.
    """
    n = len(x)
    step = max(1, (k - drop) // max_points)
    i = np.arange(drop, k, step)
    t = x[i]
    keep = t > 0
    return t[keep], np.log((i[keep] + 0.5) / n), np.sqrt(i[keep] + 1.0)


def _weighted_line(u, y, w):
    X = np.column_stack([np.ones_like(u), u]) * w[:, None]
    coef, *_ = np.linalg.lstsq(X, y * w, rcond=None)
    r = X @ coef - y * w
    return coef, float(r @ r / max(len(u) - 2, 1))


def _hill(x, k) -> float:
    return float(k / np.sum(np.log(x[:k] / x[k])))


def fit_power_tail(samples, upper: float = 0.05, min_samples: int = MIN_SAMPLES) -> TailReport:
    """Hill estimator on the top ``upper`` fraction plus a log-log survival regression.

    ``exponent`` is the Hill value with a normal-approximation 95% band;
    ``secondary`` is minus the log-log slope.
    """
    x, k = _top(samples, upper, min_samples)
    a = _hill(x, k)
    half = 1.96 * a / math.sqrt(k)
    t, y, w = _tail_regression_points(x, k)
    coef, rss = _weighted_line(np.log(t), y, w)
    thr, surv = survival_curve(x)
    return TailReport("power", len(x), k, thr, surv, a, (a - half, a + half), float(-coef[1]), rss, "hill")


def _fit_shape(t, y, w, form: str):
    """Best ``beta`` for the stretched forms on scaled thresholds ``s = t / min(t)``.

    ``survival``: ``log S = a - c s^beta``.
    ``density``: ``log S = a + log Q(1/beta, c s^beta)`` (upper regularized
    gamma), the exact survival of a density ``~ exp(-c s^beta)``.
    """
    s = t / t.min()

    def sse(lb):
        b = math.exp(lb)
        if form == "survival":
            _, r = _weighted_line(-(s**b), y, w)
            return r

        def inner(lc):
            f = np.log(gammaincc(1.0 / b, math.exp(lc) * s**b) + 1e-300)
            a = np.sum(w**2 * (y - f)) / np.sum(w**2)
            r = (y - f - a) * w
            return float(r @ r / max(len(s) - 3, 1))

        return minimize_scalar(inner, bounds=(-8, 8), method="bounded").fun

    res = minimize_scalar(sse, bounds=(math.log(0.1), math.log(6.0)), method="bounded")
    return math.exp(res.x), float(res.fun)


def fit_stretched_tail(
    samples, upper: float = 0.1, form: str = "density", folds: int = 10, min_samples: int = MIN_SAMPLES
) -> TailReport:
    """Stretched-exponential exponent ``beta`` fitted on the top ``upper`` fraction.

    ``form = "survival"`` regresses ``log S`` on ``-t^beta`` (Weibull-type
    survival); ``form = "density"`` fits the survival of a density
    ``~ exp(-c t^beta)``, which removes the polynomial prefactor that biases
    the survival form on Gaussian data.  ``secondary`` holds the other form's
    estimate.  The band is a delete-one-fold jackknife over fixed random folds.
    """
    if form not in ("density", "survival"):
        raise ValueError(f"unknown form {form!r}")
    x, k = _top(samples, upper, min_samples)
    t, y, w = _tail_regression_points(x, k)
    b, rss = _fit_shape(t, y, w, form)
    other = "survival" if form == "density" else "density"
    b2, _ = _fit_shape(t, y, w, other)
    band = (b, b)
    if folds and folds > 1:
        xs = np.sort(np.abs(np.asarray(samples, dtype=float)))
        rng_idx = np.random.default_rng(0).permutation(len(xs)) % folds
        est = []
        for f in range(folds):
            sub = xs[rng_idx != f][::-1]
            kk = int(upper * len(sub))
            est.append(_fit_shape(*_tail_regression_points(sub, kk), form)[0])
        est = np.array(est)
        se = math.sqrt((folds - 1) / folds * np.sum((est - est.mean()) ** 2))
        band = (b - 1.96 * se, b + 1.96 * se)
    thr, surv = survival_curve(x)
    return TailReport("stretched", len(x), k, thr, surv, b, band, b2, rss, form)


@dataclass
class TailSelection:
    chosen: str
    power: TailReport
    stretched: TailReport
    rule: str = "smaller residual variance of the log-survival regression over the top 5%"

    def to_dict(self) -> dict:
        return {"chosen": self.chosen, "rule": self.rule, "power": self.power.to_dict(), "stretched": self.stretched.to_dict()}


def select_tail_model(samples, upper: float = 0.05, min_samples: int = MIN_SAMPLES) -> TailSelection:
    """Compare power and stretched fits on the same tail points by residual variance."""
    p = fit_power_tail(samples, upper, min_samples)
    s = fit_stretched_tail(samples, upper, form="survival", folds=0, min_samples=min_samples)
    return TailSelection("power" if p.rss <= s.rss else "stretched", p, s)


# --- maxima ---------------------------------------------------------------------------------


@dataclass
class MaxScalingReport:
    sizes: np.ndarray
    samples: list  # per size, raw maxima
    normalization: str  # "log" or "power"
    exponent: float  # 1/beta or 1/(D alpha)
    normalized: list = field(repr=False, default_factory=list)

    def __post_init__(self):
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        if len(self.sizes) != len(self.samples):
            raise ValueError("one sample set per size")
        if np.any(np.diff(self.sizes) <= 0):
            raise ValueError("sizes must be strictly increasing")
        self.normalized = [np.asarray(s, dtype=float) / self.scale(n) for s, n in zip(self.samples, self.sizes)]

    def scale(self, n) -> float:
        if self.normalization == "log":
            return math.log(n) ** self.exponent
        if self.normalization == "power":
            return float(n) ** self.exponent
        raise ValueError(f"unknown normalization {self.normalization!r}")

    def medians(self) -> np.ndarray:
        return np.array([np.median(s) for s in self.normalized])

    def spread(self) -> float:
        """``max / min - 1`` over the normalized medians."""
        m = self.medians()
        return float(m.max() / m.min() - 1.0)

    def slope(self) -> float:
        """Slope of the normalized median against ``log n``, relative to the mean median."""
        m = self.medians()
        return float(np.polyfit(np.log(self.sizes), m, 1)[0] / m.mean())

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes.tolist(),
            "normalization": self.normalization,
            "exponent": self.exponent,
            "medians": self.medians().tolist(),
            "spread": self.spread(),
            "slope": self.slope(),
            "counts": [len(s) for s in self.samples],
        }


def max_scaling(sizes, samples, normalization: str = "log", beta: float = 2.0, D: int | None = None, alpha: float | None = None,
                min_count: int = 50) -> MaxScalingReport:
    """Normalize per-size maxima by ``(log n)^{1/beta}`` or ``n^{1/(D alpha)}``."""
    if len(sizes) < 3:
        raise ValueError("need at least three box sizes")
    for s in samples:
        if len(s) < min_count:
            raise InsufficientSamples(f"need {min_count} effectively independent maxima per size, got {len(s)}")
    if normalization == "log":
        exp = 1.0 / beta
    else:
        if D is None or alpha is None:
            raise ValueError("power normalization needs D and alpha")
        exp = 1.0 / (D * alpha)
    return MaxScalingReport(np.asarray(sizes), [np.asarray(s, dtype=float) for s in samples], normalization, exp)


def decorrelate(values, trace=None, factor: float = 5.0) -> np.ndarray:
    """Subsample ``values`` at a spacing of ``factor`` integrated autocorrelation times of ``trace``."""
    values = np.asarray(values)
    tau = integrated_autocorr(values if trace is None else trace)
    step = max(1, int(math.ceil(factor * tau)))
    return values[::step]


# --- variance growth ------------------------------------------------------------------------


@dataclass
class VarianceGrowthReport:
    Ls: np.ndarray
    variances: np.ndarray
    slope: float
    intercept: float
    r2: float

    def fitted(self, L) -> np.ndarray:
        return self.slope * np.log(np.asarray(L, dtype=float)) + self.intercept

    def to_dict(self) -> dict:
        return {
            "Ls": np.asarray(self.Ls).tolist(),
            "variances": np.asarray(self.variances).tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
        }


def variance_growth(Ls, variances) -> VarianceGrowthReport:
    """Least-squares fit ``Var = c log L + b`` with the coefficient of determination."""
    Ls = np.asarray(Ls, dtype=float)
    v = np.asarray(variances, dtype=float)
    if len(Ls) < 4:
        raise ValueError("need at least four sizes")
    u = np.log(Ls)
    c, b = np.polyfit(u, v, 1)
    resid = v - (c * u + b)
    tot = np.sum((v - v.mean()) ** 2)
    r2 = 1.0 - float(resid @ resid / tot) if tot > 0 else 1.0
    return VarianceGrowthReport(Ls, v, float(c), float(b), r2)


__all__ = [
    "InsufficientExceedances",
    "InsufficientSamples",
    "survival_curve",
    "TailReport",
    "fit_power_tail",
    "fit_stretched_tail",
    "TailSelection",
    "select_tail_model",
    "MaxScalingReport",
    "max_scaling",
    "decorrelate",
    "VarianceGrowthReport",
    "variance_growth",
]
