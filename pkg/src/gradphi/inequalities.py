"""Exhaustive and randomized checks of correlation inequalities on small mixtures.

A :class:`SmallMixture` is a Gaussian mixture over finitely many scale
configurations: each functional carries a finite grid of scales with prior
weights, and the mixing weight of a configuration ``xi`` is

    nu(xi) ~ det(F(xi))^{-1/2} prod_e xi_e^{-1} prod_e rho_e(xi_e).
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special


@dataclass
class CheckReport:
    name: str
    trials: int
    violations: int
    worst_margin: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self):
        return {
            "check": self.name,
            "trials": self.trials,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            **self.details,
        }


@dataclass
class SmallMixture:
    """Finite scale mixture over ``n <= 4`` coordinates and at most 6 functionals.

    ``Y`` is ``(m, n)``; ``grids[e]`` and ``priors[e]`` give the scale atoms
    and prior weights of functional ``e``.  ``det_power`` and ``jacobian`` are
    only changed to build deliberately wrong weights for negative controls.
    """

    name: str
    Y: np.ndarray
    grids: list
    priors: list
    statement: str = ""
    det_power: float = -0.5
    jacobian: bool = True

    def __post_init__(self):
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        m, n = self.Y.shape
        if n > 4 or m > 6:
            raise ValueError("small mixtures have n <= 4 and at most 6 functionals")
        if len(self.grids) != m or len(self.priors) != m:
            raise ValueError("need one grid and prior per functional")
        self.grids = [np.asarray(g, dtype=float) for g in self.grids]
        self.priors = [np.asarray(p, dtype=float) / np.sum(p) for p in self.priors]
        for g in self.grids:
            if np.any(g <= 0) or np.any(np.diff(g) <= 0):
                raise ValueError("scale grids must be positive and increasing")
        idx = np.array(list(itertools.product(*[range(len(g)) for g in self.grids])), dtype=np.int64)
        self.index = idx.reshape(-1, m)
        self.xi = np.column_stack([self.grids[e][self.index[:, e]] for e in range(m)])
        self.prior = np.prod([self.priors[e][self.index[:, e]] for e in range(m)], axis=0)
        F = np.einsum("ae,ei,ej->aij", self.xi**-2.0, self.Y, self.Y)
        sign, logdet = np.linalg.slogdet(F)
        if np.any(sign <= 0):
            raise ValueError("F(xi) is singular at some atom")
        self.F = F
        logw = self.det_power * logdet + np.log(self.prior)
        if self.jacobian:
            logw -= np.log(self.xi).sum(axis=1)
        logw -= special.logsumexp(logw)
        self.logw = logw
        self.weights = np.exp(logw)

    @property
    def n(self) -> int:
        return self.Y.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[0]

    def covariances(self) -> np.ndarray:
        return np.linalg.inv(self.F)

    def mutated(self, **kw) -> "SmallMixture":
        args = dict(
            name=self.name + "*", Y=self.Y, grids=self.grids, priors=self.priors, statement=self.statement,
            det_power=self.det_power, jacobian=self.jacobian,
        )
        args.update(kw)
        return SmallMixture(**args)

    def product_prior(self) -> np.ndarray:
        return self.prior / self.prior.sum()


# --- determinant inequality ------------------------------------------------------------------


def _random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    G = rng.standard_normal((n, rank)) * rng.exponential(1.0, rank)
    return G @ G.T


def det_abc_margin(A, B, C) -> float:
    """Relative slack of ``det(A+B)det(A+C) - det(A+B+C)det(A)``."""
    _, l1 = np.linalg.slogdet(A + B)
    _, l2 = np.linalg.slogdet(A + C)
    _, l3 = np.linalg.slogdet(A + B + C)
    _, l4 = np.linalg.slogdet(A)
    return float(-np.expm1((l3 + l4) - (l1 + l2)))


def check_det_inequality(n: int, trials: int, rng, tol: float = 1e-9) -> CheckReport:
    """``det(A+B+C) det(A) <= det(A+B) det(A+C)`` for random PD ``A`` and PSD ``B, C``."""
    if n < 1:
        raise ValueError("n must be positive")
    bad, worst = 0, np.inf
    for _ in range(trials):
        A = _random_psd(rng, n) + 1e-3 * np.eye(n)
        B = _random_psd(rng, n, int(rng.integers(0, n + 1)))
        C = _random_psd(rng, n, int(rng.integers(0, n + 1)))
        m = det_abc_margin(A, B, C)
        worst = min(worst, m)
        bad += m < -tol
    return CheckReport("det-abc", trials, int(bad), float(worst), tol, {"n": n})


# --- lattice orders on atoms -----------------------------------------------------------------


def _atom_lookup(sm: SmallMixture):
    dims = [len(g) for g in sm.grids]
    return dims, np.ravel_multi_index(tuple(sm.index.T), dims)


def lsm_margins(logw, index, dims, chunk: int = 512) -> np.ndarray:
    """``log f(x^y) + log f(x v y) - log f(x) - log f(y)`` over all ordered pairs of atoms."""
    flat = np.full(int(np.prod(dims)), -np.inf)
    flat[np.ravel_multi_index(tuple(index.T), dims)] = logw
    out = []
    N = len(index)
    for s in range(0, N, chunk):
        a = index[s : s + chunk, None, :]
        b = index[None, :, :]
        lo = np.minimum(a, b).reshape(-1, index.shape[1])
        hi = np.maximum(a, b).reshape(-1, index.shape[1])
        ilo = np.ravel_multi_index(tuple(lo.T), dims)
        ihi = np.ravel_multi_index(tuple(hi.T), dims)
        m = flat[ilo] + flat[ihi] - (logw[s : s + chunk, None] + logw[None, :]).ravel()
        out.append(m)
    return np.concatenate(out)


def check_log_supermodular(sm: SmallMixture, tol: float = 1e-10, weights=None) -> CheckReport:
    """``nu(x) nu(y) <= nu(x ^ y) nu(x v y)`` for every pair of atoms."""
    dims, _ = _atom_lookup(sm)
    logw = sm.logw if weights is None else np.log(weights)
    m = lsm_margins(logw, sm.index, dims)
    # relative tolerance on the products of weights
    bad = int(np.sum(m < -tol))
    return CheckReport("log-supermodular", len(m), bad, float(m.min()), tol, {"instance": sm.name})


def _upper_indicator(index, corner):
    return np.all(index >= corner, axis=1)


def check_stoc_domination(sm: SmallMixture, rng=None, random_sets: int = 100, tol: float = 1e-12) -> CheckReport:
    """``E_nu[f] <= E_prior[f]`` for indicators of up-sets.

    Tested on every corner ``{xi >= a}`` and on ``random_sets`` random unions of
    corners (every up-set of a finite grid is such a union).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    nu, pr = sm.weights, sm.product_prior()
    corners = sm.index
    margins = []
    for a in corners:
        ind = _upper_indicator(sm.index, a)
        margins.append(pr[ind].sum() - nu[ind].sum())
    for _ in range(random_sets):
        k = int(rng.integers(1, min(6, len(corners)) + 1))
        pick = corners[rng.choice(len(corners), size=k, replace=False)]
        ind = np.zeros(len(sm.index), dtype=bool)
        for a in pick:
            ind |= _upper_indicator(sm.index, a)
        margins.append(pr[ind].sum() - nu[ind].sum())
    margins = np.array(margins)
    return CheckReport(
        "stoc-domination", len(margins), int(np.sum(margins < -tol)), float(margins.min()), tol, {"instance": sm.name}
    )


def check_fkg(weights, index, f_values, g_values, tol: float = 1e-12) -> CheckReport:
    """``E[fg] >= E[f] E[g]`` for one pair of functions on the atoms."""
    w = np.asarray(weights) / np.sum(weights)
    ef, eg, efg = w @ f_values, w @ g_values, w @ (f_values * g_values)
    m = float(efg - ef * eg)
    return CheckReport("fkg", 1, int(m < -tol), m, tol)


def is_increasing(values, index, dims) -> bool:
    flat = np.full(int(np.prod(dims)), np.nan)
    flat[np.ravel_multi_index(tuple(index.T), dims)] = values
    arr = flat.reshape(dims)
    return all(np.all(np.diff(arr, axis=k) >= 0) for k in range(len(dims)))


def check_fkg_suite(sm: SmallMixture, rng, pairs: int = 200, tol: float = 1e-12) -> CheckReport:
    """FKG for random increasing functions (cumulative sums of positive increments)."""
    dims, _ = _atom_lookup(sm)
    worst, bad = np.inf, 0
    for _ in range(pairs):
        fs = []
        for _ in range(2):
            arr = rng.exponential(size=dims) * (rng.uniform(size=dims) < 0.5)
            for k in range(len(dims)):
                arr = np.cumsum(arr, axis=k)
            fs.append(arr.ravel()[np.ravel_multi_index(tuple(sm.index.T), dims)])
        r = check_fkg(sm.weights, sm.index, fs[0], fs[1], tol)
        worst = min(worst, r.worst_margin)
        bad += r.violations
    return CheckReport("fkg", pairs, bad, float(worst), tol, {"instance": sm.name})


# --- Gaussian probabilities of symmetric strips -----------------------------------------------


def strip_probability(cov, A, c, tol: float = 1e-12) -> float:
    """``P(|<a_i, X>| <= c_i for all i)`` for ``X ~ N(0, cov)``.

    ``Z = A X`` is written as ``L W`` with ``W`` standard normal (pivoted
    factorization, rank at most 3); outer coordinates of ``W`` are integrated
    by adaptive quadrature and the innermost one exactly through the normal CDF.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    c = np.asarray(c, dtype=float)
    if A.size == 0:
        return 1.0
    S = A @ np.asarray(cov, dtype=float) @ A.T
    w, V = np.linalg.eigh(S)
    keep = w > 1e-14 * max(1.0, w.max())
    L = V[:, keep] * np.sqrt(w[keep])  # Z = L W
    r = L.shape[1]
    if r == 0:
        return 1.0
    if r > 3:
        raise ValueError("strip probabilities are implemented for rank at most 3")
    # rotate W so that L is lower-triangular in the leading rows with nonzero pivots
    Q, R = np.linalg.qr(L.T)
    Lt = R.T  # Z = Lt U with U standard normal
    lo_c, hi_c = -c, c
    nz = np.abs(Lt) > 1e-13 * np.abs(Lt).max()
    last = np.array([np.flatnonzero(row).max() if row.any() else -1 for row in nz])

    def interval(level, u):
        lo, hi = -np.inf, np.inf
        for i in np.flatnonzero(last == level):
            coef = Lt[i, level]
            rest = Lt[i, :level] @ u[:level] if level else 0.0
            a, b = (lo_c[i] - rest) / coef, (hi_c[i] - rest) / coef
            if coef < 0:
                a, b = b, a
            lo, hi = max(lo, a), min(hi, b)
        return lo, max(lo, hi)

    def integrand(level, u):
        lo, hi = interval(level, u)
        if hi <= lo:
            return 0.0
        if level == r - 1:
            return float(special.ndtr(hi) - special.ndtr(lo))
        lo, hi = max(lo, -9.0), min(hi, 9.0)
        if hi <= lo:
            return 0.0

        def f(x):
            u2 = u.copy()
            u2[level] = x
            return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi) * integrand(level + 1, u2)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(f, lo, hi, epsabs=tol, epsrel=tol, limit=200)
        return val

    return float(integrand(0, np.zeros(r)))


def mixture_strip_probability(weights, covs, A, c) -> float:
    return float(sum(w * strip_probability(S, A, c) for w, S in zip(weights, covs)))


def gci_margin(weights, covs, K1, K2) -> tuple:
    """``Gamma(K1 n K2) - Gamma(K1) Gamma(K2)`` for symmetric strip sets ``K = (A, c)``."""
    A1, c1 = K1
    A2, c2 = K2
    A12 = np.vstack([np.atleast_2d(A1).reshape(-1, np.shape(covs[0])[0]), np.atleast_2d(A2).reshape(-1, np.shape(covs[0])[0])])
    c12 = np.concatenate([np.atleast_1d(c1), np.atleast_1d(c2)])
    p1 = mixture_strip_probability(weights, covs, A1, c1)
    p2 = mixture_strip_probability(weights, covs, A2, c2)
    p12 = mixture_strip_probability(weights, covs, A12, c12)
    return p12 - p1 * p2, (p1, p2, p12)


def coordinate_strips(n: int, coords, widths) -> tuple:
    A = np.zeros((len(coords), n))
    for k, i in enumerate(coords):
        A[k, i] = 1.0
    return A, np.asarray(widths, dtype=float)


def check_fkg_gci(sm: SmallMixture, K1, K2, tol: float = 1e-8) -> CheckReport:
    """``Gamma(K1 n K2) >= Gamma(K1) Gamma(K2)`` for the mixture of ``N(0, F(xi)^{-1})``."""
    if sm.n > 3:
        raise ValueError("FKG-GCI check needs n <= 3")
    m, (p1, p2, p12) = gci_margin(sm.weights, sm.covariances(), K1, K2)
    return CheckReport(
        "fkg-gci", 1, int(m < -tol), float(m), tol, {"instance": sm.name, "p1": p1, "p2": p2, "p12": p12}
    )


# --- convex comparison ----------------------------------------------------------------------


def convex_comparison_exact(sm: SmallMixture, Phi, y) -> tuple:
    """Both sides of ``E Phi(Q_xi(y)) <= max_e E Phi(xi_e^2 Q_1(y))`` under ``nu``."""
    y = np.asarray(y, dtype=float)
    covs = sm.covariances()
    Q = np.einsum("i,aij,j->a", y, covs, y)
    F1 = sm.Y.T @ sm.Y
    Q1 = float(y @ np.linalg.solve(F1, y))
    lhs = float(sm.weights @ Phi(Q))
    rhs_e = [float(sm.weights @ Phi(sm.xi[:, e] ** 2 * Q1)) for e in range(sm.m)]
    return lhs, max(rhs_e), rhs_e


def check_convex_comparison(sm: SmallMixture, Phi, y, tol: float = 1e-12) -> CheckReport:
    lhs, rhs, _ = convex_comparison_exact(sm, Phi, y)
    m = rhs - lhs
    return CheckReport("convex-comparison", 1, int(m < -tol * (1 + abs(rhs))), float(m), tol, {"instance": sm.name, "lhs": lhs, "rhs": rhs})


def convex_comparison_mc(model, rho, Phi, y, samples: int, rng, method: str = "auto") -> dict:
    """Monte Carlo of both sides with ``xi`` i.i.d. from ``rho`` on every functional.

    Returns means and standard errors; the right side is the largest
    per-functional mean.
    """
    from .field import assemble_precision

    y = np.asarray(y, dtype=float)
    P1 = assemble_precision(model, 1.0, method=method)
    Q1 = P1.quadratic_form(y)
    lhs = np.empty(samples)
    rhs = np.zeros((samples, model.m))
    for s in range(samples):
        xi = rho.sample(rng, model.m)
        lhs[s] = Phi(assemble_precision(model, xi, method=method).quadratic_form(y))
        rhs[s] = Phi(xi**2 * Q1)
    rm = rhs.mean(axis=0)
    e = int(np.argmax(rm))
    return {
        "lhs": float(lhs.mean()),
        "lhs_se": float(lhs.std(ddof=1) / math.sqrt(samples)),
        "rhs": float(rm[e]),
        "rhs_se": float(rhs[:, e].std(ddof=1) / math.sqrt(samples)),
        "Q1": Q1,
    }


def hinge(t: float):
    return lambda x: np.maximum(np.asarray(x, dtype=float) - t, 0.0)


def run_suite(corpus, rng, det_trials: int = 10_000) -> list:
    """Every check over the corpus; returns the list of reports."""
    reports = [check_det_inequality(n, det_trials // 4, rng) for n in (1, 2, 3, 4)]
    for sm in corpus:
        reports.append(check_log_supermodular(sm))
        reports.append(check_stoc_domination(sm, rng))
        reports.append(check_fkg_suite(sm, rng, pairs=50))
        if sm.n <= 3:
            for K1, K2 in default_strips(sm.n):
                reports.append(check_fkg_gci(sm, K1, K2))
        for t in (0.5, 1.0, 2.0):
            y = np.zeros(sm.n)
            y[0] = 1.0
            reports.append(check_convex_comparison(sm, hinge(t), y))
    return reports


def default_strips(n: int) -> list:
    if n == 1:
        return [(coordinate_strips(1, [0], [1.0]), coordinate_strips(1, [0], [2.0]))]
    out = [(coordinate_strips(n, [0], [1.0]), coordinate_strips(n, [n - 1], [1.0]))]
    if n == 3:
        out.append((coordinate_strips(n, [0, 1], [1.0, 2.0]), coordinate_strips(n, [2], [0.5])))
    else:
        v = np.ones((1, n)) / math.sqrt(n)
        out.append((coordinate_strips(n, [0], [0.7]), (v, np.array([1.5]))))
    return out


def negative_controls(sm: SmallMixture, rng) -> list:
    """Deliberately broken inputs; every returned report should show violations.

    ``sm`` should have at least two atoms per functional and ``n >= 2``.
    """
    out = []
    r = check_log_supermodular(sm.mutated(det_power=0.5))
    out.append(CheckReport("control:log-supermodular", r.trials, r.violations, r.worst_margin, r.tolerance,
                           {"instance": sm.name, "mutation": "det(F)^(+1/2)"}))
    r = check_stoc_domination(sm.mutated(jacobian=False), rng)
    out.append(CheckReport("control:stoc-domination", r.trials, r.violations, r.worst_margin, r.tolerance,
                           {"instance": sm.name, "mutation": "no xi^(-1) factor"}))
    dims, _ = _atom_lookup(sm)
    f = sm.index.sum(axis=1).astype(float)
    r = check_fkg(sm.weights, sm.index, f, -f)
    out.append(CheckReport("control:fkg", 1, r.violations, r.worst_margin, r.tolerance,
                           {"instance": sm.name, "mutation": "one increasing, one decreasing function"}))
    covs = [np.diag([1.0, 100.0]), np.diag([100.0, 1.0])]
    K1, K2 = coordinate_strips(2, [0], [1.0]), coordinate_strips(2, [1], [1.0])
    m, (p1, p2, p12) = gci_margin([0.5, 0.5], covs, K1, K2)
    out.append(CheckReport("control:fkg-gci", 1, int(m < -1e-8), float(m), 1e-8,
                           {"instance": "anti-correlated covariance pair", "mutation": "mixture weights not from a log-supermodular law"}))
    y = np.zeros(sm.n)
    y[0] = 1.0
    r = check_convex_comparison(sm, lambda x: -np.asarray(x, dtype=float), y)
    out.append(CheckReport("control:convex-comparison", 1, r.violations, r.worst_margin, r.tolerance,
                           {"instance": sm.name, "mutation": "decreasing test function"}))
    return out
