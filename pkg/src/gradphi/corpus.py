"""Built-in potentials, scale measures and the fixed corpus of small mixtures."""
from __future__ import annotations

import numpy as np

from .inequalities import SmallMixture
from .mixtures import rho_alpha_eps, rho_tilted_stable
from .potentials import eps_splice, poly_eps_for, poly_splice, power_growth, quadratic, splice

TWO = [0.5, 0.5]


def _pareto_grid(alpha: float, A: float, k: int = 4):
    """``k`` atoms at the quantiles ``(i + 1/2)/k`` of a shifted Pareto law, equal weights."""
    q = (np.arange(k) + 0.5) / k
    return list(A * (1 - q) ** (-1 / alpha)), [1.0 / k] * k


def _mix(name, Y, grid, prior, statement, m=None):
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    m = Y.shape[0] if m is None else m
    return SmallMixture(name, Y, [grid] * m, [prior] * m, statement)


def _path(n):
    """Wired path with ``n`` free vertices: ``n + 1`` edge functionals."""
    Y = np.zeros((n + 1, n))
    Y[0, 0] = 1
    for e in range(1, n):
        Y[e, e - 1], Y[e, e] = 1, -1
    Y[n, n - 1] = 1
    return Y


def _complete3():
    Y = [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, -1, 0], [0, 1, -1], [1, 0, -1]]
    return np.array(Y, dtype=float)


def small_mixture_corpus() -> list:
    """Twenty fixed instances with ``n`` in {1, 2, 3} and two- or four-point scale grids."""
    pg, pw = _pareto_grid(3.0, 2.0)
    pg2, pw2 = _pareto_grid(1.5, 1.5)
    grad = "mixture of gradient fields on a wired graph"
    out = [
        _mix("star1-two", [[1]], [1, 2], TWO, "single edge to the ground, scales {1, 2}"),
        _mix("star2-two", [[1], [1]], [1, 3], [0.3, 0.7], "two parallel ground edges, scales {1, 3}"),
        _mix("star3-four", [[1], [1], [1]], pg, pw, "three parallel ground edges, four Pareto atoms"),
        _mix("star1-four", [[1]], pg2, pw2, "single edge, heavy four-atom scale law"),
        _mix("path2-two", _path(2), [1, 2], TWO, f"{grad}: two-vertex path, scales {{1, 2}}"),
        _mix("path2-skew", _path(2), [0.5, 2], [0.7, 0.3], f"{grad}: two-vertex path, scales {{1/2, 2}}"),
        _mix("path2-four", _path(2), pg, pw, f"{grad}: two-vertex path, four Pareto atoms"),
        _mix(
            "path2-extra",
            np.vstack([_path(2), [[1, 0]]]),
            [1, 2],
            TWO,
            f"{grad}: two-vertex path with a doubled boundary edge",
        ),
        _mix("sum2-two", [[1, 0], [0, 1], [1, 1]], [1, 2], TWO, "coordinate functionals plus their sum"),
        _mix("general2-two", [[1, 0], [1, -1], [1, 2], [0, 1]], [0.5, 1.5], TWO, "four generic functionals in the plane"),
        _mix("path3-two", _path(3), [1, 2], TWO, f"{grad}: three-vertex path, scales {{1, 2}}"),
        _mix("path3-four", _path(3), pg, pw, f"{grad}: three-vertex path, four Pareto atoms"),
        _mix("triangle-two", _complete3(), [1, 2], TWO, f"{grad}: triangle, every vertex wired"),
        _mix("triangle-skew", _complete3(), [0.5, 3], [0.2, 0.8], f"{grad}: triangle, scales {{1/2, 3}}"),
        _mix(
            "lap3-two",
            [[2, -1, 0], [-1, 2, -1], [0, -1, 2], [1, 0, 0]],
            [1, 2],
            TWO,
            "rows of a one-dimensional Laplacian as functionals",
        ),
        _mix(
            "generic3-two",
            [[1, 0, 0], [1, 1, 0], [0, 1, -1], [1, 0, 2], [0, 0, 1]],
            [1, 2.5],
            TWO,
            "five generic functionals in three dimensions",
        ),
        SmallMixture(
            "path2-hetero",
            _path(2),
            [[1, 2], [0.5, 1], [1, 4]],
            [[0.5, 0.5], [0.3, 0.7], [0.8, 0.2]],
            f"{grad}: two-vertex path, a different scale law on each edge",
        ),
        _mix(
            "star3path-four",
            [[1, 0, 0], [0, 0, 1], [1, -1, 0], [0, 1, -1], [0, 1, 0]],
            pg2[:2] + pg2[3:],
            [0.4, 0.35, 0.25],
            f"{grad}: three-vertex path with a wired middle, three atoms",
        ),
        _mix("star1-wide", [[1]], [0.1, 10], [0.9, 0.1], "single edge, widely separated scales"),
        _mix("torus3-two", [[1, 0], [-1, 1], [0, -1]], [1, 2], TWO, f"{grad}: three-cycle with one pinned vertex"),
    ]
    assert len(out) == 20
    return out


def registry() -> list:
    """``(name, kind, statement)`` for every built-in object, in a stable order."""
    entries = [
        ("splice(α,ε)", "potential", "U' = min(εx, (α+1)/x): the extremal (α,ε)-monotone potential"),
        ("eps-splice(ε)", "potential", "U' = min(εx, (1+ε)/x): the extremal ε-monotone potential"),
        ("poly-splice(β,ε)", "potential", "U' = ε min(x, x^(β-1)): the extremal (β,ε)-polynomially monotone potential"),
        ("power-growth(β,K)", "potential", "U = (1+(x/K)^2)^(β/2) - 1 is a Gaussian mixture potential for 0 < β < 2"),
        ("quadratic(c)", "potential", "U = c x^2 / 2, the Gaussian free field"),
        (
            "pareto-mixture(α,ε)",
            "mixture",
            "shifted Pareto scale law α A^α κ^(-α-1) on [A, ∞), A = 1 + ε^(-1/2): every (α,ε)-monotone U splits as V + increasing W",
        ),
        (
            "tilted-stable(β,K)",
            "mixture",
            "tilted positive (β/2)-stable scale law whose mixture potential is (1+(x/K)^2)^(β/2)",
        ),
        ("two-point(κ1,κ2,w)", "mixture", "two-atom scale law"),
        ("empirical", "mixture", "uniform law on stored scale samples"),
    ]
    for sm in small_mixture_corpus():
        entries.append(
            (
                sm.name,
                "small-mixture",
                f"{sm.statement}; the mixing law det(F)^(-1/2) ∏ξ^(-1) ∏ρ is log-supermodular and dominated by ∏ρ",
            )
        )
    return entries


BUILTIN_POTENTIALS = {
    "quadratic": quadratic,
    "splice": splice,
    "eps-splice": eps_splice,
    "poly-splice": poly_splice,
    "power-growth": power_growth,
}

BUILTIN_MIXTURES = {"pareto-mixture": rho_alpha_eps, "tilted-stable": rho_tilted_stable}

__all__ = ["small_mixture_corpus", "registry", "poly_eps_for", "BUILTIN_POTENTIALS", "BUILTIN_MIXTURES"]
