"""Even potentials, their monotonicity classes, and splits ``U = V + W``.

``V`` is a Gaussian mixture potential (see :mod:`gradphi.mixtures`) and ``W``
must be even and non-decreasing on ``[0, inf)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mixtures import MixtureMeasure, eval_V, mixture_dV

CLASSES = ("eps", "alpha-eps", "beta-eps", "explicit")


class DecompositionFails(ValueError):
    """``U - V`` is not non-decreasing on the verification grid."""


@dataclass(frozen=True)
class Potential:
    """Even potential with ``U(0) = 0``.

    ``cls`` is one of ``eps``, ``alpha-eps``, ``beta-eps``, ``explicit`` and
    ``params`` carries the class parameters (``eps``, ``alpha``, ``beta``, ``K``).
    """

    name: str
    U: Callable
    dU: Callable | None = None
    cls: str = "explicit"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.U(np.abs(np.asarray(x, dtype=float)))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.dU is not None:
            return np.sign(x) * self.dU(np.abs(x))
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        return (self(x + h) - self(x - h)) / (2 * h)

    def spec(self) -> dict:
        return {"name": self.name, "class": self.cls, **self.params}


def class_bound(cls: str, params: dict, x):
    """Lower bound on ``U'(x)`` for ``x > 0`` defining each class."""
    x = np.asarray(x, dtype=float)
    if cls == "eps":
        e = params["eps"]
        return np.minimum(e * x, (1 + e) / x)
    if cls == "alpha-eps":
        e, a = params["eps"], params["alpha"]
        return np.minimum(e * x, (a + 1) / x)
    if cls == "beta-eps":
        e, b = params["eps"], params["beta"]
        return e * np.minimum(x, x ** (b - 1))
    raise ValueError(f"class {cls!r} has no derivative bound")


@dataclass(frozen=True)
class ClassReport:
    passed: bool
    worst_point: float
    margin: float


def check_class(U: Potential, grid, cls: str | None = None, params: dict | None = None) -> ClassReport:
    """Whether ``U'(x)`` dominates the class bound at every grid point."""
    cls = U.cls if cls is None else cls
    params = U.params if params is None else params
    x = np.asarray(grid, dtype=float)
    if np.any(x <= 0):
        raise ValueError("grid must be positive")
    bound = class_bound(cls, params, x)
    slack = U.derivative(x) - bound
    tol = 1e-6 * (1 + np.abs(bound))
    i = int(np.argmin(slack + tol))
    return ClassReport(bool(np.all(slack >= -tol)), float(x[i]), float(slack[i]))


# --- built-in potentials -----------------------------------------------------------------


def quadratic(c: float = 1.0) -> Potential:
    return Potential(f"quadratic({c:g})", lambda x: 0.5 * c * x * x, lambda x: c * x, "eps", {"eps": c})


def splice(alpha: float, eps: float) -> Potential:
    """Quadratic-then-logarithmic potential with ``U' = min(eps x, (alpha+1)/x)``."""
    xs = math.sqrt((alpha + 1) / eps)

    def U(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x <= xs, 0.5 * eps * x * x, 0.5 * (alpha + 1) + (alpha + 1) * np.log(np.maximum(x, xs) / xs))

    def dU(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.minimum(eps * x, (alpha + 1) / np.where(x > 0, x, np.inf))

    return Potential(f"splice({alpha:g},{eps:g})", U, dU, "alpha-eps", {"alpha": alpha, "eps": eps})


def eps_splice(eps: float) -> Potential:
    """Potential with ``U' = min(eps x, (1+eps)/x)``."""
    p = splice(eps, eps)
    return Potential(f"eps-splice({eps:g})", p.U, p.dU, "eps", {"eps": eps})


def poly_splice(beta: float, eps: float) -> Potential:
    """``U' = eps min(x, x^{beta-1})``: quadratic near zero, ``|x|^beta`` growth."""

    def U(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 1, 0.5 * eps * x * x, 0.5 * eps + eps * (np.maximum(x, 1.0) ** beta - 1) / beta)

    def dU(x):
        x = np.asarray(x, dtype=float)
        return eps * np.minimum(x, np.maximum(x, 1e-300) ** (beta - 1))

    return Potential(f"poly-splice({beta:g},{eps:g})", U, dU, "beta-eps", {"beta": beta, "eps": eps})


def poly_eps_for(beta: float, K: float) -> float:
    """Smallest slope for which ``poly_splice(beta, eps)`` dominates ``(1+(x/K)^2)^{beta/2}`` in derivative."""
    return max(beta / K**2, beta / K**beta)


def power_growth(beta: float, K: float) -> Potential:
    """``(1 + (x/K)^2)^{beta/2} - 1``."""
    b = 0.5 * beta

    def U(x):
        return (1 + (np.asarray(x, dtype=float) / K) ** 2) ** b - 1

    def dU(x):
        x = np.asarray(x, dtype=float)
        return beta * x / K**2 * (1 + (x / K) ** 2) ** (b - 1)

    return Potential(f"power-growth({beta:g},{K:g})", U, dU, "explicit", {"beta": beta, "K": K})


def mixture_potential(rho: MixtureMeasure) -> Potential:
    """The mixture potential ``V - V(0)`` itself."""
    v0 = float(eval_V(rho, 0.0, "closed").value)

    def U(x):
        return eval_V(rho, x, "closed").value - v0

    def dU(x):
        return mixture_dV(rho, x)

    return Potential(f"mixture({rho.kind})", U, dU, "explicit", {"measure": rho.kind, **rho.params})


def potential_from_spec(spec: dict) -> Potential:
    name = spec.get("name")
    if name == "quadratic":
        return quadratic(float(spec.get("c", 1.0)))
    if name == "splice":
        return splice(float(spec["alpha"]), float(spec["eps"]))
    if name == "eps-splice":
        return eps_splice(float(spec["eps"]))
    if name == "poly-splice":
        eps = spec.get("eps")
        if eps is None:
            eps = poly_eps_for(float(spec["beta"]), float(spec["K"]))
        return poly_splice(float(spec["beta"]), float(eps))
    if name == "power-growth":
        return power_growth(float(spec["beta"]), float(spec["K"]))
    raise ValueError(f"unknown potential {name!r}")


# --- decomposition -------------------------------------------------------------------------


@dataclass(frozen=True)
class Decomposition:
    U: Potential
    rho: MixtureMeasure
    constant: float  # V(0), so that V - constant vanishes at 0
    grid: np.ndarray
    max_violation: float
    min_slope: float

    def V(self, x):
        return eval_V(self.rho, x, "closed").value - self.constant

    def W(self, x):
        return self.U(x) - self.V(x)

    def dW(self, x):
        return self.U.derivative(x) - mixture_dV(self.rho, x)


def default_grid(lo: float = 1e-3, hi: float = 1e3, n: int = 2001) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def decompose(U: Potential, rho: MixtureMeasure, grid=None, tol: float = 1e-6) -> Decomposition:
    """Split ``U = V + W`` with ``V`` the mixture potential of ``rho`` and ``W(0) = 0``.

    ``W`` must be non-decreasing on the grid: both the increments of ``W`` and
    the derivative ``U' - V'`` are checked, each against ``tol`` scaled by the
    size of the compared terms.
    """
    grid = default_grid() if grid is None else np.sort(np.asarray(grid, dtype=float))
    if np.any(grid < 0):
        raise ValueError("grid must be non-negative")
    c = float(eval_V(rho, 0.0, "closed").value)
    x = np.concatenate([[0.0], grid]) if grid[0] > 0 else grid
    Vx = eval_V(rho, x, "closed").value - c
    Wx = U(x) - Vx
    scale = 1.0 + np.maximum(np.abs(U(x)), np.abs(Vx))
    inc = np.diff(Wx) / (tol * scale[1:])
    dU = U.derivative(grid)
    dV = mixture_dV(rho, grid)
    slope = (dU - dV) / (tol * (1.0 + np.abs(dU)))
    worst = float(min(inc.min(initial=np.inf), slope.min(initial=np.inf)))
    d = Decomposition(U, rho, c, grid, max(0.0, -worst) * tol, float((dU - dV).min()))
    if worst < -1.0:
        i = int(np.argmin(slope))
        raise DecompositionFails(
            f"U - V decreases near x={grid[i]:.4g} (U'-V' = {dU[i] - dV[i]:.3g}) for {U.name} against {rho.kind}"
        )
    return d
