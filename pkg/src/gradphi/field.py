"""Resistance-weighted Gaussian free fields.

For scales ``xi`` the precision matrix is ``F(xi) = sum_e xi_e^{-2} y_e y_e^T``.
Functionals with ``xi_e = inf`` are dropped at assembly.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .graph import FunctionalModel

# direct factorization only for small, sparse systems; fill-in grows quickly with dimension
DIRECT_MAX = 2_000
DIRECT_MAX_ROW_NNZ = 16


class SingularPrecision(ArithmeticError):
    pass


class Disconnected(ArithmeticError):
    pass


class _Direct:
    def __init__(self, A: sp.csc_matrix):
        self.A = A
        try:
            self.lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SingularPrecision(str(exc)) from exc
        d = np.abs(self.lu.U.diagonal())
        if not np.all(d > 1e-13 * max(1.0, d.max(initial=0.0))):
            raise SingularPrecision("zero pivot in factorization")

    def solve(self, b, refine: int = 0):
        """LU solve followed by ``refine`` steps of iterative refinement."""
        b = np.asarray(b, dtype=float)
        x = self.lu.solve(b)
        for _ in range(refine):
            x = x + self.lu.solve(b - self.A @ x)
        return x


class _Iterative:
    """Conjugate gradient, preconditioned by smoothed-aggregation AMG or Jacobi."""

    def __init__(self, A: sp.csr_matrix, precond: str = "amg", rtol: float = 1e-12):
        self.A = A
        self.rtol = rtol
        if precond == "amg":
            import pyamg

            self.M = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric").aspreconditioner(cycle="V")
        elif precond == "jacobi":
            diag = A.diagonal()
            if np.any(diag <= 0):
                raise SingularPrecision("non-positive diagonal")
            self.M = sp.diags(1.0 / diag)
        else:
            raise ValueError(f"unknown preconditioner {precond!r}")

    def _one(self, b):
        x, info = spla.cg(self.A, b, rtol=self.rtol, atol=0.0, M=self.M, maxiter=20 * self.A.shape[0])
        if info != 0:
            raise SingularPrecision(f"conjugate gradient did not converge (info={info})")
        return x

    def solve(self, b, refine: int = 0):
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            return self._one(b)
        return np.column_stack([self._one(b[:, k]) for k in range(b.shape[1])])


def make_solver(A, method: str = "auto"):
    n = A.shape[0]
    if method == "auto":
        small = n <= DIRECT_MAX and A.nnz <= DIRECT_MAX_ROW_NNZ * max(n, 1)
        method = "direct" if small else "cg-jacobi"
    if method == "direct":
        return _Direct(sp.csc_matrix(A))
    if method == "cg-amg":
        return _Iterative(sp.csr_matrix(A), "amg")
    if method == "cg-jacobi":
        return _Iterative(sp.csr_matrix(A), "jacobi")
    raise ValueError(f"unknown solver {method!r}")


def _as_xi(model: FunctionalModel, xi) -> np.ndarray:
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (model.m,)).copy()
    if np.any(~(xi > 0)):
        raise ValueError("scales must be positive")
    if model.infinite is not None:
        xi[model.infinite] = np.inf
    return xi


@dataclass(eq=False)
class PrecisionMatrix:
    model: FunctionalModel
    xi: np.ndarray
    F: sp.csr_matrix
    method: str = "auto"
    _solver: object = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def solver(self):
        if self._solver is None:
            self._solver = make_solver(self.F, self.method)
        return self._solver

    def solve(self, b, refine: int = 0):
        return self.solver.solve(b, refine)

    def quadratic_form(self, y) -> float:
        """``<y, F^{-1} y>``."""
        y = np.asarray(y, dtype=float)
        return float(y @ self.solve(y))


def assemble_precision(model: FunctionalModel, xi, method: str = "auto", factorize: bool = True) -> PrecisionMatrix:
    """``F(xi)`` summed in functional order; infinite scales are dropped."""
    xi = _as_xi(model, xi)
    finite = np.isfinite(xi)
    rows = np.flatnonzero(finite)
    Y = model.Y[rows]
    F = (Y.T @ sp.diags(xi[rows] ** -2.0) @ Y).tocsr()
    F.sort_indices()
    if F.shape[0] and np.any(F.diagonal() <= 0):
        raise SingularPrecision("a coordinate is touched by no finite functional")
    P = PrecisionMatrix(model, xi, F, method)
    if factorize:
        _ = P.solver
    return P


def variance(P: PrecisionMatrix, v: int) -> float:
    """``(F^{-1})_{vv}`` from one solve."""
    e = np.zeros(P.n)
    e[v] = 1.0
    return float(P.solve(e, refine=2)[v])


def covariance(P: PrecisionMatrix) -> np.ndarray:
    """Dense ``F^{-1}``; small models only."""
    return P.solve(np.eye(P.n))


def conductance_laplacian(model: FunctionalModel, xi) -> sp.csr_matrix:
    """Weighted graph Laplacian on ``n + 1`` nodes (last node is the ground) with conductances ``xi^-2``."""
    xi = _as_xi(model, xi)
    finite = np.isfinite(xi)
    edges = model.network_edges(finite)
    c = xi[finite] ** -2.0
    N = model.n + 1
    a, b = edges[:, 0], edges[:, 1]
    W = sp.coo_matrix((np.concatenate([c, c]), (np.concatenate([a, b]), np.concatenate([b, a]))), shape=(N, N))
    W = W.tocsr()
    return (sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()


def effective_resistance(model: FunctionalModel, xi, v: int, w: int | None = None, method: str = "auto") -> float:
    """Resistance between nodes ``v`` and ``w`` with edge resistances ``xi_e^2``.

    ``w = None`` means the ground (wired boundary or pinned vertex).  The
    network is grounded at ``v``, a unit current is injected at ``w``, and the
    resistance is the potential reached at ``w``.
    """
    w = model.n if w is None else w
    if v == w:
        raise ValueError("v and w must differ")
    Lap = conductance_laplacian(model, xi)
    _, lab = connected_components(Lap, directed=False)
    if lab[v] != lab[w]:
        raise Disconnected(f"nodes {v} and {w} are not connected")
    comp = np.flatnonzero(lab == lab[v])
    keep = comp[comp != v]
    sub = Lap[keep][:, keep]
    b = np.zeros(len(keep))
    b[np.searchsorted(keep, w)] = 1.0
    u = make_solver(sub, method).solve(b, refine=2)
    return float(u[np.searchsorted(keep, w)])


def sample_gff(P: PrecisionMatrix, rng, count: int = 1) -> np.ndarray:
    """Exact draws from ``N(0, F^{-1})``, shape ``(count, n)``.

    ``phi = F^{-1} Y^T (xi^{-1} z)`` with ``z`` standard normal over the
    functionals has covariance ``F^{-1} (Y^T diag(xi^-2) Y) F^{-1} = F^{-1}``.
    """
    finite = np.isfinite(P.xi)
    rows = np.flatnonzero(finite)
    Yt = P.model.Y[rows].T.tocsr()
    z = rng.standard_normal((len(rows), count))
    rhs = Yt @ (z / P.xi[rows, None])
    out = P.solve(rhs)
    return np.asarray(out).reshape(P.n, count).T


def to_matrix_market(P: PrecisionMatrix) -> str:
    from scipy.io import mmwrite

    buf = io.BytesIO()
    mmwrite(buf, P.F, comment="precision matrix", field="real", symmetry="symmetric")
    return buf.getvalue().decode()


def lattice_green_origin(d: int, power: int = 1) -> float:
    """``(Delta^{-power})(0, 0)`` on the infinite lattice ``Z^d``, ``Delta = 2d - adjacency``.

    Uses ``Delta^{-p} = Gamma(p)^{-1} int t^{p-1} exp(-t Delta) dt`` and the
    heat kernel ``exp(-t Delta)(0,0) = (exp(-2t) I_0(2t))^d``.
    """
    from math import gamma

    from scipy import integrate, special

    val, _ = integrate.quad(
        lambda t: t ** (power - 1) * special.i0e(2 * t) ** d, 0, np.inf, epsabs=0, epsrel=1e-12, limit=400
    )
    return val / gamma(power)
