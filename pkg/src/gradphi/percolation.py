"""Bond percolation and resistance profiles over nested boxes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .field import assemble_precision, effective_resistance, variance
from .graph import FunctionalModel, Graph, build_lattice_box
from .mixtures import MixtureMeasure

# bond percolation thresholds (hypercubic lattices; trees use 1/(degree-1))
P_C = {2: 0.5, 3: 0.2488, 4: 0.1601, 5: 0.1182, 6: 0.0942}


class UnionFind:
    """Disjoint sets with union by size and path halving."""

    def __init__(self, n: int):
        self.parent = np.arange(n)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def labels(self) -> np.ndarray:
        """Component labels ``0..k-1`` in order of first appearance."""
        roots = np.array([self.find(i) for i in range(len(self.parent))])
        _, first, inv = np.unique(roots, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return order[inv]


@dataclass
class PercolationSample:
    graph: Graph
    p: float
    seed: int | None
    open: np.ndarray
    labels: np.ndarray
    sizes: np.ndarray = field(repr=False)

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)

    @property
    def largest(self) -> int:
        return int(self.sizes.max(initial=0))


def components(n: int, edges: np.ndarray) -> tuple:
    uf = UnionFind(n)
    for a, b in edges:
        uf.union(int(a), int(b))
    labels = uf.labels()
    return labels, np.bincount(labels, minlength=labels.max(initial=-1) + 1)


def percolate(graph: Graph, p: float, rng=None, uniforms=None) -> PercolationSample:
    """Open each edge independently with probability ``p``.

    Passing the same ``uniforms`` for several ``p`` couples the samples:
    edge ``e`` is open iff ``uniforms[e] < p``.
    """
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    seed = None
    if uniforms is None:
        if isinstance(rng, (int, np.integer)) or rng is None:
            seed = None if rng is None else int(rng)
            rng = np.random.default_rng(rng)
        uniforms = rng.uniform(size=graph.n_edges)
    uniforms = np.asarray(uniforms)
    is_open = uniforms < p
    labels, sizes = components(graph.n_vertices, graph.edges[is_open])
    return PercolationSample(graph, p, seed, is_open, labels, sizes)


def threshold_subgraph(xi, C: float) -> np.ndarray:
    """Indicator of edges with ``xi_e <= C``."""
    return np.asarray(xi, dtype=float) <= C


def critical_probability(dim: int | None = None, tree_degree: int | None = None) -> float:
    if tree_degree is not None:
        return 1.0 / (tree_degree - 1)
    if dim not in P_C:
        raise ValueError(f"no tabulated threshold for dimension {dim}")
    return P_C[dim]


def default_cutoff(rho: MixtureMeasure, dim: int | None = None, tree_degree: int | None = None) -> tuple:
    """``C`` with ``rho([0, C]) = (1 + p_c) / 2``; returns ``(C, p)``."""
    p = 0.5 * (1.0 + critical_probability(dim, tree_degree))
    return float(rho.ppf(p)), p


# --- nested-box resistance profiles ---------------------------------------------------------


def _encode(keys: np.ndarray, R: int) -> np.ndarray:
    d = keys.shape[1] - 1
    shifted = keys.copy()
    shifted[:, :d] += R + 1
    dims = (2 * R + 3,) * d + (d,)
    return np.ravel_multi_index(tuple(shifted.T), dims)


@dataclass
class ResistanceProfile:
    Ls: list
    seeds: list
    R: np.ndarray  # (len(seeds), len(Ls))
    open_fraction: np.ndarray
    cutoff: float
    p: float

    def medians(self) -> np.ndarray:
        return np.median(self.R, axis=0)

    def quantiles(self, qs=(0.1, 0.25, 0.5, 0.75, 0.9)) -> dict:
        return {float(q): np.quantile(self.R, q, axis=0).tolist() for q in qs}

    def slope(self, relative: bool = False) -> float:
        """Least-squares slope of the median against ``log L`` (optionally divided by the mean median)."""
        med = self.medians()
        b = np.polyfit(np.log(self.Ls), med, 1)[0]
        return float(b / med.mean()) if relative else float(b)

    def rows(self):
        for i, s in enumerate(self.seeds):
            for j, L in enumerate(self.Ls):
                yield L, s, self.R[i, j]


def cluster_resistance_profile(
    d: int,
    Ls,
    rho: MixtureMeasure | None,
    seeds,
    C: float | None = None,
    probe=None,
    method: str = "auto",
) -> ResistanceProfile:
    """Resistance from the probe to the wired boundary on nested boxes.

    Per seed one set of i.i.d. scales is drawn on the edges of the largest box
    and restricted to each smaller box by edge identity, so the profiles are
    coupled as in a single infinite-volume environment.  ``rho = None`` means
    unit scales.
    """
    Ls = sorted(int(L) for L in Ls)
    Rmax = Ls[-1]
    models = [build_lattice_box(d, L) for L in Ls]
    big = models[-1]
    big_codes = _encode(big.edge_keys, Rmax)
    order = np.argsort(big_codes)
    idx_maps = []
    for m in models:
        codes = _encode(m.edge_keys, Rmax)
        pos = np.searchsorted(big_codes[order], codes)
        idx_maps.append(order[pos])
    if rho is not None and C is None:
        C, p = default_cutoff(rho, dim=d)
    elif rho is not None:
        p = float(rho.cdf(C))
    else:
        C, p = np.inf, 1.0
    seeds = list(seeds)
    R = np.empty((len(seeds), len(Ls)))
    frac = np.empty((len(seeds), len(Ls)))
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        xi_big = rho.sample(rng, big.m) if rho is not None else np.ones(big.m)
        for j, (m, imap) in enumerate(zip(models, idx_maps)):
            xi = xi_big[imap]
            v = m.origin_index if probe is None else m.index_of(probe)
            R[i, j] = effective_resistance(m, xi, v, method=method)
            frac[i, j] = threshold_subgraph(xi, C).mean()
    return ResistanceProfile(Ls, seeds, R, frac, float(C), float(p))


def variance_profile(model_builder, Ls, xi_fn=None, method: str = "auto") -> np.ndarray:
    """``Var phi(0)`` under ``N(0, F(xi)^{-1})`` for each box size."""
    out = []
    for L in Ls:
        m: FunctionalModel = model_builder(L)
        xi = np.ones(m.m) if xi_fn is None else xi_fn(m)
        out.append(variance(assemble_precision(m, xi, method=method), m.origin_index))
    return np.array(out)
