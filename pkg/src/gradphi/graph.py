"""Finite graphs and the linear-functional families that define each surface model.

A model lives on the free coordinates ``phi`` of a finite vertex set.  Its
Hamiltonian is a sum of one-dimensional potentials applied to sparse linear
functionals ``<phi, y_e>``.  Nearest-neighbour gradients with wired, free or
periodic boundary and iterated-Laplacian rows are all instances of this.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

BOUNDARIES = ("wired", "free-pinned", "torus")


class SpanLost(ValueError):
    """The surviving functionals no longer span the coordinate space."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected multigraph with dense vertex and edge ids."""

    n_vertices: int
    edges: np.ndarray
    coords: np.ndarray | None = None

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_vertices)


@dataclass(frozen=True, eq=False)
class FunctionalModel:
    """Vertex coordinates plus a spanning family of sparse functionals.

    ``Y`` is the ``(m, n)`` matrix whose rows are the functionals ``y_e``.
    ``edge_keys`` (lattice models only) holds, per functional, the lower
    endpoint of the underlying lattice edge followed by its axis; it is the
    handle used to couple resistances across nested boxes.
    """

    Y: sp.csr_matrix
    labels: np.ndarray
    origins: np.ndarray
    boundary: str = "wired"
    j: int = 1
    dim: int | None = None
    radius: int | None = None
    coords: np.ndarray | None = None
    edge_keys: np.ndarray | None = None
    pinned: tuple | None = None
    infinite: np.ndarray | None = None
    tree: Graph | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.Y.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[0]

    @property
    def n_sites(self) -> int:
        """Vertices of the underlying graph inside the box, pinned vertex included."""
        return self.n + (1 if self.pinned is not None else 0)

    @property
    def active(self) -> np.ndarray:
        if self.infinite is None:
            return np.ones(self.m, dtype=bool)
        return ~self.infinite

    @property
    def is_gradient(self) -> bool:
        """True when every functional is a (possibly grounded) edge difference."""
        if self.j != 1:
            return False
        Y = self.Y
        nnz = np.diff(Y.indptr)
        if nnz.max(initial=0) > 2 or not np.all(np.abs(Y.data) == 1):
            return False
        two = np.flatnonzero(nnz == 2)
        start = Y.indptr[two]
        return bool(np.all(Y.data[start] + Y.data[start + 1] == 0))

    def gram(self, weights=None) -> sp.csr_matrix:
        """``sum_e w_e y_e y_e^T`` over active functionals (``F(1)`` by default)."""
        w = np.ones(self.m) if weights is None else np.asarray(weights, dtype=float)
        w = np.where(self.active, w, 0.0)
        return (self.Y.T @ sp.diags(w) @ self.Y).tocsr()

    def index_of(self, coord) -> int:
        """Coordinate index of a lattice site."""
        coord = np.asarray(coord)
        hit = np.flatnonzero(np.all(self.coords == coord, axis=1))
        if len(hit) == 0:
            raise KeyError(f"site {tuple(coord)} is not a free coordinate")
        return int(hit[0])

    @property
    def origin_index(self) -> int:
        if self.coords is None:
            return 0
        return self.index_of(np.zeros(self.coords.shape[1], dtype=int))

    def network_edges(self, mask=None) -> np.ndarray:
        """Edge list on ``n + 1`` nodes; node ``n`` is the ground (wired or pinned) vertex."""
        if not self.is_gradient:
            raise ValueError("only gradient models have an electrical network")
        keep = self.active if mask is None else (self.active & mask)
        Y = self.Y
        out = np.full((self.m, 2), self.n, dtype=np.int64)
        start, nnz = Y.indptr[:-1], np.diff(Y.indptr)
        out[:, 0] = Y.indices[start]
        two = nnz == 2
        out[two, 1] = Y.indices[start[two] + 1]
        return out[keep]

    def spans(self, mask=None) -> bool:
        keep = self.active if mask is None else (self.active & np.asarray(mask, dtype=bool))
        if not keep.any():
            return self.n == 0
        if self.is_gradient:
            edges = self.network_edges(keep)
            adj = sp.coo_matrix(
                (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(self.n + 1, self.n + 1)
            )
            _, lab = connected_components(adj, directed=False)
            return bool(np.all(lab == lab[self.n]))
        Yk = self.Y[np.flatnonzero(keep)]
        if self.n <= 4000:
            return np.linalg.matrix_rank(Yk.toarray()) == self.n
        from scipy.sparse.linalg import splu

        try:
            lu = splu((Yk.T @ Yk).tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError:
            return False
        return bool(np.min(np.abs(lu.U.diagonal())) > 1e-10)

    def to_dict(self) -> dict:
        Y = self.Y
        functionals = []
        for e in range(self.m):
            sl = slice(Y.indptr[e], Y.indptr[e + 1])
            functionals.append({
                "id": e,
                "label": str(self.labels[e]),
                "entries": [[int(c), float(v)] for c, v in zip(Y.indices[sl], Y.data[sl])],
            })
        vertices = (
            [list(map(int, c)) for c in self.coords] if self.coords is not None else list(range(self.n))
        )
        return {
            "dim": self.dim,
            "radius": self.radius,
            "boundary": self.boundary,
            "j": self.j,
            "vertices": vertices,
            "functionals": functionals,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _box_coords(d: int, L: int) -> np.ndarray:
    r = np.arange(-L, L + 1)
    return np.stack(np.meshgrid(*([r] * d), indexing="ij"), -1).reshape(-1, d)


def _box_index(coords: np.ndarray, L: int) -> np.ndarray:
    d = coords.shape[-1]
    return np.ravel_multi_index(tuple((coords + L).T), (2 * L + 1,) * d)


def _axis_lowers(d: int, L: int, k: int, lo: int, hi: int) -> np.ndarray:
    ranges = [np.arange(-L, L + 1)] * d
    ranges[k] = np.arange(lo, hi + 1)
    return np.stack(np.meshgrid(*ranges, indexing="ij"), -1).reshape(-1, d)


def _from_triplets(rows, cols, vals, m, n) -> sp.csr_matrix:
    Y = sp.csr_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))), shape=(m, n)
    )
    Y.sum_duplicates()
    Y.eliminate_zeros()
    Y.sort_indices()
    return Y


def lattice_laplacian(d: int, R: int) -> sp.csr_matrix:
    """Lattice Laplacian on the box of radius ``R`` with the full-lattice stencil.

    ``(Delta f)(x) = sum_{y ~ x} (f(x) - f(y))``; the diagonal is ``2d`` everywhere,
    i.e. sites outside the box are treated as carrying the value zero.
    """
    s = 2 * R + 1
    T = sp.diags([-np.ones(s - 1), -np.ones(s - 1)], [-1, 1])
    I = sp.identity(s)
    A = None
    for k in range(d):
        ops = [I] * d
        ops[k] = T
        K = ops[0]
        for o in ops[1:]:
            K = sp.kron(K, o)
        A = K if A is None else A + K
    return (2 * d * sp.identity(s**d) + A).tocsr()


def _wired_gradient(d: int, L: int) -> FunctionalModel:
    coords = _box_coords(d, L)
    n = len(coords)
    rows, cols, vals, labels, keys = [], [], [], [], []
    e = 0
    for k in range(d):
        lowers = _axis_lowers(d, L, k, -L - 1, L)
        uppers = lowers.copy()
        uppers[:, k] += 1
        lo_in = lowers[:, k] >= -L
        hi_in = uppers[:, k] <= L
        ilo = np.where(lo_in, _box_index(np.clip(lowers, -L, L), L), -1)
        ihi = np.where(hi_in, _box_index(np.clip(uppers, -L, L), L), -1)
        for a, b, x in zip(ilo, ihi, lowers):
            if a >= 0 and b >= 0:
                rows += [e, e]
                cols += [a, b]
                vals += [1.0, -1.0]
                labels.append("edge")
            else:
                rows.append(e)
                cols.append(a if a >= 0 else b)
                vals.append(1.0)
                labels.append("boundary-edge")
            keys.append((*x, k))
            e += 1
    return FunctionalModel(
        Y=_from_triplets(rows, cols, vals, e, n),
        labels=np.array(labels),
        origins=np.arange(e),
        boundary="wired",
        j=1,
        dim=d,
        radius=L,
        coords=coords,
        edge_keys=np.array(keys, dtype=np.int64),
    )


def _wired_laplacian(d: int, L: int, j: int) -> FunctionalModel:
    k = j // 2
    R = L + k + 1
    big = _box_coords(d, R)
    inner = _box_coords(d, L)
    P = sp.csr_matrix(
        (np.ones(len(inner)), (_box_index(inner, R), np.arange(len(inner)))), shape=(len(big), len(inner))
    )
    Lap = lattice_laplacian(d, R)
    M = P
    for _ in range(k):
        M = Lap @ M
    M = M.tocsr()
    keys = None
    if j % 2 == 0:
        rows_used = np.flatnonzero(np.diff(M.indptr) > 0)
        Y = M[rows_used]
        origins = rows_used
    else:
        blocks, key_list = [], []
        for ax in range(d):
            lowers = _axis_lowers(d, R, ax, -R, R - 1)
            uppers = lowers.copy()
            uppers[:, ax] += 1
            G = M[_box_index(lowers, R)] - M[_box_index(uppers, R)]
            blocks.append(G)
            key_list.append(np.column_stack([lowers, np.full(len(lowers), ax)]))
        G = sp.vstack(blocks).tocsr()
        G.eliminate_zeros()
        allkeys = np.vstack(key_list)
        rows_used = np.flatnonzero(np.diff(G.indptr) > 0)
        Y = G[rows_used]
        keys = allkeys[rows_used]
        origins = rows_used
    Y = Y.astype(float).tocsr()
    Y.sort_indices()
    return FunctionalModel(
        Y=Y,
        labels=np.array(["laplacian-row"] * Y.shape[0]),
        origins=np.asarray(origins),
        boundary="wired",
        j=j,
        dim=d,
        radius=L,
        coords=inner,
        edge_keys=keys,
    )


def _pinned_gradient(d: int, L: int, boundary: str, v0) -> FunctionalModel:
    sites = _box_coords(d, L)
    v0 = np.zeros(d, dtype=int) if v0 is None else np.asarray(v0, dtype=int)
    if v0.shape != (d,) or np.any(np.abs(v0) > L):
        raise ValueError(f"pinned vertex {tuple(v0)} is not in the box of radius {L}")
    p = int(_box_index(v0[None], L)[0])
    remap = np.full(len(sites), -1)
    remap[np.arange(len(sites)) != p] = np.arange(len(sites) - 1)
    rows, cols, vals, labels, keys = [], [], [], [], []
    e = 0
    for k in range(d):
        if boundary == "torus":
            lowers = sites
            uppers = lowers.copy()
            uppers[:, k] = (uppers[:, k] + 1 + L) % (2 * L + 1) - L
        else:
            lowers = _axis_lowers(d, L, k, -L, L - 1)
            uppers = lowers.copy()
            uppers[:, k] += 1
        ia, ib = _box_index(lowers, L), _box_index(uppers, L)
        for a, b, x in zip(ia, ib, lowers):
            # +1 on the lexicographically smaller endpoint
            if b < a:
                a, b = b, a
            ra, rb = remap[a], remap[b]
            touched = False
            for r, s in ((ra, 1.0), (rb, -1.0)):
                if r >= 0:
                    rows.append(e)
                    cols.append(r)
                    vals.append(s)
                else:
                    touched = True
            labels.append("boundary-edge" if touched else "edge")
            keys.append((*x, k))
            e += 1
    return FunctionalModel(
        Y=_from_triplets(rows, cols, vals, e, len(sites) - 1),
        labels=np.array(labels),
        origins=np.arange(e),
        boundary=boundary,
        j=1,
        dim=d,
        radius=L,
        coords=sites[remap >= 0],
        edge_keys=np.array(keys, dtype=np.int64),
        pinned=tuple(int(c) for c in v0),
    )


def build_lattice_box(d: int, L: int, boundary: str = "wired", j: int = 1, v0=None) -> FunctionalModel:
    """Model on ``[-L..L]^d``.

    ``wired`` contracts the exterior to a grounded vertex (one functional per
    boundary-crossing edge); for ``j >= 2`` the functionals are rows of
    ``Delta^{j/2}`` (or gradients of ``Delta^{(j-1)/2}`` for odd ``j``) with
    the exterior pinned to zero.  ``free-pinned`` keeps only box edges and pins
    ``v0``; ``torus`` identifies opposite faces (side ``2L+1``) and pins ``v0``.
    """
    if d < 1 or L < 0 or j < 1:
        raise ValueError("need d >= 1, L >= 0, j >= 1")
    if boundary not in BOUNDARIES:
        raise ValueError(f"unknown boundary {boundary!r}")
    if boundary != "wired" and j >= 2:
        raise ValueError(f"boundary {boundary!r} with j={j} is not supported")
    if boundary == "torus" and L < 1:
        raise ValueError("torus needs L >= 1")
    if boundary == "wired":
        return _wired_gradient(d, L) if j == 1 else _wired_laplacian(d, L, j)
    return _pinned_gradient(d, L, boundary, v0)


def build_tree(degree: int, depth: int) -> FunctionalModel:
    """Ball of radius ``depth`` in the ``degree``-regular tree, leaves wired to ground."""
    if degree <= 2:
        raise ValueError("tree degree must be at least 3")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    parent = [-1]
    level = [0]
    frontier = [0]
    for h in range(1, depth + 1):
        nxt = []
        for v in frontier:
            for _ in range(degree if v == 0 else degree - 1):
                parent.append(v)
                level.append(h)
                nxt.append(len(parent) - 1)
        frontier = nxt
    parent = np.array(parent)
    level = np.array(level)
    interior = np.flatnonzero(level < depth)
    rows, cols, vals, labels = [], [], [], []
    for e, v in enumerate(range(1, len(parent))):
        p = parent[v]
        if level[v] < depth:
            rows += [e, e]
            cols += [p, v]
            vals += [1.0, -1.0]
            labels.append("edge")
        else:
            rows.append(e)
            cols.append(p)
            vals.append(1.0)
            labels.append("boundary-edge")
    m = len(parent) - 1
    tree = Graph(len(parent), np.column_stack([parent[1:], np.arange(1, len(parent))]))
    return FunctionalModel(
        Y=_from_triplets(rows, cols, vals, m, len(interior)),
        labels=np.array(labels),
        origins=np.arange(m),
        boundary="wired",
        j=1,
        dim=degree,
        radius=depth,
        tree=tree,
    )


def lattice_graph(d: int, side: int, periodic: bool = False) -> Graph:
    """Nearest-neighbour graph on ``{0..side-1}^d``."""
    r = np.arange(side)
    coords = np.stack(np.meshgrid(*([r] * d), indexing="ij"), -1).reshape(-1, d)
    idx = np.arange(len(coords)).reshape((side,) * d)
    edges = []
    for k in range(d):
        a = idx if periodic else np.take(idx, range(side - 1), axis=k)
        b = np.roll(idx, -1, axis=k) if periodic else np.take(idx, range(1, side), axis=k)
        edges.append(np.column_stack([a.ravel(), b.ravel()]))
    return Graph(len(coords), np.vstack(edges), coords)


def model_graph(model: FunctionalModel) -> Graph:
    """Electrical network of a gradient model; the last vertex is the ground."""
    return Graph(model.n + 1, model.network_edges(np.ones(model.m, dtype=bool)))


def restrict_model(model: FunctionalModel, keep, drop_mode: str = "delete", prune_vertices: bool = False):
    """Drop functionals outside ``keep`` (a mask or an id predicate).

    ``delete`` removes them; ``infinite-resistance`` keeps them but forces
    ``xi_e = inf`` at assembly.  ``prune_vertices`` additionally removes
    coordinates touched by no surviving functional (they would carry an
    improper flat law).
    """
    if callable(keep):
        mask = np.array([bool(keep(e)) for e in range(model.m)], dtype=bool)
    else:
        mask = np.asarray(keep, dtype=bool)
    if mask.shape != (model.m,):
        raise ValueError("keep mask has the wrong length")
    Y, coords = model.Y, model.coords
    if prune_vertices:
        used = np.zeros(model.n, dtype=bool)
        used[model.Y[np.flatnonzero(mask & model.active)].indices] = True
        Y = Y[:, np.flatnonzero(used)].tocsr()
        coords = None if coords is None else coords[used]
    if drop_mode == "delete":
        rows = np.flatnonzero(mask)
        inf = None if model.infinite is None else model.infinite[rows]
        out = FunctionalModel(
            Y=Y[rows].tocsr(),
            labels=model.labels[rows],
            origins=model.origins[rows],
            boundary=model.boundary,
            j=model.j,
            dim=model.dim,
            radius=model.radius,
            coords=coords,
            edge_keys=None if model.edge_keys is None else model.edge_keys[rows],
            pinned=model.pinned,
            infinite=inf,
            tree=model.tree,
        )
    elif drop_mode == "infinite-resistance":
        inf = ~mask if model.infinite is None else (model.infinite | ~mask)
        out = FunctionalModel(
            Y=Y.tocsr(),
            labels=model.labels,
            origins=model.origins,
            boundary=model.boundary,
            j=model.j,
            dim=model.dim,
            radius=model.radius,
            coords=coords,
            edge_keys=model.edge_keys,
            pinned=model.pinned,
            infinite=inf,
            tree=model.tree,
        )
    else:
        raise ValueError(f"unknown drop_mode {drop_mode!r}")
    if not out.spans():
        raise SpanLost("surviving functionals do not span the coordinate space")
    return out


# --- edge-disjoint transient subgraphs of Z^d -------------------------------------------


@dataclass(frozen=True)
class PartitionPart:
    axis: int  # 1-based
    eta: int
    path: tuple
    endpoint: tuple
    edges: np.ndarray  # (E, d+1): lower endpoint, axis (0-based)

    def edge_set(self) -> set:
        return {tuple(int(v) for v in r) for r in self.edges}


@dataclass(frozen=True)
class PartitionSpec:
    dim: int
    radius: int
    parts: tuple

    def masks(self, model: FunctionalModel) -> list:
        """Per part, which functionals of a lattice model belong to it."""
        keys = {tuple(int(v) for v in r): e for e, r in enumerate(model.edge_keys)}
        out = []
        for part in self.parts:
            mask = np.zeros(model.m, dtype=bool)
            for key in part.edge_set():
                e = keys.get(key)
                if e is not None:
                    mask[e] = True
            out.append(mask)
        return out


def _edge_key(a, b) -> tuple:
    a, b = np.asarray(a), np.asarray(b)
    k = int(np.flatnonzero(a != b)[0])
    lower = a if a[k] < b[k] else b
    return (*map(int, lower), k)


def transience_path(d: int, i: int, eta: int) -> list:
    """Length-``d`` path from the origin that opens the orthant of part ``(i, eta)``."""
    pts = [np.zeros(d, dtype=int)]
    step = np.zeros(d, dtype=int)
    step[i - 1] = 1
    pts.append(eta * step.copy())
    acc = step.copy()
    for jj in range(i + 1, i + d):
        jh = (jj - 1) % d + 1
        v = np.zeros(d, dtype=int)
        v[jh - 1] = 1 if i <= jh else -1
        acc = acc + v
        pts.append(eta * acc.copy())
    return [tuple(int(c) for c in p) for p in pts]


def strong_transience_partition(d: int, L: int) -> PartitionSpec:
    """``2d`` edge-disjoint subgraphs (path plus shifted orthant) through the origin.

    Each part keeps its orthant edges having at least one endpoint in
    ``[-L..L]^d``, so it is a subset of the wired-box edge set.
    """
    if d <= 2:
        raise ValueError("the partition needs d >= 3")
    if L < 1:
        raise ValueError("need L >= 1")
    parts = []
    for i in range(1, d + 1):
        for eta in (1, -1):
            path = transience_path(d, i, eta)
            w = np.array(path[-1])
            edges = [_edge_key(a, b) for a, b in zip(path[:-1], path[1:])]
            ranges = [np.arange(1, L + 2) if w[c] > 0 else np.arange(-L - 1, 0) for c in range(d)]
            verts = np.stack(np.meshgrid(*ranges, indexing="ij"), -1).reshape(-1, d)
            for k in range(d):
                up = verts.copy()
                up[:, k] += 1
                ok = np.all(w * up >= 1, axis=1)
                in_box = np.all(np.abs(verts) <= L, axis=1) | np.all(np.abs(up) <= L, axis=1)
                both = ok & in_box & np.all(np.abs(up) <= L + 1, axis=1)
                sel = verts[both]
                edges += [(*map(int, v), k) for v in sel]
            parts.append(
                PartitionPart(i, eta, tuple(path), tuple(int(c) for c in w), np.array(edges, dtype=np.int64))
            )
    return PartitionSpec(d, L, tuple(parts))


def box_edge_keys(d: int, L: int) -> set:
    """Keys of all lattice edges with at least one endpoint in ``[-L..L]^d``."""
    out = set()
    for k in range(d):
        for x in _axis_lowers(d, L, k, -L - 1, L):
            out.add((*map(int, x), k))
    return out


def orthant_sign_vectors(spec: PartitionSpec) -> list:
    return [p.endpoint for p in spec.parts]


def build_star(k: int = 1) -> FunctionalModel:
    """One free vertex joined to the ground by ``k`` parallel edges."""
    if k < 1:
        raise ValueError("need at least one edge")
    Y = sp.csr_matrix(np.ones((k, 1)))
    return FunctionalModel(
        Y=Y, labels=np.array(["boundary-edge"] * k), origins=np.arange(k), boundary="wired", j=1
    )


def build_path(n: int) -> FunctionalModel:
    """Path of ``n`` free vertices wired to the ground at both ends (``n + 1`` edges)."""
    if n < 1:
        raise ValueError("need at least one vertex")
    rows, cols, vals = [0], [0], [1.0]
    for e in range(1, n):
        rows += [e, e]
        cols += [e - 1, e]
        vals += [1.0, -1.0]
    rows.append(n)
    cols.append(n - 1)
    vals.append(1.0)
    labels = ["boundary-edge"] + ["edge"] * (n - 1) + ["boundary-edge"]
    return FunctionalModel(
        Y=_from_triplets(rows, cols, vals, n + 1, n), labels=np.array(labels), origins=np.arange(n + 1)
    )


__all__ = [
    "Graph",
    "FunctionalModel",
    "PartitionPart",
    "PartitionSpec",
    "SpanLost",
    "build_lattice_box",
    "build_tree",
    "lattice_graph",
    "lattice_laplacian",
    "model_graph",
    "restrict_model",
    "strong_transience_partition",
    "transience_path",
    "box_edge_keys",
    "build_star",
    "build_path",
]
