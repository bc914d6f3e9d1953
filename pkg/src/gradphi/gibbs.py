"""Markov chains for surface models with mixture, spliced, or arbitrary potentials.

Each sweep of the augmentation samplers draws every scale ``xi_e`` from its
posterior given ``delta_e = <phi, y_e>`` and then updates ``phi`` given
``xi``.  The ``phi`` update is either a block redraw from ``N(0, F(xi)^{-1})``
(``phi_update="block"``) or a scan over colour classes of sites, each site
redrawn from its Gaussian conditional (``phi_update="local"``).  The local
scan needs no factorization and is the practical choice on large boxes.
"""
from __future__ import annotations

import hashlib
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .field import SingularPrecision, assemble_precision, sample_gff, variance
from .graph import FunctionalModel
from .mixtures import MixtureMeasure
from .potentials import Potential, decompose

# below this many coordinates the phi update uses dense linear algebra
DENSE_MAX = 400

TAIL_EXPONENTS = np.arange(-10, 41)
TAIL_THRESHOLDS = 2.0 ** (TAIL_EXPONENTS / 2.0)


@dataclass
class SamplerReport:
    acceptance: float
    tau: float
    ess: float

    def to_dict(self):
        return {"acceptance": self.acceptance, "tau": self.tau, "ess": self.ess}


@dataclass
class Chain:
    """States and running statistics of one chain.

    ``trace`` rows are recorded every ``thin`` sweeps after burn-in:
    ``(sweep, phi(probe), max |phi|, mean xi)``.
    """

    model: FunctionalModel
    seed: int | None
    sweeps: int
    burn_in: int
    thin: int
    probe: int
    kind: str
    trace: np.ndarray = field(default=None, repr=False)
    phis: np.ndarray | None = field(default=None, repr=False)
    xis: np.ndarray | None = field(default=None, repr=False)
    rb_variance: np.ndarray | None = field(default=None, repr=False)
    moments: np.ndarray = field(default=None, repr=False)  # (3, n): count, sum, sum of squares
    tail_counts: np.ndarray = field(default=None, repr=False)
    max_tail_counts: np.ndarray = field(default=None, repr=False)
    accepted: int = 0
    proposed: int = 0
    runtime: float = 0.0

    @property
    def probe_samples(self) -> np.ndarray:
        return self.trace[:, 1]

    @property
    def max_samples(self) -> np.ndarray:
        return self.trace[:, 2]

    def mean(self) -> np.ndarray:
        return self.moments[1] / self.moments[0]

    def var(self) -> np.ndarray:
        c, s, q = self.moments
        return q / c - (s / c) ** 2

    def report(self) -> SamplerReport:
        acc = self.accepted / self.proposed if self.proposed else 1.0
        x = self.probe_samples
        tau = integrated_autocorr(x) if len(x) > 10 else float("nan")
        ess = len(x) / tau if tau == tau and tau > 0 else float("nan")
        return SamplerReport(float(acc), float(tau), float(ess))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("sweep,phi_probe,max_abs_phi,mean_xi\n")
        for row in self.trace:
            buf.write(f"{int(row[0])},{row[1]!r},{row[2]!r},{row[3]!r}\n")
        return buf.getvalue()

    def manifest(self, config: dict | None = None) -> dict:
        cfg = json.dumps(config or {}, sort_keys=True, default=str)
        return {
            "config_hash": hashlib.sha256(cfg.encode()).hexdigest(),
            "seed": self.seed,
            "sampler": self.kind,
            "sweeps": self.sweeps,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "runtime": self.runtime,
            "report": self.report().to_dict(),
        }


def integrated_autocorr(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    var = x @ x / n
    if var == 0:
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    taus = 2 * np.cumsum(acf) - 1
    window = np.arange(n) >= c * taus
    m = int(np.argmax(window)) if window.any() else n - 1
    return float(max(taus[m], 1.0))


# --- site colouring ------------------------------------------------------------------------


def site_colors(model: FunctionalModel) -> list:
    """Partition of coordinates into sets that share no functional."""
    Yb = model.Y.copy()
    Yb.data = np.ones_like(Yb.data)
    G = (Yb.T @ Yb).tocsr()
    n = model.n
    if model.coords is not None and model.j == 1 and model.boundary == "wired":
        parity = model.coords.sum(axis=1) % 2
        return [np.flatnonzero(parity == p) for p in (0, 1) if np.any(parity == p)]
    color = np.full(n, -1)
    for v in range(n):
        nb = G.indices[G.indptr[v]:G.indptr[v + 1]]
        used = set(color[nb][color[nb] >= 0].tolist())
        c = 0
        while c in used:
            c += 1
        color[v] = c
    return [np.flatnonzero(color == c) for c in range(color.max() + 1)]


# --- potential plumbing --------------------------------------------------------------------


def _per_functional(model: FunctionalModel, U):
    """Group functionals by potential: list of (potential, index array)."""
    if isinstance(U, Potential):
        return [(U, np.arange(model.m))]
    U = list(U)
    if len(U) != model.m:
        raise ValueError("need one potential per functional")
    groups: dict = {}
    for e, u in enumerate(U):
        groups.setdefault(id(u), (u, []))[1].append(e)
    return [(u, np.array(idx)) for u, idx in groups.values()]


def _energy_terms(groups, delta, fn, idx=None):
    """``fn(u_e, delta)`` per functional; ``idx`` names the functionals behind ``delta`` (default all)."""
    out = np.empty(len(delta))
    if idx is None:
        for u, gidx in groups:
            out[gidx] = fn(u, delta[gidx])
        return out
    if len(groups) == 1:
        return fn(groups[0][0], delta)
    for u, gidx in groups:
        mask = np.isin(idx, gidx)
        if mask.any():
            out[mask] = fn(u, delta[mask])
    return out


# --- the core loop -------------------------------------------------------------------------


class _State:
    def __init__(self, model, rho, rng, phi_update, w_groups=None, probe=None, rb=False, solver="auto"):
        self.model = model
        self.rho = rho
        self.rng = rng
        self.phi_update = phi_update
        self.Y = model.Y.tocsr()
        self.YT = self.Y.T.tocsr()
        self.active = model.active
        self.phi = np.zeros(model.n)
        self.xi = np.full(model.m, rho.median() if rho is not None else 1.0)
        self.xi[~self.active] = np.inf
        self.w_groups = w_groups
        self.accepted = 0
        self.proposed = 0
        self.rb = rb
        self.probe = probe
        self.solver = solver
        self.P = None
        self.last_rb = np.nan
        self.dense = model.n <= DENSE_MAX
        if self.dense:
            self.Yd = self.Y.toarray()
        if phi_update == "local":
            self.colors = site_colors(model)
            pat = self.Y.copy()
            pat.data = np.ones_like(pat.data)
            self.incidence = pat.T.tocsr()  # n x m, 1 where a site touches a functional
            self.cols = [self.Y[:, c].tocsc() for c in self.colors]
            self.incs = [self.incidence[c] for c in self.colors]

    def W(self, delta, idx=None):
        return _energy_terms(self.w_groups, delta, lambda u, d: u(d), idx)

    def draw_xi(self):
        delta = self.Y @ self.phi
        act = self.active
        xi = np.full(self.model.m, np.inf)
        xi[act] = self.rho.posterior(delta[act], self.rng)
        self.xi = xi

    def precision(self):
        finite = np.isfinite(self.xi)
        if self.dense:
            Yf = self.Yd[finite]
            return (Yf.T * self.xi[finite] ** -2.0) @ Yf
        return (self.YT[:, finite] @ sp.diags(self.xi[finite] ** -2.0) @ self.Y[finite]).tocsr()

    def _dense_block(self):
        F = self.precision()
        try:
            L = la.cholesky(F, lower=True)
        except la.LinAlgError as exc:
            raise SingularPrecision(str(exc)) from exc
        # F = L L^T, so L^{-T} z has covariance F^{-1}
        prop = la.solve_triangular(L, self.rng.standard_normal(self.model.n), lower=True, trans="T")
        if self.rb:
            e = np.zeros(self.model.n)
            e[self.probe] = 1.0
            h = la.solve_triangular(L, e, lower=True)
            self.last_rb = float(h @ h)
        return prop

    def phi_block(self, metropolis: bool):
        if self.dense:
            prop = self._dense_block()
        else:
            self.P = assemble_precision(self.model, np.where(self.active, self.xi, 1.0), method=self.solver)
            prop = sample_gff(self.P, self.rng, 1)[0]
        if metropolis:
            self.proposed += 1
            d0, d1 = self.Y @ self.phi, self.Y @ prop
            act = self.active
            ia = np.flatnonzero(act)
            logr = -(self.W(d1[ia], ia).sum() - self.W(d0[ia], ia).sum()) if self.w_groups else 0.0
            if np.log(self.rng.uniform()) < logr:
                self.phi = prop
                self.accepted += 1
        else:
            self.phi = prop
        if self.rb and not self.dense:
            self.last_rb = variance(self.P, self.probe)

    def phi_local(self, metropolis: bool):
        F = self.precision()
        diag = np.diagonal(F) if self.dense else F.diagonal()
        delta = self.Y @ self.phi
        act = self.active
        for cset, Yc, inc in zip(self.colors, self.cols, self.incs):
            r = F[cset] @ self.phi
            d = diag[cset]
            mu = self.phi[cset] - r / d
            prop = mu + self.rng.standard_normal(len(cset)) / np.sqrt(d)
            step = prop - self.phi[cset]
            if metropolis:
                dd = Yc @ step
                touched = np.flatnonzero((dd != 0) & act)
                dW = np.zeros(self.model.m)
                if len(touched):
                    dW[touched] = self.W(delta[touched] + dd[touched], touched) - self.W(delta[touched], touched)
                per_site = inc @ dW
                ok = np.log(self.rng.uniform(size=len(cset))) < -per_site
                self.proposed += len(cset)
                self.accepted += int(ok.sum())
                step = np.where(ok, step, 0.0)
            self.phi[cset] += step
            delta += Yc @ step
        if self.rb and self.dense:
            self.last_rb = float(np.linalg.inv(F)[self.probe, self.probe])
        elif self.rb:
            P = assemble_precision(self.model, np.where(self.active, self.xi, 1.0), method=self.solver, factorize=False)
            self.last_rb = variance(P, self.probe)


def _run(kind, model, sweeps, rng, burn_in, thin, probe, store, step_fn, xi_of, seed, rb):
    n = model.n
    probe = model.origin_index if probe is None else probe
    moments = np.zeros((3, n))
    tail = np.zeros(len(TAIL_THRESHOLDS), dtype=np.int64)
    max_tail = np.zeros(len(TAIL_THRESHOLDS), dtype=np.int64)
    rows, phis, xis, rbs = [], [], [], []
    t0 = time.perf_counter()
    state = None
    for s in range(burn_in + sweeps):
        state = step_fn()
        if s < burn_in:
            continue
        phi = state.phi
        moments[0] += 1
        moments[1] += phi
        moments[2] += phi * phi
        a = abs(phi[probe])
        mx = float(np.abs(phi).max()) if n else 0.0
        tail += a >= TAIL_THRESHOLDS
        max_tail += mx >= TAIL_THRESHOLDS
        if (s - burn_in) % thin == 0:
            xi = xi_of(state)
            fin = xi[np.isfinite(xi)]
            rows.append((s, phi[probe], mx, float(fin.mean()) if len(fin) else np.nan))
            if store:
                phis.append(phi.copy())
                xis.append(xi.copy())
            if rb:
                rbs.append(state.last_rb)
    chain = Chain(
        model=model,
        seed=seed,
        sweeps=sweeps,
        burn_in=burn_in,
        thin=thin,
        probe=probe,
        kind=kind,
        trace=np.array(rows, dtype=float).reshape(-1, 4),
        phis=np.array(phis) if store else None,
        xis=np.array(xis) if store else None,
        rb_variance=np.array(rbs) if rb else None,
        moments=moments,
        tail_counts=tail,
        max_tail_counts=max_tail,
        runtime=time.perf_counter() - t0,
    )
    if state is not None:
        chain.accepted, chain.proposed = state.accepted, state.proposed
    return chain


def _rng_and_seed(rng):
    if isinstance(rng, (int, np.integer)) or rng is None:
        return np.random.default_rng(rng), (None if rng is None else int(rng))
    return rng, None


def sample_mixture_exact(
    model: FunctionalModel,
    rho: MixtureMeasure,
    sweeps: int,
    rng,
    burn_in: int = 1000,
    thin: int = 10,
    probe: int | None = None,
    phi_update: str = "block",
    store: bool = False,
    rao_blackwell: bool = False,
    solver: str = "auto",
) -> Chain:
    """Data augmentation for the mixture potential of ``rho`` on every functional."""
    rng, seed = _rng_and_seed(rng)
    probe = model.origin_index if probe is None else probe
    st = _State(model, rho, rng, phi_update, probe=probe, rb=rao_blackwell, solver=solver)

    def step():
        st.draw_xi()
        if phi_update == "block":
            st.phi_block(False)
        elif phi_update == "local":
            st.phi_local(False)
        else:
            raise ValueError(f"unknown phi_update {phi_update!r}")
        return st

    return _run("mixture-exact", model, sweeps, rng, burn_in, thin, probe, store, step, lambda s: s.xi, seed, rao_blackwell)


def sample_splice(
    model: FunctionalModel,
    U,
    rho: MixtureMeasure,
    sweeps: int,
    rng,
    burn_in: int = 1000,
    thin: int = 10,
    probe: int | None = None,
    phi_update: str = "block",
    store: bool = False,
    grid=None,
    solver: str = "auto",
) -> Chain:
    """Augmentation for ``V`` with a Metropolis correction for ``W = U - V``.

    Raises :class:`DecompositionFails` when some ``U`` does not split against ``rho``.
    """
    rng, seed = _rng_and_seed(rng)
    groups = []
    for u, idx in _per_functional(model, U):
        d = decompose(u, rho, grid)
        groups.append((_WPotential(d), idx))
    probe = model.origin_index if probe is None else probe
    st = _State(model, rho, rng, phi_update, w_groups=groups, probe=probe, solver=solver)

    def step():
        st.draw_xi()
        if phi_update == "block":
            st.phi_block(True)
        elif phi_update == "local":
            st.phi_local(True)
        else:
            raise ValueError(f"unknown phi_update {phi_update!r}")
        return st

    return _run("splice", model, sweeps, rng, burn_in, thin, probe, store, step, lambda s: s.xi, seed, False)


class _WPotential:
    def __init__(self, d):
        self.d = d

    def __call__(self, x):
        return self.d.W(x)


def sample_metropolis(
    model: FunctionalModel,
    U,
    step_scale: float,
    sweeps: int,
    rng,
    burn_in: int = 1000,
    thin: int = 10,
    probe: int | None = None,
    store: bool = False,
) -> Chain:
    """Single-site random-walk Metropolis, sites visited colour class by colour class."""
    rng, seed = _rng_and_seed(rng)
    groups = _per_functional(model, U)
    Y = model.Y.tocsr()
    act = model.active
    colors = site_colors(model)
    pat = Y.copy()
    pat.data = np.ones_like(pat.data)
    inc = pat.T.tocsr()
    cols = [Y[:, c].tocsc() for c in colors]
    incs = [inc[c] for c in colors]
    phi = np.zeros(model.n)
    if not np.all(np.isfinite(_energy_terms(groups, Y @ phi, lambda u, d: u(d)))):
        raise ValueError("energy is not finite at phi = 0")

    class S:
        accepted = 0
        proposed = 0

    S.phi = phi
    ones = np.ones(model.m)

    def energy(idx, d):
        return _energy_terms(groups, d, lambda u, x: u(x), idx)

    delta = Y @ phi

    def step():
        nonlocal delta
        for cset, Yc, ic in zip(colors, cols, incs):
            dphi = step_scale * rng.standard_normal(len(cset))
            dd = Yc @ dphi
            touched = np.flatnonzero((dd != 0) & act)
            dU = np.zeros(model.m)
            if len(touched):
                dU[touched] = energy(touched, delta[touched] + dd[touched]) - energy(touched, delta[touched])
            per_site = ic @ dU
            ok = np.log(rng.uniform(size=len(cset))) < -per_site
            S.proposed += len(cset)
            S.accepted += int(ok.sum())
            dphi = np.where(ok, dphi, 0.0)
            S.phi[cset] += dphi
            delta += Yc @ dphi
        return S

    return _run("metropolis", model, sweeps, rng, burn_in, thin, probe, store, step, lambda s: ones, seed, False)


def sample_gaussian(
    model: FunctionalModel,
    c: float,
    sweeps: int,
    rng,
    burn_in: int = 0,
    thin: int = 1,
    probe: int | None = None,
    store: bool = False,
    solver: str = "auto",
    batch: int = 64,
) -> Chain:
    """Independent exact draws of the field with potential ``c x^2 / 2`` on every functional."""
    rng, seed = _rng_and_seed(rng)
    xi = np.full(model.m, c**-0.5)
    P = assemble_precision(model, np.where(model.active, xi, 1.0), method=solver)

    class S:
        accepted = 0
        proposed = 0
        pool: list = []

    def step():
        if not S.pool:
            S.pool = list(sample_gff(P, rng, batch))
        S.phi = S.pool.pop(0)
        return S

    return _run("gaussian", model, sweeps, rng, burn_in, thin, probe, store, step, lambda s: P.xi, seed, False)


def run_replicas(fn, seed: int, replicas: int, threads: int = 1, **kw) -> list:
    """Independent chains seeded ``seed + r``; results in replica order."""
    jobs = [dict(kw, rng=seed + r) for r in range(replicas)]
    if threads <= 1:
        return [fn(**j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda j: fn(**j), jobs))
