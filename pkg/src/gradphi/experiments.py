"""One runner per experiment kind: ``config -> Result`` with CSV and JSON payloads.

Runners are pure functions of the configuration (seed included); nothing
time-dependent enters a CSV file.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig, ModelSpec
from .corpus import small_mixture_corpus
from .field import assemble_precision, variance
from .gibbs import integrated_autocorr, run_replicas, sample_gaussian, sample_metropolis, sample_mixture_exact, sample_splice
from .graph import build_lattice_box, build_path, build_star, build_tree, lattice_graph, model_graph
from .inequalities import negative_controls, run_suite
from .mixtures import measure_from_spec
from .percolation import cluster_resistance_profile, critical_probability, percolate
from .potentials import decompose, default_grid, potential_from_spec
from .stats import decorrelate, fit_power_tail, fit_stretched_tail, max_scaling, select_tail_model, variance_growth


@dataclass
class Result:
    summary: dict
    files: dict = field(default_factory=dict)  # file name -> text


def csv_text(header, rows) -> str:
    """CSV with ``repr`` floats so reruns are byte-identical."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def build_model(spec: ModelSpec, L: int):
    if spec.graph == "lattice":
        return build_lattice_box(spec.d, L, spec.boundary, spec.j)
    if spec.graph == "star":
        return build_star(L)
    if spec.graph == "path":
        return build_path(L)
    if spec.graph == "tree":
        return build_tree(spec.degree, L)
    raise ValueError(f"unknown graph {spec.graph!r}")


def run_chain(cfg: ExperimentConfig, model, seed: int, threads: int = 1, store: bool = False) -> list:
    """``cfg.sampler.replicas`` chains seeded ``seed, seed + 1, ...``."""
    s = cfg.sampler
    common = dict(sweeps=s.sweeps, burn_in=s.burn_in, thin=s.thin, store=store)
    if s.sampler == "gaussian":
        c = float(cfg.potential.get("c", 1.0)) if cfg.potential else 1.0
        return run_replicas(sample_gaussian, seed, s.replicas, threads, model=model, c=c, solver=s.solver, **common)
    if s.sampler == "mixture-exact":
        rho = measure_from_spec(cfg.mixture)
        return run_replicas(sample_mixture_exact, seed, s.replicas, threads, model=model, rho=rho,
                            phi_update=s.phi_update, solver=s.solver, **common)
    U = potential_from_spec(cfg.potential)
    if s.sampler == "splice":
        rho = measure_from_spec(cfg.mixture)
        return run_replicas(sample_splice, seed, s.replicas, threads, model=model, U=U, rho=rho,
                            phi_update=s.phi_update, solver=s.solver, **common)
    if s.sampler == "metropolis":
        return run_replicas(sample_metropolis, seed, s.replicas, threads, model=model, U=U, step_scale=s.step_scale, **common)
    raise ValueError(f"unknown sampler {s.sampler!r}")


# --- runners ---------------------------------------------------------------------------------


def run_decompose(cfg: ExperimentConfig, threads: int = 1) -> Result:
    U = potential_from_spec(cfg.potential)
    rho = measure_from_spec(cfg.mixture)
    p = cfg.params
    grid = default_grid(p.get("grid_lo", 1e-3), p.get("grid_hi", 1e3), p.get("grid_n", 2001))
    d = decompose(U, rho, grid)
    x = grid[:: max(1, len(grid) // 200)]
    rows = zip(x, U(x), d.V(x), d.W(x), d.dW(x))
    summary = {
        "potential": U.spec(),
        "mixture": {"kind": rho.kind, **rho.params},
        "max_violation": d.max_violation,
        "min_slope": d.min_slope,
        "constant": d.constant,
    }
    return Result(summary, {"decomposition.csv": csv_text(["x", "U", "V", "W", "dW"], rows)})


def run_sample(cfg: ExperimentConfig, threads: int = 1) -> Result:
    files, chains = {}, []
    for L in cfg.model.Ls:
        model = build_model(cfg.model, L)
        for r, ch in enumerate(run_chain(cfg, model, cfg.seed, threads)):
            files[f"chain_L{L}_r{r}.csv"] = ch.to_csv()
            rep = ch.report()
            chains.append(
                {"L": L, "replica": r, "n": model.n, "var_probe": float(ch.var()[ch.probe]), **rep.to_dict()}
            )
    return Result({"chains": chains}, files)


def run_resistance_profile(cfg: ExperimentConfig, threads: int = 1) -> Result:
    rho = measure_from_spec(cfg.mixture)
    nseeds = cfg.params.get("seeds", 8)
    seeds = range(cfg.seed, cfg.seed + nseeds)
    prof = cluster_resistance_profile(cfg.model.d, cfg.model.Ls, rho, seeds, cfg.params.get("cutoff"),
                                      method=cfg.sampler.solver)
    rows = []
    for i, s in enumerate(prof.seeds):
        for j, L in enumerate(prof.Ls):
            rows.append((L, s, prof.R[i, j], prof.open_fraction[i, j]))
    summary = {
        "Ls": prof.Ls,
        "medians": prof.medians().tolist(),
        "quantiles": prof.quantiles(),
        "slope": prof.slope(),
        "relative_slope": prof.slope(relative=True),
        "cutoff": prof.cutoff,
        "p": prof.p,
    }
    return Result(summary, {"resistance.csv": csv_text(["L", "seed", "resistance", "open_fraction"], rows)})


def run_percolate(cfg: ExperimentConfig, threads: int = 1) -> Result:
    m = cfg.model
    if m.graph == "tree":
        pc = critical_probability(tree_degree=m.degree)
    else:
        pc = critical_probability(dim=m.d) if m.d in (2, 3, 4, 5, 6) else 0.5
    ps = cfg.params.get("p", [pc])
    nsamp = cfg.params.get("samples", 10)
    rng = np.random.default_rng(cfg.seed)
    rows, stats = [], []
    for L in m.Ls:
        g = model_graph(build_tree(m.degree, L)) if m.graph == "tree" else lattice_graph(m.d, L)
        largest = np.zeros((nsamp, len(ps)))
        for k in range(nsamp):
            u = rng.uniform(size=g.n_edges)
            for j, p in enumerate(ps):
                s = percolate(g, p, uniforms=u)
                largest[k, j] = s.largest
                rows.append((L, p, k, s.largest, s.n_clusters))
        for j, p in enumerate(ps):
            stats.append({"L": L, "p": p, "mean_largest_fraction": float(largest[:, j].mean() / g.n_vertices)})
    return Result({"p_c": pc, "stats": stats}, {"percolation.csv": csv_text(["L", "p", "sample", "largest", "n_clusters"], rows)})


def run_verify_inequalities(cfg: ExperimentConfig, threads: int = 1) -> Result:
    rng = np.random.default_rng(cfg.seed)
    corpus = small_mixture_corpus()
    reports = run_suite(corpus, rng, cfg.params.get("det_trials", 10_000))
    controls = negative_controls(next(s for s in corpus if s.name == "path2-two"), rng)
    ledger, rows = {}, []
    for r in reports + controls:
        inst = r.details.get("instance", f"n={r.details.get('n', '')}")
        key = f"{r.name}/{inst}"
        k, i = key, 1
        while k in ledger:
            i += 1
            k = f"{key}#{i}"
        ledger[k] = r.to_dict()
        rows.append((r.name, k.split("/", 1)[1], r.trials, r.violations, r.worst_margin))
    summary = {
        "violations": int(sum(r.violations for r in reports)),
        "checks": len(reports),
        "controls_tripped": int(sum(r.violations > 0 for r in controls)),
        "controls": len(controls),
        "ledger": ledger,
    }
    return Result(summary, {"checks.csv": csv_text(["check", "instance", "trials", "violations", "worst_margin"], rows)})


def _pooled_probe(chains) -> np.ndarray:
    return np.concatenate([c.probe_samples for c in chains])


def run_tails(cfg: ExperimentConfig, threads: int = 1) -> Result:
    model = build_model(cfg.model, cfg.model.Ls[0])
    chains = run_chain(cfg, model, cfg.seed, threads)
    x = _pooled_probe(chains)
    p = cfg.params
    which = p.get("tail", "both")
    upper = p.get("upper")
    summary, files = {"n": model.n, "samples": int(len(x))}, {}
    rep = None
    if which in ("power", "both"):
        rep = fit_power_tail(x, upper or 0.05)
        summary["power"] = rep.to_dict()
    if which in ("stretched", "both"):
        rep = fit_stretched_tail(x, upper or 0.1, form=p.get("form", "density"))
        summary["stretched"] = rep.to_dict()
    if which == "both":
        summary["selection"] = select_tail_model(x).chosen
    summary["chains"] = [c.report().to_dict() for c in chains]
    files["survival.csv"] = csv_text(["t", "survival"], rep.curve_rows())
    files["samples.csv"] = csv_text(["replica", "sweep", "phi_probe"],
                                    ((r, int(row[0]), row[1]) for r, c in enumerate(chains) for row in c.trace))
    return Result(summary, files)


def run_max_scaling(cfg: ExperimentConfig, threads: int = 1) -> Result:
    p = cfg.params
    sizes, samples, rows = [], [], []
    for L in cfg.model.Ls:
        model = build_model(cfg.model, L)
        chains = run_chain(cfg, model, cfg.seed, threads)
        if cfg.sampler.sampler == "gaussian":  # exact draws are already independent
            mx = np.concatenate([c.max_samples for c in chains])
        else:
            mx = np.concatenate([decorrelate(c.max_samples) for c in chains])
        sizes.append(model.n)
        samples.append(mx)
        rows.extend((L, model.n, k, v) for k, v in enumerate(mx))
    norm = p.get("normalization", "log")
    rep = max_scaling(sizes, samples, norm, beta=p.get("beta", 2.0), D=p.get("D"), alpha=p.get("alpha"))
    return Result(rep.to_dict(), {"maxima.csv": csv_text(["L", "n", "index", "max_abs_phi"], rows)})


def run_variance_growth(cfg: ExperimentConfig, threads: int = 1) -> Result:
    rows, var = [], []
    for L in cfg.model.Ls:
        model = build_model(cfg.model, L)
        if cfg.sampler.sampler == "gaussian":
            c = float(cfg.potential.get("c", 1.0)) if cfg.potential else 1.0
            xi = np.where(model.active, c**-0.5, 1.0)
            v, se = variance(assemble_precision(model, xi, method=cfg.sampler.solver), model.origin_index), 0.0
        else:
            chains = run_chain(cfg, model, cfg.seed, threads)
            x = _pooled_probe(chains)
            v = float(np.mean(x**2))
            tau = max(integrated_autocorr(c.probe_samples**2) for c in chains)
            se = float(np.std(x**2, ddof=1) * math.sqrt(tau / len(x)))
        var.append(v)
        rows.append((L, model.n, v, se))
    rep = variance_growth(cfg.model.Ls, var)
    return Result(rep.to_dict(), {"variance.csv": csv_text(["L", "n", "variance", "se"], rows)})


RUNNERS = {
    "decompose": run_decompose,
    "sample": run_sample,
    "resistance-profile": run_resistance_profile,
    "percolate": run_percolate,
    "verify-inequalities": run_verify_inequalities,
    "tails": run_tails,
    "max-scaling": run_max_scaling,
    "variance-growth": run_variance_growth,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> Result:
    return RUNNERS[cfg.kind](cfg, threads)


def default_config(kind: str) -> ExperimentConfig:
    """Small built-in configuration for each kind; runs in seconds."""
    from .config import SamplerSpec

    pareto = {"kind": "shifted-pareto", "alpha": 3.0, "eps": 1.0}
    if kind == "decompose":
        return ExperimentConfig(kind, potential={"name": "splice", "alpha": 3.0, "eps": 1.0}, mixture=pareto)
    if kind == "sample":
        return ExperimentConfig(kind, model=ModelSpec(d=2, Ls=[3]), mixture=pareto,
                                sampler=SamplerSpec(sweeps=2000, burn_in=200))
    if kind == "resistance-profile":
        return ExperimentConfig(kind, model=ModelSpec(d=3, Ls=[2, 4]), mixture=pareto, params={"seeds": 4})
    if kind == "percolate":
        return ExperimentConfig(kind, model=ModelSpec(d=2, Ls=[16, 32]), params={"p": [0.4, 0.5, 0.6], "samples": 5})
    if kind == "verify-inequalities":
        return ExperimentConfig(kind, params={"det_trials": 10_000})
    if kind == "tails":
        return ExperimentConfig(kind, model=ModelSpec(graph="star", Ls=[1]), mixture=pareto,
                                sampler=SamplerSpec(sweeps=20_000, burn_in=100))
    if kind == "max-scaling":
        return ExperimentConfig(kind, model=ModelSpec(d=2, Ls=[4, 8, 16]), potential={"name": "quadratic", "c": 1.0},
                                sampler=SamplerSpec(sampler="gaussian", sweeps=200, burn_in=0))
    if kind == "variance-growth":
        return ExperimentConfig(kind, model=ModelSpec(d=2, Ls=[8, 16, 32, 64]), potential={"name": "quadratic", "c": 1.0},
                                sampler=SamplerSpec(sampler="gaussian", sweeps=1, burn_in=0))
    raise ValueError(f"unknown kind {kind!r}")
