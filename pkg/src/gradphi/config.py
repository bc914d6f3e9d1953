"""Experiment configuration: dataclasses, validation and canonical TOML."""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields

import tomlkit

KINDS = (
    "decompose",
    "sample",
    "resistance-profile",
    "percolate",
    "verify-inequalities",
    "tails",
    "max-scaling",
    "variance-growth",
)
GRAPHS = ("lattice", "star", "path", "tree")
BOUNDARIES = ("wired", "free-pinned", "torus")
SAMPLERS = ("mixture-exact", "splice", "metropolis", "gaussian")
PHI_UPDATES = ("block", "local")
SOLVERS = ("auto", "direct", "cg-amg", "cg-jacobi")

# accepted keys of the free-form tables, with their checks
MIXTURE_KEYS = {
    "shifted-pareto": {"alpha": "pos", "eps": "pos", "A": "pos"},
    "tilted-stable": {"beta": "beta_open", "K": "pos"},
    "two-point": {"k1": "pos", "k2": "pos", "w": "unit"},
}
POTENTIAL_KEYS = {
    "quadratic": {"c": "pos"},
    "splice": {"alpha": "pos", "eps": "pos"},
    "eps-splice": {"eps": "pos"},
    "poly-splice": {"beta": "beta", "eps": "pos", "K": "pos"},
    "power-growth": {"beta": "beta", "K": "pos"},
}
PARAM_KEYS = {
    "grid_lo": "pos",
    "grid_hi": "pos",
    "grid_n": "count",
    "seeds": "count",
    "cutoff": "pos",
    "p": "unit_list",
    "samples": "count",
    "det_trials": "count",
    "normalization": "norm",
    "beta": "beta",
    "alpha": "pos",
    "D": "count",
    "upper": "unit",
    "form": "form",
    "tail": "tail",
    "probe_offset": "int_list",
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class ModelSpec:
    graph: str = "lattice"
    d: int = 3
    Ls: list = field(default_factory=lambda: [4])
    boundary: str = "wired"
    j: int = 1
    degree: int = 3


@dataclass
class SamplerSpec:
    sampler: str = "mixture-exact"
    sweeps: int = 1000
    burn_in: int = 100
    thin: int = 1
    replicas: int = 1
    phi_update: str = "block"
    step_scale: float = 1.0
    solver: str = "auto"


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    out: str = ""
    model: ModelSpec = field(default_factory=ModelSpec)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    potential: dict = field(default_factory=dict)
    mixture: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        validate(self)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_toml(self) -> str:
        return dumps(self)

    def hash(self) -> str:
        """SHA-256 of the canonical TOML with ``out`` blanked (the output location is not part of the experiment)."""
        c = ExperimentConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        c.out = ""
        return hashlib.sha256(dumps(c).encode()).hexdigest()


# --- validation ----------------------------------------------------------------------------


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return (_is_int(x) or isinstance(x, float)) and math.isfinite(x)


def _int(name, x, lo=None, hi=None):
    if not _is_int(x):
        raise ConfigError(name, f"expected an integer, got {x!r}")
    if (lo is not None and x < lo) or (hi is not None and x > hi):
        raise ConfigError(name, f"{x} outside [{lo}, {hi}]")


def _choice(name, x, options):
    if not isinstance(x, str) or x not in options:
        raise ConfigError(name, f"{x!r} not one of {', '.join(options)}")


def _check(name, rule, x):
    if rule == "pos":
        if not _is_num(x) or x <= 0:
            raise ConfigError(name, f"expected a positive number, got {x!r}")
    elif rule == "unit":
        if not _is_num(x) or not 0 < x < 1:
            raise ConfigError(name, f"expected a number in (0, 1), got {x!r}")
    elif rule == "beta":
        if not _is_num(x) or not 0 < x <= 2:
            raise ConfigError(name, f"expected a number in (0, 2], got {x!r}")
    elif rule == "beta_open":
        if not _is_num(x) or not 0 < x < 2:
            raise ConfigError(name, f"expected a number in (0, 2), got {x!r}")
    elif rule == "count":
        _int(name, x, 1)
    elif rule == "unit_list":
        if not isinstance(x, list) or not x:
            raise ConfigError(name, "expected a non-empty list")
        for i, v in enumerate(x):
            if not _is_num(v) or not 0 <= v <= 1:
                raise ConfigError(f"{name}[{i}]", f"expected a number in [0, 1], got {v!r}")
    elif rule == "int_list":
        if not isinstance(x, list):
            raise ConfigError(name, "expected a list of integers")
        for i, v in enumerate(x):
            _int(f"{name}[{i}]", v)
    elif rule == "norm":
        _choice(name, x, ("log", "power"))
    elif rule == "form":
        _choice(name, x, ("density", "survival"))
    elif rule == "tail":
        _choice(name, x, ("power", "stretched", "both"))
    else:  # pragma: no cover
        raise AssertionError(rule)


def _table(name, table, spec, key_field):
    if not isinstance(table, dict):
        raise ConfigError(name, "expected a table")
    if not table:
        return
    kind = table.get(key_field)
    if not isinstance(kind, str) or kind not in spec:
        raise ConfigError(f"{name}.{key_field}", f"{kind!r} not one of {', '.join(spec)}")
    for k, v in table.items():
        if k == key_field:
            continue
        if k not in spec[kind]:
            raise ConfigError(f"{name}.{k}", f"unknown key for {kind}")
        _check(f"{name}.{k}", spec[kind][k], v)


def _require(name, table, keys):
    for k in keys:
        if k not in table:
            raise ConfigError(f"{name}.{k}", "missing")


def validate(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` naming the first invalid field."""
    _choice("kind", cfg.kind, KINDS)
    _int("seed", cfg.seed, 0, 2**63 - 1)
    if not isinstance(cfg.out, str):
        raise ConfigError("out", "expected a string")
    m = cfg.model
    if not isinstance(m, ModelSpec):
        raise ConfigError("model", "expected a table")
    _choice("model.graph", m.graph, GRAPHS)
    _int("model.d", m.d, 1, 6)
    if not isinstance(m.Ls, list) or not m.Ls:
        raise ConfigError("model.Ls", "expected a non-empty list")
    for i, L in enumerate(m.Ls):
        _int(f"model.Ls[{i}]", L, 0 if m.graph == "lattice" else 1, 512)
    _choice("model.boundary", m.boundary, BOUNDARIES)
    _int("model.j", m.j, 1, 4)
    _int("model.degree", m.degree, 3, 16)
    s = cfg.sampler
    if not isinstance(s, SamplerSpec):
        raise ConfigError("sampler", "expected a table")
    _choice("sampler.sampler", s.sampler, SAMPLERS)
    _int("sampler.sweeps", s.sweeps, 1, 10**9)
    _int("sampler.burn_in", s.burn_in, 0, 10**9)
    _int("sampler.thin", s.thin, 1, 10**6)
    _int("sampler.replicas", s.replicas, 1, 10**4)
    _choice("sampler.phi_update", s.phi_update, PHI_UPDATES)
    _check("sampler.step_scale", "pos", s.step_scale)
    _choice("sampler.solver", s.solver, SOLVERS)
    _table("mixture", cfg.mixture, MIXTURE_KEYS, "kind")
    _table("potential", cfg.potential, POTENTIAL_KEYS, "name")
    if not isinstance(cfg.params, dict):
        raise ConfigError("params", "expected a table")
    for k, v in cfg.params.items():
        if k not in PARAM_KEYS:
            raise ConfigError(f"params.{k}", "unknown parameter")
        _check(f"params.{k}", PARAM_KEYS[k], v)
    mix, pot = cfg.mixture, cfg.potential
    if mix.get("kind") == "shifted-pareto":
        if "eps" not in mix and "A" not in mix:
            raise ConfigError("mixture.eps", "missing (or give A)")
        _require("mixture", mix, ["alpha"])
    elif mix.get("kind") == "tilted-stable":
        _require("mixture", mix, ["beta", "K"])
    elif mix.get("kind") == "two-point":
        _require("mixture", mix, ["k1", "k2"])
        if mix["k1"] >= mix["k2"]:
            raise ConfigError("mixture.k2", "must exceed k1")
    name = pot.get("name")
    if name == "splice":
        _require("potential", pot, ["alpha", "eps"])
    elif name == "eps-splice":
        _require("potential", pot, ["eps"])
    elif name == "poly-splice" and "eps" not in pot:
        _require("potential", pot, ["beta", "K"])
    elif name == "poly-splice":
        _require("potential", pot, ["beta"])
    elif name == "power-growth":
        _require("potential", pot, ["beta", "K"])
    needs_mixture = {"decompose", "resistance-profile"}
    if cfg.kind in needs_mixture and not mix:
        raise ConfigError("mixture", f"required for {cfg.kind}")
    if cfg.kind == "decompose" and not pot:
        raise ConfigError("potential", "required for decompose")
    if cfg.kind in ("sample", "tails", "max-scaling", "variance-growth"):
        if s.sampler in ("splice", "metropolis") and not pot:
            raise ConfigError("potential", f"required for sampler {s.sampler}")
        if s.sampler in ("mixture-exact", "splice") and not mix:
            raise ConfigError("mixture", f"required for sampler {s.sampler}")
    if cfg.kind == "max-scaling" and len(m.Ls) < 3:
        raise ConfigError("model.Ls", "max-scaling needs at least three sizes")
    if cfg.kind == "variance-growth" and len(m.Ls) < 4:
        raise ConfigError("model.Ls", "variance-growth needs at least four sizes")
    if cfg.kind == "percolate" and not (m.graph == "lattice" or m.graph == "tree"):
        raise ConfigError("model.graph", "percolate needs a lattice or tree")
    if m.graph == "lattice" and m.boundary == "torus" and any(L < 1 for L in m.Ls):
        raise ConfigError("model.Ls", "torus needs L >= 1")


# --- TOML ----------------------------------------------------------------------------------


def _plain(x):
    """tomlkit items to plain Python values."""
    if hasattr(x, "unwrap"):
        return x.unwrap()
    return x


def from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    unknown = set(data) - {f.name for f in fields(ExperimentConfig)}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    if "kind" not in data:
        raise ConfigError("kind", "missing")
    sub = {}
    for name, cls in (("model", ModelSpec), ("sampler", SamplerSpec)):
        t = data.pop(name, {})
        if not isinstance(t, dict):
            raise ConfigError(name, "expected a table")
        bad = set(t) - {f.name for f in fields(cls)}
        if bad:
            raise ConfigError(f"{name}.{sorted(bad)[0]}", "unknown key")
        sub[name] = cls(**t)
    cfg = ExperimentConfig(**data, **sub)
    validate(cfg)
    return cfg


def loads(text: str) -> ExperimentConfig:
    try:
        doc = tomlkit.parse(text)
    except Exception as exc:
        raise ConfigError("toml", str(exc)) from exc
    return from_dict(_plain(doc))


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dumps(cfg: ExperimentConfig) -> str:
    """Canonical TOML: fixed key order, empty tables omitted."""
    doc = tomlkit.document()
    doc.add("kind", cfg.kind)
    doc.add("seed", cfg.seed)
    doc.add("out", cfg.out)
    for name in ("model", "sampler"):
        t = tomlkit.table()
        for k, v in asdict(getattr(cfg, name)).items():
            t.add(k, v)
        doc.add(name, t)
    for name in ("potential", "mixture", "params"):
        src = getattr(cfg, name)
        if src:
            t = tomlkit.table()
            for k in sorted(src):
                t.add(k, src[k])
            doc.add(name, t)
    return tomlkit.dumps(doc)


__all__ = [
    "KINDS",
    "ConfigError",
    "ModelSpec",
    "SamplerSpec",
    "ExperimentConfig",
    "validate",
    "from_dict",
    "loads",
    "load",
    "dumps",
]
