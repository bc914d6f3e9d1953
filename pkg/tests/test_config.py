import copy
import random

import pytest
import tomlkit
from hypothesis import given, settings
from hypothesis import strategies as st

from gradphi.config import KINDS, ConfigError, ExperimentConfig, dumps, from_dict, load, loads
from gradphi.experiments import default_config


@pytest.mark.parametrize("kind", KINDS)
def test_default_configs_round_trip(kind):
    cfg = default_config(kind)
    text = dumps(cfg)
    again = loads(text)
    assert again == cfg
    assert dumps(again) == text


def test_shipped_configs_load(tmp_path):
    from pathlib import Path

    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.toml")):
        cfg = load(path)
        assert dumps(cfg) == path.read_text(encoding="utf-8"), path.name


def test_hash_ignores_out():
    cfg = default_config("tails")
    other = copy.deepcopy(cfg)
    other.out = "elsewhere"
    assert cfg.hash() == other.hash()
    other.seed = 1
    assert cfg.hash() != other.hash()


def test_error_names_field():
    text = dumps(default_config("tails")).replace("alpha = 3.0", "alpha = -3.0")
    with pytest.raises(ConfigError) as e:
        loads(text)
    assert e.value.field == "mixture.alpha"


@pytest.mark.parametrize(
    "patch,field",
    [
        ({"kind": "nope"}, "kind"),
        ({"seed": -1}, "seed"),
        ({"model": {"Ls": []}}, "model.Ls"),
        ({"model": {"degree": 2}}, "model.degree"),
        ({"sampler": {"sweeps": 0}}, "sampler.sweeps"),
        ({"sampler": {"phi_update": "x"}}, "sampler.phi_update"),
        ({"mixture": {"kind": "tilted-stable", "beta": 2.0, "K": 1.0}}, "mixture.beta"),
        ({"params": {"bogus": 1}}, "params.bogus"),
        ({"extra": 1}, "extra"),
    ],
)
def test_specific_errors(patch, field):
    d = default_config("tails").to_dict()
    for k, v in patch.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict) and k != "mixture":
            d[k] = {**d[k], **v}
        else:
            d[k] = v
    with pytest.raises(ConfigError) as e:
        from_dict(d)
    assert e.value.field == field


def test_unparseable_toml():
    with pytest.raises(ConfigError):
        loads("kind = [")


JUNK = [None, -1, 0, 1.5, -2.5, float("nan"), float("inf"), "", "x", True, [], [0], [-1, 2], {}, {"a": 1}, 10**12]


def _paths(d, prefix=()):
    for k, v in d.items():
        yield prefix + (k,)
        if isinstance(v, dict):
            yield from _paths(v, prefix + (k,))


def test_fuzzed_configs_raise_only_config_errors():
    rng = random.Random(0)
    bases = [default_config(k).to_dict() for k in KINDS]
    outcomes = {"ok": 0, "error": 0}
    for _ in range(1000):
        d = copy.deepcopy(rng.choice(bases))
        for _ in range(rng.randint(1, 3)):
            path = rng.choice(list(_paths(d)))
            node = d
            for k in path[:-1]:
                node = node[k]
            action = rng.random()
            if action < 0.15:
                del node[path[-1]]
            elif action < 0.25:
                node["unknown_" + str(rng.randint(0, 9))] = rng.choice(JUNK)
            else:
                node[path[-1]] = copy.deepcopy(rng.choice(JUNK))
        try:
            from_dict(d)
            outcomes["ok"] += 1
        except ConfigError:
            outcomes["error"] += 1
    assert outcomes["error"] > 900


@settings(max_examples=50, deadline=None)
@given(text=st.text(max_size=200))
def test_arbitrary_text_raises_config_error(text):
    try:
        loads(text)
    except ConfigError:
        pass


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), sweeps=st.integers(1, 10**6), Ls=st.lists(st.integers(1, 64), min_size=1, max_size=5))
def test_valid_round_trip_property(seed, sweeps, Ls):
    cfg = default_config("sample")
    cfg.seed, cfg.sampler.sweeps, cfg.model.Ls = seed, sweeps, Ls
    assert loads(dumps(cfg)) == cfg
    assert isinstance(tomlkit.parse(dumps(cfg)), dict)
    assert isinstance(cfg, ExperimentConfig)
