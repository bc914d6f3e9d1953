import json
import subprocess
import sys

import pytest

from gradphi.cli import main
from gradphi.config import dumps
from gradphi.experiments import default_config


def _small_tails(tmp_path, seed=0):
    cfg = default_config("tails")
    cfg.model.graph, cfg.model.Ls = "star", [1]
    cfg.sampler.sweeps, cfg.sampler.burn_in = 12_000, 50
    cfg.seed = seed
    p = tmp_path / f"tails{seed}.toml"
    p.write_text(dumps(cfg), encoding="utf-8")
    return p


def test_run_tails_reproducible(tmp_path):
    cfg = _small_tails(tmp_path)
    assert main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(cfg), "--out", str(tmp_path / "b")]) == 0
    for name in ("survival.csv", "samples.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    res = json.loads((tmp_path / "a" / "results.json").read_text())
    assert "exponent" in json.dumps(res)
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["kind"] == "tails" and set(man["files"]) == {"survival.csv", "samples.csv"}
    assert main(["run", str(cfg), "--seed", "1", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a" / "samples.csv").read_bytes() != (tmp_path / "c" / "samples.csv").read_bytes()


def test_verify_inequalities_ledger(tmp_path):
    cfg = default_config("verify-inequalities")
    cfg.params = {"det_trials": 200}
    p = tmp_path / "v.toml"
    p.write_text(dumps(cfg), encoding="utf-8")
    assert main(["run", str(p), "--out", str(tmp_path / "v")]) == 0
    rows = (tmp_path / "v" / "checks.csv").read_text().splitlines()
    assert rows[0] == "check,instance,trials,violations,worst_margin"
    body = [r.split(",") for r in rows[1:]]
    assert all(int(r[3]) == 0 for r in body if not r[0].startswith("control:"))
    assert all(int(r[3]) > 0 for r in body if r[0].startswith("control:"))


def test_negative_alpha_exit_2(tmp_path, capsys):
    text = dumps(default_config("tails")).replace("alpha = 3.0", "alpha = -3.0")
    p = tmp_path / "bad.toml"
    p.write_text(text, encoding="utf-8")
    assert main(["run", str(p)]) == 2
    assert "mixture.alpha" in capsys.readouterr().err


def test_kind_mismatch_and_missing_file(tmp_path):
    p = tmp_path / "t.toml"
    p.write_text(dumps(default_config("tails")), encoding="utf-8")
    assert main(["sample", str(p)]) == 2
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    assert main(["tails", "--threads", "0"]) == 2


def test_numerical_failure_exit_3(tmp_path):
    cfg = default_config("decompose")
    cfg.potential = {"name": "quadratic", "c": 0.01}
    p = tmp_path / "d.toml"
    p.write_text(dumps(cfg), encoding="utf-8")
    out = tmp_path / "d"
    assert main(["run", str(p), "--out", str(out)]) == 3
    assert not out.exists()


def test_dry_run_writes_nothing(tmp_path):
    assert main(["percolate", "--dry-run", "--out", str(tmp_path / "x")]) == 0
    assert not (tmp_path / "x").exists()


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv("GRADPHI_OUT", str(tmp_path / "env"))
    assert main(["decompose"]) == 0
    assert (tmp_path / "env" / "decomposition.csv").read_text().startswith("x,U,V,W,dW")


def test_list_corpus(capsys):
    assert main(["list-corpus"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum(line.startswith("small-mixture") for line in lines) == 20


@pytest.mark.parametrize("kind", ["resistance-profile", "percolate", "variance-growth"])
def test_default_subcommands(kind, tmp_path):
    assert main([kind, "--out", str(tmp_path / kind)]) == 0


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "gradphi.cli", "list-corpus"], capture_output=True, text=True)
    assert r.returncode == 0 and "splice(α,ε)" in r.stdout
