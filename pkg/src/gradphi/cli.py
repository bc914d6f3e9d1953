"""Command-line runner: ``gradphi run CONFIG``, one subcommand per experiment kind, and ``list-corpus``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import shutil
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from .config import KINDS, ConfigError, ExperimentConfig, load, validate
from .corpus import registry
from .experiments import default_config, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
OUT_ENV = "GRADPHI_OUT"
NUMERICAL_ERRORS = (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError)


def _versions() -> dict:
    from importlib.metadata import PackageNotFoundError, version

    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__, "artifact": pkg}


def _out_dir(cfg: ExperimentConfig, flag: str | None) -> Path:
    base = flag or cfg.out or os.environ.get(OUT_ENV) or "results"
    return Path(base)


def write_outputs(out: Path, cfg: ExperimentConfig, result, wall: float) -> None:
    """Write every file into a sibling temporary directory, then move it into place.

    On any failure the temporary directory is removed and ``out`` is untouched.
    """
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=out.parent))
    try:
        hashes = {}
        for name, text in sorted(result.files.items()):
            (tmp / name).write_text(text, encoding="utf-8")
            hashes[name] = hashlib.sha256(text.encode()).hexdigest()
        summary = json.dumps(result.summary, indent=2, sort_keys=True, default=_json_default)
        (tmp / "results.json").write_text(summary + "\n", encoding="utf-8")
        (tmp / "config.toml").write_text(cfg.to_toml(), encoding="utf-8")
        manifest = {
            "kind": cfg.kind,
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "versions": _versions(),
            "wall_time": wall,
            "files": hashes,
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if out.exists():
            for f in tmp.iterdir():
                os.replace(f, out / f.name)
            tmp.rmdir()
        else:
            os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def execute(cfg: ExperimentConfig, out: str | None = None, threads: int = 1, dry_run: bool = False) -> int:
    try:
        validate(cfg)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if dry_run:
        print(f"{cfg.kind}: configuration valid (hash {cfg.hash()[:16]})")
        return EXIT_OK
    dest = _out_dir(cfg, out)
    t0 = time.perf_counter()
    try:
        result = run_experiment(cfg, threads)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    write_outputs(dest, cfg, result, time.perf_counter() - t0)
    print(f"{cfg.kind}: wrote {dest}")
    return EXIT_OK


def _load(path: str) -> ExperimentConfig:
    return load(path)


def list_corpus() -> int:
    for name, kind, statement in registry():
        print(f"{kind:14s} {name:22s} {statement}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configuration seed")
    common.add_argument("--out", default=None, help=f"output directory (default: config, then ${OUT_ENV}, then ./results)")
    common.add_argument("--threads", type=int, default=1, help="replica-level worker threads")
    common.add_argument("--dry-run", action="store_true", help="validate the configuration only")
    p = argparse.ArgumentParser(prog="gradphi", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run the experiment named in a TOML configuration")
    r.add_argument("config")
    sub.add_parser("list-corpus", help="print built-in potentials, mixtures and small mixtures")
    for kind in KINDS:
        k = sub.add_parser(kind, parents=[common], help=f"run a {kind} experiment (built-in defaults without CONFIG)")
        k.add_argument("config", nargs="?")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-corpus":
        return list_corpus()
    try:
        if args.command == "run":
            cfg = _load(args.config)
        elif args.config:
            cfg = _load(args.config)
            if cfg.kind != args.command:
                raise ConfigError("kind", f"configuration is for {cfg.kind}, not {args.command}")
        else:
            cfg = default_config(args.command)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("invalid configuration: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return execute(cfg, args.out, args.threads, args.dry_run)


if __name__ == "__main__":
    sys.exit(main())
