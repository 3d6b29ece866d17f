"""Command line entry point ``fractorsion``.

Every subcommand reads a JSON run config (``--config``), validates it
completely before solving anything, stages its outputs in memory and then
writes them atomically into ``--out`` together with ``manifest.json``.

Exit codes: 0 success, 1 runtime error, 2 an inequality check failed,
64 usage error, 65 invalid config.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .energy import GridFunction
from .errors import BadExponent, ConfigError, FractorsionError
from .geometry import LatticeSpec, domain_from_json, rasterize
from .kernel import PAIR_RULES, FracParams, default_cache_dir
from .solve import SolverConfig

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 64, 65

CSV_SCHEMAS = {
    "trace.csv": {"version": 1, "columns": ["r", "linf", "l1"]},
    "levels.csv": {"version": 1, "columns": ["k", "measure", "eps"]},
    "explore.csv": {"version": 1, "columns": None},  # filled from ExperimentRecord
}

FAMILY_KINDS = ("interval", "list")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# Config handling
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Validated payload of one CLI run."""

    raw: dict
    params: FracParams | None = None
    lattice: LatticeSpec | None = None
    domain: object = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    q: list = field(default_factory=list)
    family: list = field(default_factory=list)

    def digest(self) -> str:
        return hashlib.sha256(_canonical(self.raw)).hexdigest()


def _np_default(obj):
    if isinstance(obj, (np.generic, np.ndarray)):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serialisable")


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True, default=_np_default).encode()


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    return obj


def _need(raw, key):
    if key not in raw:
        raise ConfigError(f"config is missing {key!r}")
    return raw[key]


def _validate(raw: dict, need_domain: bool, need_params: bool) -> RunConfig:
    """Build and check every object the run needs; raises ConfigError."""
    try:
        cfg = RunConfig(raw)
        if need_params or "s" in raw or "p" in raw:
            cfg.params = FracParams(_need(raw, "s"), _need(raw, "p"))
        cfg.solver = SolverConfig.from_json(raw.get("solver"))
        qs = raw.get("q", [])
        cfg.q = [float(x) for x in (qs if isinstance(qs, list) else [qs])]
        for q in cfg.q:
            if not q >= 1:
                raise BadExponent(f"q must be >= 1, got {q}")
        if raw.get("pair_rule", "midpoint") not in PAIR_RULES:
            raise ConfigError(f"pair_rule must be one of {PAIR_RULES}")
        if need_domain:
            cfg.lattice = LatticeSpec.from_json(_need(raw, "lattice"))
            cfg.domain = domain_from_json(_need(raw, "domain"))
            rasterize(cfg.domain, cfg.lattice)
        return cfg
    except ConfigError:
        raise
    except (FractorsionError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


# --------------------------------------------------------------------------
# Output staging
# --------------------------------------------------------------------------


class Outputs:
    """Payloads collected in memory, written atomically at the end."""

    def __init__(self):
        self.files: dict[str, bytes] = {}

    def json(self, name, obj):
        self.files[name] = json.dumps(obj, sort_keys=True, indent=1, allow_nan=True, default=_np_default).encode() + b"\n"

    def jsonl(self, name, objs):
        self.files[name] = b"".join(_canonical(o) + b"\n" for o in objs)

    def csv(self, name, header, rows):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
        self.files[name] = buf.getvalue().encode()

    def npy(self, name, arr):
        buf = io.BytesIO()
        np.save(buf, np.ascontiguousarray(arr))
        self.files[name] = buf.getvalue()


def _atomic_write(path: Path, data: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _versions() -> dict:
    import scipy

    return {
        "fractorsion": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def _cmd_torsion(cfg: RunConfig, args, out: Outputs) -> int:
    from .torsion import level_set_profile, torsion_function, torsional_rigidity

    res = torsion_function(
        cfg.domain,
        cfg.lattice,
        cfg.params,
        cfg.solver,
        cfg.raw.get("radii"),
        center=cfg.raw.get("center"),
        cache_dir=args.cache_dir,
        pair_rule=cfg.raw.get("pair_rule", "midpoint"),
    )
    payload = res.to_json()
    payload["rigidity_certified"] = torsional_rigidity(res)
    out.json("torsion.json", payload)
    out.npy("w.npy", res.w.values)
    out.npy("cells.npy", res.domain.cells)
    out.csv("trace.csv", CSV_SCHEMAS["trace.csv"]["columns"], res.exhaustion_trace)
    prof = level_set_profile(res)
    out.csv("levels.csv", CSV_SCHEMAS["levels.csv"]["columns"], prof.rows())
    return EXIT_OK


def _cmd_lambda(cfg: RunConfig, args, out: Outputs) -> int:
    from .kernel import assemble_kernel
    from .solve import eigen_oracle, minimize_rayleigh

    if not cfg.q:
        raise ConfigError("lambda needs at least one q")
    d = rasterize(cfg.domain, cfg.lattice)
    kt = assemble_kernel(d, cfg.params, pair_rule=cfg.raw.get("pair_rule", "midpoint"), cache_dir=args.cache_dir)
    rows = []
    for q in cfg.q:
        res = minimize_rayleigh(kt, q, cfg.solver)
        row = {"q": q, "rayleigh": res.to_json()}
        if cfg.params.p == 2.0 and q == 2.0 and cfg.raw.get("oracle", True):
            eig = eigen_oracle(kt)
            row["eigen_oracle"] = {"lambda": eig.lambda_, "residual": eig.residual}
        rows.append(row)
    out.json("lambda.json", {"params": cfg.params.to_json(), "cells": d.size, "results": rows})
    return EXIT_OK


def _cmd_hardy(cfg: RunConfig, args, out: Outputs) -> int:
    from .inequalities import hardy_check, hardy_remainder_measure
    from .torsion import torsion_function

    samples = int(cfg.raw.get("samples", 100))
    if samples < 1:
        raise ConfigError("samples must be positive")
    res = torsion_function(cfg.domain, cfg.lattice, cfg.params, cfg.solver, cache_dir=args.cache_dir)
    rng = np.random.default_rng(args.seed)
    us = [GridFunction(res.domain, rng.standard_normal(res.domain.size)) for _ in range(samples)]
    reports = [hardy_check(res, u, res.kernel) for u in us]
    lines = [dict(r.to_json(), sample=i) for i, r in enumerate(reports)]
    failed = sum(not r.passed for r in reports)
    summary = {"samples": samples, "failures": failed, "max_ratio": max(r.ratio for r in reports)}
    if cfg.raw.get("remainder", False):
        summary["remainder"] = hardy_remainder_measure(res, us, res.kernel).to_json()
    out.jsonl("hardy.jsonl", lines)
    out.json("hardy_summary.json", summary)
    return EXIT_FAIL if failed else EXIT_OK


def _cmd_gn(cfg: RunConfig, args, out: Outputs) -> int:
    from .inequalities import gn_study

    raw = cfg.raw
    if len(cfg.q) != 1:
        raise ConfigError("gn needs exactly one q")
    kwargs = {k: raw[k] for k in ("h", "dilation") if k in raw}
    if "widths" in raw:
        kwargs["widths"] = tuple(raw["widths"])
    st = gn_study(cfg.params, int(_need(raw, "dim")), cfg.q[0], float(_need(raw, "r")), cache_dir=args.cache_dir, **kwargs)
    out.json("gn.json", st.to_json())
    return EXIT_OK if st.passed else EXIT_FAIL


def _cmd_fuzz(cfg: RunConfig, args, out: Outputs) -> int:
    from .inequalities import scalar_picone_fuzz, scalar_power_inequality_fuzz

    raw = cfg.raw
    ps = args.p if args.p else raw.get("p", [1.5])
    ps = [float(x) for x in (ps if isinstance(ps, list) else [ps])]
    betas = args.beta if args.beta else raw.get("beta", [1.0, 2.0, 5.0])
    betas = [float(x) for x in (betas if isinstance(betas, list) else [betas])]
    samples = int(args.samples or raw.get("samples", 10**6))
    if samples < 1 or any(not p > 1 for p in ps) or any(not b >= 1 for b in betas):
        raise ConfigError("need samples >= 1, p > 1 and beta >= 1")
    reports = []
    for p in ps:
        reports.append(scalar_picone_fuzz(p, samples, args.seed))
        for beta in betas:
            reports.append(scalar_power_inequality_fuzz(p, beta, samples, args.seed))
    out.jsonl("fuzz.jsonl", [r.to_json() for r in reports])
    out.json("fuzz_summary.json", {"points": len(reports), "failed": [r.to_json()["extra"] for r in reports if not r.passed]})
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _family(raw) -> list:
    fam = _need(raw, "family")
    kind = fam.get("kind")
    if kind == "interval":
        from .inequalities import interval_family

        return interval_family(fam["lengths"], float(fam.get("h", 1 / 32)))
    if kind == "list":
        return [
            (float(m["param"]), domain_from_json(m["domain"]), LatticeSpec.from_json(m["lattice"]))
            for m in fam["members"]
        ]
    raise ConfigError(f"family kind must be one of {FAMILY_KINDS}")


def _cmd_explore(cfg: RunConfig, args, out: Outputs) -> int:
    from .inequalities import ExperimentRecord, equivalence_explorer

    if not cfg.q:
        raise ConfigError("explore needs a q list")
    ex = equivalence_explorer(cfg.family, cfg.params, cfg.q, cfg.solver, cache_dir=args.cache_dir)
    out.csv("explore.csv", ExperimentRecord.CSV_COLUMNS, (r.row() for r in ex.records))
    out.json("explore_summary.json", {"spearman": {str(k): v for k, v in ex.spearman.items()}, "passed": ex.passed})
    return EXIT_FAIL if ex.passed is False else EXIT_OK


def _cmd_cache(args) -> int:
    root = Path(args.cache_dir)
    entries = sorted(p for p in root.glob("*.ftkt") if not p.name.startswith(".")) if root.is_dir() else []
    if args.action == "stat":
        info = {
            "cache_dir": str(root),
            "entries": len(entries),
            "bytes": sum(p.stat().st_size for p in entries),
        }
        print(json.dumps(info, sort_keys=True))
        return EXIT_OK
    cutoff = time.time() - 86400.0 * args.older_than if args.older_than is not None else math.inf
    removed = 0
    for path in entries:
        if args.all or path.stat().st_mtime < cutoff:
            path.unlink(missing_ok=True)
            Path(str(path) + ".lock").unlink(missing_ok=True)
            removed += 1
    # stray temporary files from interrupted writers
    for tmp in root.glob(".tmp-*.ftkt") if root.is_dir() else []:
        tmp.unlink(missing_ok=True)
    print(json.dumps({"removed": removed}, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "torsion": (_cmd_torsion, True),
    "lambda": (_cmd_lambda, True),
    "hardy": (_cmd_hardy, True),
    "gn": (_cmd_gn, False),
    "scalar-fuzz": (_cmd_fuzz, False),
    "explore": (_cmd_explore, False),
}


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--cache-dir", help="kernel cache directory (env FRACTORSION_CACHE)")
    common.add_argument("--threads", type=int, default=None, help="BLAS threads (default: all cores)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="fractorsion-out", help="output directory")

    parser = _Parser(
        prog="fractorsion",
        description="Discrete fractional (s,p) torsion functions and inequality checks.",
        epilog=(
            "CSV outputs: trace.csv (r, linf, l1) per exhaustion radius; "
            "levels.csv (k, measure, eps) with measure = |{w > k}| and eps(k) = int_k^inf |{w > t}| dt; "
            "explore.csv one ExperimentRecord per (domain, q). Schema versions are in manifest.json."
        ),
    )
    parser.add_argument("--version", action="version", version=f"fractorsion {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("torsion", "torsion function by exhaustion: torsion.json, w.npy, cells.npy, trace.csv, levels.csv"),
        ("lambda", "Rayleigh minimisation for each q (eigen oracle when p = q = 2): lambda.json"),
        ("hardy", "torsional Hardy inequality on seeded random u: hardy.jsonl, hardy_summary.json"),
        ("gn", "Gagliardo-Nirenberg constants over the test family: gn.json"),
        ("explore", "lambda / torsion-norm campaign over a domain family: explore.csv"),
    ):
        sub.add_parser(name, parents=[common], help=help_)
    fz = sub.add_parser("scalar-fuzz", parents=[common], help="fuzz the scalar Picone and power inequalities")
    fz.add_argument("--p", type=float, action="append")
    fz.add_argument("--beta", type=float, action="append")
    fz.add_argument("--samples", type=int)
    cache = sub.add_parser("cache", parents=[common], help="kernel cache maintenance")
    cache.add_argument("action", choices=("gc", "stat"))
    cache.add_argument("--older-than", type=float, default=None, help="gc entries older than DAYS")
    cache.add_argument("--all", action="store_true", help="gc every entry")
    return parser


def run(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(f"fractorsion: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args.cache_dir = args.cache_dir or str(default_cache_dir())
    if args.command == "cache":
        return _cmd_cache(args)

    handler, need_domain = COMMANDS[args.command]
    try:
        raw = _load_config(args.config)
        need_params = args.command != "scalar-fuzz"
        cfg = _validate(raw, need_domain, need_params)
        if args.command == "explore":
            try:
                cfg.family = _family(raw)
            except (KeyError, TypeError, ValueError, FractorsionError) as exc:
                raise ConfigError(f"invalid family: {exc}") from exc
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
    except ConfigError as exc:
        print(f"fractorsion: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from threadpoolctl import threadpool_limits

    threads = args.threads or os.cpu_count() or 1
    out = Outputs()
    started = time.time()
    try:
        with threadpool_limits(limits=threads):
            code = handler(cfg, args, out)
    except ConfigError as exc:
        print(f"fractorsion: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FractorsionError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"fractorsion: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, data in sorted(out.files.items()):
        _atomic_write(outdir / name, data)
    schemas = {k: v for k, v in CSV_SCHEMAS.items() if k in out.files}
    if "explore.csv" in schemas:
        from .inequalities import ExperimentRecord

        schemas["explore.csv"] = {"version": 1, "columns": list(ExperimentRecord.CSV_COLUMNS)}
    manifest = {
        "command": args.command,
        "config": args.config,
        "inputs_hash": cfg.digest(),
        "versions": _versions(),
        "seed": args.seed,
        "threads": threads,
        "started_at": started,
        "wall_time": time.time() - started,
        "exit_code": code,
        "outputs": {name: hashlib.sha256(data).hexdigest() for name, data in sorted(out.files.items())},
        "csv_schemas": schemas,
    }
    _atomic_write(outdir / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1).encode() + b"\n")
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
