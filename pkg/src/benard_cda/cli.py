"""Command-line front end: ``benard-cda {run,suite,reference,catalog}``.

Exit codes: 0 success, 2 configuration error, 3 numerical blow-up,
4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from fnmatch import fnmatchcase
from pathlib import Path

from . import __version__
from .config import SECTIONS, _Reader, parse_config, read_pairs
from .errors import BlowUpError, ConfigurationError
from .experiments import (
    VARIABLES,
    ScenarioConfig,
    run_reference,
    run_twin_batch,
    scenario_catalog,
    select,
)
from .grid import GridSpec
from .io import FLOAT_FMT, write_observation_csv, write_rrmse_csv, write_snapshot
from .solver import SolverParams

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_IO = 0, 2, 3, 4
SUMMARY_HEADER = ("scenario", *(f"terminal_{v}" for v in VARIABLES),
                  *(f"beta_{v}" for v in VARIABLES), "seconds", "status")


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    if not os.access(out, os.W_OK | os.X_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


def _hash_bytes(*blobs: bytes) -> str:
    h = hashlib.sha256()
    for b in blobs:
        h.update(b)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, config_hash: str, scenarios: list) -> Path:
    manifest = {
        "tool": "benard-cda",
        "version": __version__,
        "command": command,
        "config_hash": config_hash,
        "output_dir": str(out),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "scenarios": scenarios,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _seeded(config: ScenarioConfig, seed) -> ScenarioConfig:
    if seed is None:
        return config
    return replace(config, noise=replace(config.noise, seed=seed))


def _rel(out: Path, files) -> list:
    return [str(Path(f).relative_to(out)) for f in files]


def _export_twin(result, directory: Path) -> list:
    directory.mkdir(parents=True, exist_ok=True)
    files = [write_rrmse_csv(directory / "rrmse.csv", result.series)]
    for k, (est, ref) in sorted(result.snapshots.items()):
        files += write_snapshot(directory, f"step{k:06d}_estimate", est)
        files += write_snapshot(directory, f"step{k:06d}_reference", ref)
    return files


def _summary_row(name, result=None, seconds=0.0, status="ok"):
    if result is None:
        return [name, *([""] * 6), FLOAT_FMT % seconds, status]
    s = result.series
    beta = [s.fits[v][1] if v in s.fits else float("nan") for v in VARIABLES]
    return [name, *(FLOAT_FMT % s.terminal(v) for v in VARIABLES),
            *(FLOAT_FMT % b for b in beta), FLOAT_FMT % result.seconds, status]


# -- run ----------------------------------------------------------------------

def cmd_run(config_path, out_dir, seed_override=None) -> int:
    config = _seeded(parse_config(config_path), seed_override)
    out = _prepare_out(out_dir)
    t0 = time.perf_counter()
    result = run_twin_batch([config])[0]
    files = _export_twin(result, out)
    seconds = time.perf_counter() - t0
    s = result.series
    entry = {
        "name": config.name, "seconds": round(seconds, 3), "files": _rel(out, files),
        "status": "ok", "digest": config.digest(),
        "terminal": {v: s.terminal(v) for v in VARIABLES},
        "initial": {v: s.initial[v] for v in VARIABLES},
    }
    blob = Path(config_path).read_bytes()
    extra = str(seed_override).encode() if seed_override is not None else b""
    _write_manifest(out, "run", _hash_bytes(blob, extra), [entry])
    print(f"{config.name}: terminal rrmse "
          + " ".join(f"{v}={s.terminal(v):.3e}" for v in VARIABLES)
          + f" ({seconds:.1f} s)")
    return EXIT_OK


# -- reference ----------------------------------------------------------------

def cmd_reference(config_path, out_dir) -> int:
    config = parse_config(config_path)
    out = _prepare_out(out_dir)
    t0 = time.perf_counter()
    traj = run_reference(config)
    files = [write_observation_csv(out / "observations.csv",
                                   (traj.observations[k] for k in sorted(traj.observations)))]
    for k, snap in sorted(traj.snapshots.items()):
        files += write_snapshot(out, f"step{k:06d}_reference", snap.state)
    seconds = time.perf_counter() - t0
    entry = {"name": config.name, "seconds": round(seconds, 3), "files": _rel(out, files),
             "status": "ok", "digest": config.digest()}
    _write_manifest(out, "reference", _hash_bytes(Path(config_path).read_bytes()), [entry])
    print(f"{config.name}: reference written to {out} ({seconds:.1f} s)")
    return EXIT_OK


# -- suite --------------------------------------------------------------------

def _base_from_file(path):
    """Grid, solver parameters and step count for the catalog."""
    try:
        pairs = read_pairs(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc.strerror or exc}") from None
    allowed = set(SECTIONS["solver"]) | set(SECTIONS["grid"])
    for key, (_, line) in pairs.items():
        if key not in allowed:
            raise ConfigurationError("suite base files hold only [solver] and [grid] keys",
                                     key=key, line=line)
    r = _Reader(pairs)
    for key in SECTIONS["solver"]:
        if not r.has(key):
            raise ConfigurationError("mandatory key missing", key=key)
    grid = GridSpec(r.integer("nx", 200), r.integer("ny", 100), r.number("Lx", 2.0),
                    r.number("Ly", 1.0))
    params = SolverParams(r.number("Ra"), r.number("Pr"), r.number("dt"))
    return grid, params, r.integer("nsteps")


def _run_entry(entry_name, members, out_dir):
    """Worker: run one catalog entry (shared reference) and write its files."""
    out = Path(out_dir)
    configs = [c for _, c in members]
    rows, records = [], []
    try:
        results = run_twin_batch(configs)
    except BlowUpError as exc:
        msg = f"blow-up: {exc}"
        for label, c in members:
            rows.append(_summary_row(c.name, status="failed"))
            records.append({"name": c.name, "seconds": 0.0, "files": [], "status": msg})
        return rows, records
    for (label, c), res in zip(members, results):
        files = _export_twin(res, out / entry_name / label)
        rows.append(_summary_row(c.name, res))
        records.append({"name": c.name, "seconds": round(res.seconds, 3),
                        "files": _rel(out, files), "status": "ok", "digest": c.digest()})
    return rows, records


def cmd_suite(pattern, out_dir, jobs=1, config_path=None, seed_override=None) -> int:
    if config_path is not None:
        grid, params, nsteps = _base_from_file(config_path)
        base_blob = Path(config_path).read_bytes()
    else:
        grid, params, nsteps = GridSpec(), SolverParams(), 3000
        base_blob = b""
    if jobs < 1:
        raise ConfigurationError("--jobs must be >= 1", key="jobs")
    entries = select(scenario_catalog(grid, params, nsteps), pattern)
    if not entries:
        raise ConfigurationError(f"no scenarios selected by filter {pattern!r}", key="filter")
    out = _prepare_out(out_dir)
    work = [(e.name, tuple((label, _seeded(c, seed_override)) for label, c in e.members))
            for e in entries]

    if jobs == 1:
        outputs = [_run_entry(name, members, out) for name, members in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_entry, name, members, str(out)) for name, members in work]
            outputs = [f.result() for f in futures]

    rows = [r for o in outputs for r in o[0]]
    records = [r for o in outputs for r in o[1]]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        w.writerows(rows)
    digests = "".join(r.get("digest", r["name"]) for r in records).encode()
    _write_manifest(out, f"suite {pattern}", _hash_bytes(base_blob, digests), records)
    failed = [r["name"] for r in records if r["status"] != "ok"]
    print(f"{len(records)} scenarios, {len(failed)} failed; summary in {out / 'summary.csv'}")
    for name in failed:
        print(f"  failed: {name}", file=sys.stderr)
    return EXIT_BLOWUP if failed else EXIT_OK


# -- catalog ------------------------------------------------------------------

def cmd_catalog(pattern="*", config_path=None) -> int:
    if config_path is not None:
        grid, params, nsteps = _base_from_file(config_path)
    else:
        grid, params, nsteps = GridSpec(), SolverParams(), 3000
    entries = [e for e in scenario_catalog(grid, params, nsteps) if fnmatchcase(e.name, pattern)]
    for e in entries:
        print(f"{e.name:<14} {len(e.members):>3}  {e.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="benard-cda",
                                description="Twin experiments for nudged Benard convection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one twin experiment from a config file")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--seed-override", type=int, default=None)

    s = sub.add_parser("suite", help="run catalog scenarios matching a filter")
    s.add_argument("--filter", default="*")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--config", type=Path, default=None,
                   help="file with [solver] and [grid] keys; full-scale 200x100 defaults otherwise")
    s.add_argument("--seed-override", type=int, default=None)

    f = sub.add_parser("reference", help="free reference run with observation dump")
    f.add_argument("--config", required=True, type=Path)
    f.add_argument("--out", required=True, type=Path)

    c = sub.add_parser("catalog", help="list catalog entries")
    c.add_argument("--filter", default="*")
    c.add_argument("--config", type=Path, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        seed = getattr(args, "seed_override", None)
        if seed is not None and not 0 <= seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer", key="seed-override")
        if args.command == "run":
            return cmd_run(args.config, args.out, args.seed_override)
        if args.command == "suite":
            return cmd_suite(args.filter, args.out, args.jobs, args.config, args.seed_override)
        if args.command == "reference":
            return cmd_reference(args.config, args.out)
        return cmd_catalog(args.filter, args.config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
