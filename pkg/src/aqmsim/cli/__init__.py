"""Batch front-end: simulate one scenario, reproduce the waste tables from
drop counts, or sweep every preset across a list of AQMs.

    python -m aqmsim --mode simulate --scenario I --aqm ired-delay --scale 1/12 --out out/
    python -m aqmsim --mode oracle --out out/
    python -m aqmsim --mode sweep --aqm ired-delay,pi2 --scale 1/48 --out out/ --jobs 4
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from ..aqm import AQM_KEYS, check_aqm_key
from ..metrics import (ORACLE_KINDS, PartialTableError, SCHEMA_VERSION, _csv_text, _write,
                       accounting_oracle, export_run, load_counts_file,
                       load_published_drop_counts, load_published_tables, savings_ratios)
from ..model import PRESET_NAMES, ConfigError, ScenarioConfig, preset_scenario
from .scenario_file import ScenarioParseError, resolve_scenario

log = logging.getLogger("aqmsim")

MODES = ("simulate", "oracle", "sweep")
MEMORY_TOLERANCE_MB = 0.02


@dataclass
class RunRequest:
    scenario: str = "I"
    aqms: Tuple[str, ...] = ("ired-delay",)
    seed: int = 1
    scale: Fraction = Fraction(1)
    out_dir: str = "out"
    mode: str = "simulate"
    trace_dump: bool = False
    ghost: bool = False
    counts_file: Optional[str] = None
    jobs: int = 1
    presets: Tuple[str, ...] = PRESET_NAMES
    formats: Tuple[str, ...] = ("csv", "json")
    scheduler: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        self.scale = Fraction(self.scale)
        if self.scale <= 0:
            raise ConfigError("scale factor must be > 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        for key in self.aqms:
            check_aqm_key(key)
        if "ired-ghost" in self.aqms and not self.ghost:
            raise ConfigError("ired-ghost needs the ghost depth channel; pass --ghost")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


@dataclass
class RunOutcome:
    status: int
    paths: List[str] = field(default_factory=list)
    records: List[dict] = field(default_factory=list)


# ---------------------------------------------------------------- simulate


def _configure(base: ScenarioConfig, aqm: str, req: RunRequest) -> ScenarioConfig:
    cfg = replace(base, aqm=aqm, seed=req.seed, ghost=req.ghost or base.ghost)
    if req.scheduler:
        cfg = replace(cfg, scheduler=req.scheduler)
    return cfg.scaled(req.scale) if req.scale != 1 else cfg


def _run_dir(out_dir: str, cfg: ScenarioConfig) -> str:
    return os.path.join(out_dir, f"{cfg.name}_{cfg.aqm}_seed{cfg.seed}")


def run_one(cfg: ScenarioConfig, out_dir: str, trace_dump: bool = False,
            formats: Sequence[str] = ("csv", "json")) -> dict:
    """Run and export one scenario; never raises (failures come back in the record)."""
    from ..simulation import Simulation

    run_dir = _run_dir(out_dir, cfg)
    rec = {"scenario": cfg.name, "aqm": cfg.aqm, "seed": cfg.seed, "dir": run_dir,
           "paths": [], "violations": [], "error": None, "summary": None}
    try:
        os.makedirs(run_dir, exist_ok=True)
        trace_fh = open(os.path.join(run_dir, "trace.txt"), "w") if trace_dump else None
        try:
            res = Simulation(cfg, trace=True, trace_file=trace_fh).run()
        finally:
            if trace_fh is not None:
                trace_fh.close()
        if trace_dump:
            rec["paths"].append(os.path.join(run_dir, "trace.txt"))
        rec["paths"] += export_run(res.summary, res.series, run_dir, formats, res.flow_series)
        rec["violations"] = res.violations
        rec["summary"] = res.summary
    except Exception as exc:  # reported, and turned into a nonzero exit
        log.exception("run %s/%s failed", cfg.name, cfg.aqm)
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _run_many(cfgs: List[ScenarioConfig], req: RunRequest) -> List[dict]:
    args = [(c, req.out_dir, req.trace_dump, req.formats) for c in cfgs]
    if req.jobs == 1 or len(cfgs) == 1:
        recs = [run_one(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=req.jobs) as pool:
            recs = list(pool.map(run_one, *zip(*args)))
    return sorted(recs, key=lambda r: (_preset_order(r["scenario"]), r["aqm"], r["seed"]))


def _preset_order(name: str):
    return (PRESET_NAMES.index(name), name) if name in PRESET_NAMES else (len(PRESET_NAMES), name)


def _status(recs: List[dict]) -> int:
    return 1 if any(r["error"] or r["violations"] for r in recs) else 0


def simulate(req: RunRequest) -> RunOutcome:
    base = resolve_scenario(req.scenario)
    recs = _run_many([_configure(base, a, req) for a in req.aqms], req)
    return RunOutcome(_status(recs), [p for r in recs for p in r["paths"]], recs)


# ---------------------------------------------------------------- sweep


SUBJECTS = ("ired-delay", "ired-depth", "ired-ghost")
BASELINES = ("pi2", "dualpi2", "codel")


def simulated_savings(recs: List[dict]) -> List[dict]:
    """baseline waste / iRED waste per config, from simulated ledgers."""
    by_key = {(r["scenario"], r["aqm"]): r["summary"] for r in recs if r["summary"]}
    rows = []
    for conf in sorted({c for c, _ in by_key}, key=_preset_order):
        subject = next((s for s in SUBJECTS if (conf, s) in by_key), None)
        if subject is None:
            continue
        sub = by_key[conf, subject]
        for base in BASELINES:
            if (conf, base) not in by_key:
                continue
            b = by_key[conf, base]
            row = {"config": conf, "subject": subject, "baseline": base}
            for metric, key in (("memory", "wasted_memory_bytes"), ("cycles", "wasted_cycles"),
                                ("weight", "wasted_weight")):
                row[metric] = b[key] / sub[key] if sub[key] else (float("inf") if b[key] else float("nan"))
            rows.append(row)
    return rows


def sweep(req: RunRequest) -> RunOutcome:
    cfgs = [_configure(preset_scenario(p), a, req) for p in req.presets for a in req.aqms]
    recs = _run_many(cfgs, req)
    paths = [p for r in recs for p in r["paths"]]
    os.makedirs(req.out_dir, exist_ok=True)
    table = [r["summary"] for r in recs if r["summary"]]
    if table:
        p = os.path.join(req.out_dir, "sweep_summary.csv")
        _write(p, _csv_text(table))
        paths.append(p)
    rows = simulated_savings(recs)
    p = os.path.join(req.out_dir, "savings_ratios.csv")
    _write(p, _csv_text(rows, ("config", "subject", "baseline", "memory", "cycles", "weight")))
    paths.append(p)
    return RunOutcome(_status(recs), paths, recs)


# ---------------------------------------------------------------- oracle


def oracle_rows(tables) -> List[dict]:
    rows = []
    for conf, kind in sorted(tables.drops, key=lambda c: (_preset_order(c[0]), c[1])):
        cell = (conf, kind)
        rows.append({"config": conf, "kind": kind, "drops": tables.drops[cell],
                     "memory_mb": tables.memory_mb(cell), "cycles": tables.cycles[cell],
                     "weight": tables.weight(cell)})
    return rows


def published_comparison(tables) -> List[dict]:
    printed, notes = load_published_tables()
    rows = []
    for metric in ("memory", "cycles", "weight"):
        for cell in sorted(printed[metric], key=lambda c: (_preset_order(c[0]), c[1])):
            got = tables.metric(metric, cell)
            want = printed[metric][cell]
            ok = abs(got - want) <= MEMORY_TOLERANCE_MB if metric == "memory" else got == want
            rows.append({"metric": metric, "config": cell[0], "kind": cell[1], "computed": got,
                         "printed": want, "matches": ok,
                         "note": notes.get((metric,) + cell, "")})
    return rows


def oracle(req: RunRequest) -> RunOutcome:
    bundled = req.counts_file is None
    counts, mtus = load_published_drop_counts() if bundled else load_counts_file(req.counts_file)
    tables = accounting_oracle(counts, mtus)
    os.makedirs(req.out_dir, exist_ok=True)
    paths = []
    p = os.path.join(req.out_dir, "oracle_tables.csv")
    _write(p, _csv_text(oracle_rows(tables)))
    paths.append(p)
    kinds = {k for _, k in tables.drops}
    rows = []
    for base in ("pi2", "codel"):
        if base in kinds and "ired" in kinds:
            for conf, r in savings_ratios(tables, base).items():
                rows.append({"config": conf, "subject": "ired", "baseline": base, **r})
    p = os.path.join(req.out_dir, "oracle_savings.csv")
    _write(p, _csv_text(rows, ("config", "subject", "baseline", "memory", "cycles", "weight")))
    paths.append(p)
    recs = []
    if bundled:
        cmp_rows = published_comparison(tables)
        p = os.path.join(req.out_dir, "oracle_vs_published.csv")
        _write(p, _csv_text(cmp_rows))
        paths.append(p)
        mismatches = [r for r in cmp_rows if not r["matches"]]
        for r in mismatches:
            log.info("differs from printed value: %s %s/%s computed %s printed %s %s", r["metric"],
                     r["config"], r["kind"], r["computed"], r["printed"], r["note"])
        recs.append({"cells": len(cmp_rows), "mismatches": len(mismatches)})
    return RunOutcome(0, paths, recs)


# ---------------------------------------------------------------- entry point


def run(req: RunRequest) -> RunOutcome:
    out = {"simulate": simulate, "oracle": oracle, "sweep": sweep}[req.mode](req)
    os.makedirs(req.out_dir, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "mode": req.mode,
        "scenario": req.scenario if req.mode == "simulate" else None,
        "aqms": list(req.aqms) if req.mode != "oracle" else list(ORACLE_KINDS),
        "seed": req.seed,
        "scale": str(req.scale),
        "status": out.status,
        "runs": [{k: v for k, v in r.items() if k != "summary"} for r in out.records],
        "artifacts": sorted(out.paths),
    }
    p = os.path.join(req.out_dir, "manifest.json")
    _write(p, json.dumps(manifest, indent=2) + "\n")
    out.paths.append(p)
    return out


def _split(text: str) -> Tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aqmsim", description=__doc__.split("\n\n")[0])
    ap.add_argument("--mode", choices=MODES, default="simulate")
    ap.add_argument("--scenario", default="I", help="preset name (I..XII) or path to a scenario file")
    ap.add_argument("--aqm", default="ired-delay",
                    help=f"comma-separated AQM keys ({', '.join(AQM_KEYS)})")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--scale", default="1", help="duration scale factor, e.g. 1/12")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--trace-dump", action="store_true", help="write every processed event to trace.txt")
    ap.add_argument("--ghost", action="store_true", help="enable the ingress ghost depth channel")
    ap.add_argument("--counts", default=None, help="oracle mode: drop-count CSV instead of the bundled one")
    ap.add_argument("--presets", default=",".join(PRESET_NAMES), help="sweep mode: presets to run")
    ap.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    ap.add_argument("--format", default="csv,json", help="export formats")
    ap.add_argument("--scheduler", choices=("strict", "wrr"), default=None,
                    help="override the dual-queue scheduler")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        req = RunRequest(
            scenario=args.scenario, aqms=_split(args.aqm), seed=args.seed,
            scale=Fraction(args.scale), out_dir=args.out, mode=args.mode,
            trace_dump=args.trace_dump, ghost=args.ghost, counts_file=args.counts,
            jobs=args.jobs, presets=_split(args.presets), formats=_split(args.format),
            scheduler=args.scheduler)
        for p in req.presets:
            preset_scenario(p)
        out = run(req)
    except (ScenarioParseError, ConfigError, PartialTableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for r in out.records:
        if r.get("error"):
            print(f"FAILED {r['scenario']}/{r['aqm']}: {r['error']}", file=sys.stderr)
        for v in r.get("violations", ()):
            print(f"INVARIANT {r['scenario']}/{r['aqm']}: {v}", file=sys.stderr)
    for p in out.paths:
        print(p)
    return out.status
