"""Wasted-resource accounting, fairness and run export.

Waste is charged per AQM drop according to where the drop happened:

* egress (deparser) drops waste both buffers (2 x packet), the packet's
  queueing time, and the cycles/weight of both pipeline blocks;
* iRED ingress drops waste the dropped packet plus its 48-byte notification
  and only the ingress block's cycles/weight; the recirculation time is
  charged once per emitted notification;
* ghost-mode ingress drops waste only the ingress buffer.

Weights are integer tenths throughout; MB means 10**6 bytes.
"""
import csv
import io
import json
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .model import NS_PER_S, PipelineCostModel, SimTime

SCHEMA_VERSION = 1

AQM_COSTS: Dict[str, PipelineCostModel] = {
    "ired": PipelineCostModel(108, 192, 1125, 1588),
    "pi2": PipelineCostModel(60, 160, 208, 2358),
    "codel": PipelineCostModel(60, 196, 138, 1549),
    "ired-g": PipelineCostModel(212, 84, 2080, 316),
}
# no published constants for a plain tail-drop pipeline
ZERO_COST = PipelineCostModel(0, 0, 0, 0)

ORACLE_KINDS = ("ired", "pi2", "codel", "ired-g")


def cost_model_for(kind: Optional[str]) -> PipelineCostModel:
    if kind is None:
        return ZERO_COST
    return AQM_COSTS[kind]


class Locus(Enum):
    INGRESS = "ingress"
    EGRESS = "egress"


@dataclass
class WasteLedger:
    memory_bytes: int = 0
    time_ns: int = 0
    cycles: int = 0
    weight_tenths: int = 0
    ingress_drops: int = 0
    egress_drops: int = 0
    notifications: int = 0
    # Traffic Manager overflow, kept apart from AQM waste
    tail_drops: int = 0
    tail_memory_bytes: int = 0
    tail_cycles: int = 0
    tail_weight_tenths: int = 0

    @property
    def aqm_drops(self) -> int:
        return self.ingress_drops + self.egress_drops

    @property
    def weight(self) -> float:
        return self.weight_tenths / 10

    @property
    def memory_mb(self) -> float:
        return self.memory_bytes / 1e6


def charge_drop(ledger: WasteLedger, aqm: str, locus: Locus, pkt_bytes: int,
                queue_delay: SimTime, cost: Optional[PipelineCostModel] = None):
    cost = cost or cost_model_for(aqm)
    if locus is Locus.EGRESS:
        ledger.egress_drops += 1
        ledger.memory_bytes += cost.egress_drop_memory_multiplier * pkt_bytes
        ledger.time_ns += queue_delay
        ledger.cycles += cost.ingress_cycles + cost.egress_cycles
        ledger.weight_tenths += cost.ingress_weight_tenths + cost.egress_weight_tenths
        return
    ledger.ingress_drops += 1
    ledger.memory_bytes += pkt_bytes
    if aqm == "ired":
        ledger.memory_bytes += cost.notification_bytes
    ledger.cycles += cost.ingress_cycles
    ledger.weight_tenths += cost.ingress_weight_tenths


def charge_notification(ledger: WasteLedger, cost: PipelineCostModel):
    ledger.notifications += 1
    ledger.time_ns += cost.recirc_latency


def charge_tail_drop(ledger: WasteLedger, cost: PipelineCostModel, pkt_bytes: int):
    ledger.tail_drops += 1
    ledger.tail_memory_bytes += cost.egress_drop_memory_multiplier * pkt_bytes
    ledger.tail_cycles += cost.ingress_cycles
    ledger.tail_weight_tenths += cost.ingress_weight_tenths


# ---------------------------------------------------------------- oracle

class PartialTableError(ValueError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__("missing drop-count cells: " + ", ".join(f"{c}/{k}" for c, k in self.missing))


Cell = Tuple[str, str]


@dataclass
class OracleTables:
    drops: Dict[Cell, int]
    memory_bytes: Dict[Cell, int]
    cycles: Dict[Cell, int]
    weight_tenths: Dict[Cell, int]

    def memory_mb(self, cell: Cell) -> float:
        return self.memory_bytes[cell] / 1e6

    def weight(self, cell: Cell) -> float:
        return self.weight_tenths[cell] / 10

    def metric(self, name: str, cell: Cell) -> float:
        if name == "memory":
            return self.memory_mb(cell)
        if name == "cycles":
            return float(self.cycles[cell])
        if name == "weight":
            return self.weight(cell)
        raise KeyError(name)


def per_drop_memory(kind: str, mtu: int, cost: Optional[PipelineCostModel] = None) -> int:
    cost = cost or AQM_COSTS[kind]
    if kind == "ired":
        return mtu + cost.notification_bytes
    if kind == "ired-g":
        return mtu
    return cost.egress_drop_memory_multiplier * mtu


def per_drop_cycles(kind: str) -> int:
    c = AQM_COSTS[kind]
    return c.ingress_cycles if kind in ("ired", "ired-g") else c.ingress_cycles + c.egress_cycles


def per_drop_weight_tenths(kind: str) -> int:
    c = AQM_COSTS[kind]
    if kind in ("ired", "ired-g"):
        return c.ingress_weight_tenths
    return c.ingress_weight_tenths + c.egress_weight_tenths


def accounting_oracle(drop_counts: Mapping[Cell, Optional[int]],
                      mtu: Union[int, Mapping[str, int]]) -> OracleTables:
    """Waste tables from drop counts alone: count x per-drop constant per cell."""
    configs = sorted({c for c, _ in drop_counts})
    kinds = sorted({k for _, k in drop_counts})
    missing = [(c, k) for c in configs for k in kinds if drop_counts.get((c, k)) is None]
    if missing:
        raise PartialTableError(missing)
    out = OracleTables({}, {}, {}, {})
    for (conf, kind), n in drop_counts.items():
        m = mtu if isinstance(mtu, int) else mtu[conf]
        out.drops[conf, kind] = n
        out.memory_bytes[conf, kind] = n * per_drop_memory(kind, m)
        out.cycles[conf, kind] = n * per_drop_cycles(kind)
        out.weight_tenths[conf, kind] = n * per_drop_weight_tenths(kind)
    return out


def savings_ratios(tables: OracleTables, baseline: str, subject: str = "ired"):
    """baseline waste / subject waste, per config and metric."""
    out = {}
    for conf in sorted({c for c, _ in tables.drops}, key=_roman_key):
        row = {}
        for metric in ("memory", "cycles", "weight"):
            num = tables.metric(metric, (conf, baseline))
            den = tables.metric(metric, (conf, subject))
            row[metric] = num / den if den else math.inf
        out[conf] = row
    return out


_ROMAN = {"I": 1, "V": 5, "X": 10}


def _roman_key(s: str):
    total, prev = 0, 0
    for ch in reversed(s):
        v = _ROMAN.get(ch)
        if v is None:
            return (1, s)
        total += -v if v < prev else v
        prev = max(prev, v)
    return (0, total)


def load_published_drop_counts():
    """Bundled dropped-packet counts: ({(conf, kind): n}, {conf: mtu})."""
    text = resources.files("aqmsim.data").joinpath("published_drop_counts.csv").read_text()
    counts, mtus = {}, {}
    for row in csv.DictReader(io.StringIO(text)):
        conf = row["config"]
        mtus[conf] = int(row["mtu_bytes"])
        for kind in ORACLE_KINDS:
            counts[conf, kind] = int(row[kind])
    return counts, mtus


def load_published_tables():
    """Printed waste tables: {metric: {(conf, kind): value}}, plus notes per cell."""
    text = resources.files("aqmsim.data").joinpath("published_waste_tables.csv").read_text()
    tables: Dict[str, Dict[Cell, float]] = {}
    notes: Dict[Tuple[str, str, str], str] = {}
    for row in csv.DictReader(io.StringIO(text)):
        tables.setdefault(row["metric"], {})[row["config"], row["kind"]] = float(row["printed"])
        if row["note"]:
            notes[row["metric"], row["config"], row["kind"]] = row["note"]
    return tables, notes


def load_counts_file(path) -> Tuple[Dict[Cell, Optional[int]], Dict[str, int]]:
    """User-supplied counts in the bundled fixture's CSV layout; blank cells are missing."""
    counts, mtus = {}, {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        kinds = [k for k in reader.fieldnames or () if k in ORACLE_KINDS]
        for row in reader:
            conf = row["config"]
            mtus[conf] = int(row["mtu_bytes"])
            for kind in kinds:
                v = (row.get(kind) or "").strip()
                counts[conf, kind] = int(v) if v else None
    return counts, mtus


# ---------------------------------------------------------------- fairness

class FairnessError(ValueError):
    pass


def jain_index(throughputs: Sequence[float]) -> float:
    xs = [float(x) for x in throughputs]
    if not xs or any(x < 0 for x in xs):
        raise FairnessError("need a non-empty list of non-negative rates")
    sq = sum(x * x for x in xs)
    if sq == 0:
        raise FairnessError("Jain's index is undefined for all-zero rates")
    return sum(xs) ** 2 / (len(xs) * sq)


# ---------------------------------------------------------------- time series

class SeriesRecorder:
    """Per-bucket queue and throughput samples (default 1 s buckets)."""

    def __init__(self, bucket_ns: SimTime = NS_PER_S):
        self.bucket_ns = bucket_ns
        self.delays: Dict[int, List[int]] = {}
        self.max_depth: Dict[int, int] = {}
        self.class_bytes: Dict[int, List[int]] = {}
        self.flow_bytes: Dict[Tuple[int, int], int] = {}

    def on_dequeue(self, now: SimTime, queue_delay: SimTime, depth: int):
        b = now // self.bucket_ns
        lst = self.delays.get(b)
        if lst is None:
            lst = self.delays[b] = []
        lst.append(queue_delay)
        if depth > self.max_depth.get(b, -1):
            self.max_depth[b] = depth

    def on_delivery(self, now: SimTime, cls: int, flow: int, nbytes: int):
        b = now // self.bucket_ns
        acc = self.class_bytes.get(b)
        if acc is None:
            acc = self.class_bytes[b] = [0, 0]
        acc[cls] += nbytes
        key = (b, flow)
        self.flow_bytes[key] = self.flow_bytes.get(key, 0) + nbytes

    def class_bytes_between(self, t0: SimTime, t1: SimTime) -> Tuple[int, int]:
        lo, hi = t0 // self.bucket_ns, -(-t1 // self.bucket_ns)
        c = s = 0
        for b in range(lo, hi):
            acc = self.class_bytes.get(b)
            if acc:
                c += acc[0]
                s += acc[1]
        return c, s

    def rows(self, n_buckets: int) -> List[dict]:
        secs = self.bucket_ns / NS_PER_S
        out = []
        for b in range(n_buckets):
            d = self.delays.get(b)
            if d:
                arr = np.asarray(d, dtype=np.int64)
                p50, p99 = (int(v) for v in np.percentile(arr, [50, 99], method="lower"))
            else:
                p50 = p99 = 0
            acc = self.class_bytes.get(b, (0, 0))
            out.append({
                "t_s": round(b * secs, 9),
                "qdelay_p50_ms": p50 / 1e6,
                "qdelay_p99_ms": p99 / 1e6,
                "max_depth_bytes": self.max_depth.get(b, 0),
                "classic_mbps": acc[0] * 8 / secs / 1e6,
                "scalable_mbps": acc[1] * 8 / secs / 1e6,
            })
        return out

    def flow_rows(self) -> List[dict]:
        secs = self.bucket_ns / NS_PER_S
        return [{"t_s": round(b * secs, 9), "flow": f, "mbps": n * 8 / secs / 1e6}
                for (b, f), n in sorted(self.flow_bytes.items())]


# ---------------------------------------------------------------- export

class ExportError(OSError):
    pass


def _write(path, text: str):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _csv_text(rows: Iterable[dict], header: Optional[Sequence[str]] = None) -> str:
    rows = list(rows)
    if header is None:
        header = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[h]) for h in header])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return v


def export_run(summary: Mapping, series: Sequence[dict], out_dir, formats=("csv", "json"),
               flow_series: Optional[Sequence[dict]] = None, prefix: str = "") -> List[str]:
    """Write summary and time series files; return the paths written."""
    import os

    paths = []
    summary = {"schema_version": SCHEMA_VERSION, **summary}
    for fmt in formats:
        if fmt == "json":
            p = os.path.join(out_dir, prefix + "summary.json")
            _write(p, json.dumps(summary, indent=2) + "\n")
            paths.append(p)
            p = os.path.join(out_dir, prefix + "series.json")
            _write(p, json.dumps(list(series), indent=1) + "\n")
            paths.append(p)
        elif fmt == "csv":
            p = os.path.join(out_dir, prefix + "summary.csv")
            _write(p, _csv_text([summary]))
            paths.append(p)
            p = os.path.join(out_dir, prefix + "series.csv")
            _write(p, _csv_text(series, SERIES_COLUMNS))
            paths.append(p)
            if flow_series is not None:
                p = os.path.join(out_dir, prefix + "flows.csv")
                _write(p, _csv_text(flow_series, ("t_s", "flow", "mbps")))
                paths.append(p)
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    return paths


SERIES_COLUMNS = ("t_s", "qdelay_p50_ms", "qdelay_p99_ms", "max_depth_bytes",
                  "classic_mbps", "scalable_mbps")
