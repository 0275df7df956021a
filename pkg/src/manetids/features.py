"""Per-node, per-interval feature vectors and the dataset file format.

A row holds the five packet counters, the number of distinct neighbours
heard, and two routing-table change ratios (PCR and PCH) computed from the
snapshots at the start and end of the interval.

Datasets persist as a CSV file plus a small JSON sidecar (``<path>.json``)
carrying the schema version, sampling interval, provenance and the rows
whose PCR/PCH hit the zero-denominator rule.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .config import AttackKind, SimConfig
from .sim.engine import CounterLog

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FEATURE_NAMES = ("rreq_sent", "rreq_recv", "rrep_sent", "rerr_sent", "rerr_recv",
                 "num_neighbors", "pcr", "pch")
HEADER = FEATURE_NAMES + ("label", "node", "interval", "scenario")
COUNT_COLUMNS = 6
# fixed class order used everywhere labels become integers
LABELS = ("normal", "blackhole", "dropping", "flooding", "forging")

FLAG_PCR = 1
FLAG_PCH = 2


class DatasetError(ValueError):
    pass


def label_for(kind: AttackKind) -> str:
    return "normal" if kind is AttackKind.NONE else kind.value


# -- ratios -----------------------------------------------------------------

def compute_pcr(s1: set, s2: set) -> tuple[float, bool]:
    """Share of route destinations that appeared or vanished.

    Returns ``(value, flagged)``; ``flagged`` marks an empty starting table,
    where the denominator is taken as 1.
    """
    changed = len(s2 - s1) + len(s1 - s2)
    if not s1:
        return float(len(s2)), True
    return changed / len(s1), False


def compute_pch(h1: float, h2: float) -> tuple[float, bool]:
    if h1 == 0:
        return float(h2), True
    return (h2 - h1) / h1, False


def pcr_array(before: np.ndarray, after: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`compute_pcr` over the last axis of two boolean masks."""
    changed = (before ^ after).sum(axis=-1)
    size = before.sum(axis=-1)
    flagged = size == 0
    value = np.where(flagged, after.sum(axis=-1), changed / np.maximum(size, 1))
    return value.astype(float), flagged


def pch_array(h1: np.ndarray, h2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    flagged = h1 == 0
    value = np.where(flagged, h2, (h2 - h1) / np.where(flagged, 1.0, h1))
    return value, flagged


# -- rows -------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureVector:
    rreq_sent: int
    rreq_recv: int
    rrep_sent: int
    rerr_sent: int
    rerr_recv: int
    num_neighbors: int
    pcr: float
    pch: float
    label: str
    node: int
    interval: int
    scenario: str
    flags: int = 0

    def features(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in FEATURE_NAMES], dtype=float)


def snapshot_features(log_: CounterLog, node: int, interval: int) -> FeatureVector:
    if node in log_.malicious_ids:
        raise ValueError(f"node {node} is malicious; its rows are excluded")
    if not 0 <= interval < log_.interval_count:
        raise ValueError(f"interval {interval} outside 0..{log_.interval_count - 1}")
    c = log_.counts[interval, node]
    s1 = set(np.flatnonzero(log_.route_valid[interval, node]).tolist())
    s2 = set(np.flatnonzero(log_.route_valid[interval + 1, node]).tolist())
    pcr, f1 = compute_pcr(s1, s2)
    pch, f2 = compute_pch(int(log_.hop_sums[interval, node]),
                          int(log_.hop_sums[interval + 1, node]))
    return FeatureVector(
        *(int(v) for v in c), len(log_.heard_from(node, interval)), pcr, pch,
        label_for(log_.config.attack_kind), node, interval, log_.config.scenario_id,
        FLAG_PCR * f1 | FLAG_PCH * f2)


# -- datasets -----------------------------------------------------------------

@dataclass
class Dataset:
    """Column-oriented rows; ``X`` holds the eight features in ``FEATURE_NAMES`` order."""

    X: np.ndarray
    labels: np.ndarray
    nodes: np.ndarray
    intervals: np.ndarray
    scenarios: np.ndarray
    flags: np.ndarray
    sampling_interval: float | None = None
    provenance: list[SimConfig] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, len(FEATURE_NAMES))
        n = len(self.X)
        self.labels = np.asarray(self.labels, dtype=object).reshape(n)
        self.nodes = np.asarray(self.nodes, dtype=np.int64).reshape(n)
        self.intervals = np.asarray(self.intervals, dtype=np.int64).reshape(n)
        self.scenarios = np.asarray(self.scenarios, dtype=object).reshape(n)
        self.flags = np.asarray(self.flags, dtype=np.int64).reshape(n)

    @classmethod
    def empty(cls, sampling_interval: float | None = None) -> Dataset:
        return cls(np.zeros((0, len(FEATURE_NAMES))), [], [], [], [], [], sampling_interval)

    @classmethod
    def from_rows(cls, rows: Sequence[FeatureVector], sampling_interval=None,
                  provenance=None) -> Dataset:
        if not rows:
            return cls.empty(sampling_interval)
        return cls(np.array([r.features() for r in rows]),
                   [r.label for r in rows], [r.node for r in rows],
                   [r.interval for r in rows], [r.scenario for r in rows],
                   [r.flags for r in rows], sampling_interval, list(provenance or []))

    def __len__(self) -> int:
        return len(self.X)

    def __iter__(self) -> Iterator[FeatureVector]:
        for i in range(len(self)):
            yield self.row(i)

    def row(self, i: int) -> FeatureVector:
        x = self.X[i]
        return FeatureVector(*(int(v) for v in x[:COUNT_COLUMNS]), float(x[6]), float(x[7]),
                             self.labels[i], int(self.nodes[i]), int(self.intervals[i]),
                             self.scenarios[i], int(self.flags[i]))

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.labels[idx], self.nodes[idx], self.intervals[idx],
                       self.scenarios[idx], self.flags[idx], self.sampling_interval,
                       list(self.provenance), self.schema_version)

    def label_codes(self) -> np.ndarray:
        lookup = {name: i for i, name in enumerate(LABELS)}
        return np.array([lookup[l] for l in self.labels], dtype=np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (len(self) == len(other)
                and np.array_equal(self.X, other.X)
                and list(self.labels) == list(other.labels)
                and np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.intervals, other.intervals)
                and list(self.scenarios) == list(other.scenarios)
                and np.array_equal(self.flags, other.flags)
                and self.sampling_interval == other.sampling_interval
                and self.provenance == other.provenance
                and self.schema_version == other.schema_version)


def feature_block(counts, heard, route_valid, hop_sums, nodes) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows for ``nodes`` over K consecutive intervals, interval-major.

    ``counts``/``heard`` cover the K intervals; ``route_valid``/``hop_sums``
    cover their K + 1 boundaries. Returns (X, flags).
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    c = counts[:, nodes, :]
    neigh = heard[:, nodes, :].sum(axis=-1)
    rv = route_valid[:, nodes, :]
    pcr, f1 = pcr_array(rv[:-1], rv[1:])
    hs = hop_sums[:, nodes]
    pch, f2 = pch_array(hs[:-1], hs[1:])
    X = np.concatenate([c.astype(float), neigh[..., None].astype(float),
                        pcr[..., None], pch[..., None]], axis=-1)
    return X.reshape(-1, len(FEATURE_NAMES)), (FLAG_PCR * f1 + FLAG_PCH * f2).reshape(-1)


def build_dataset(log_: CounterLog) -> Dataset:
    """All rows of one run: legitimate nodes only, interval-major order."""
    cfg = log_.config
    legit = np.array(log_.legitimate_ids, dtype=np.int64)
    k = log_.interval_count
    X, flags = feature_block(log_.counts, log_.heard, log_.route_valid, log_.hop_sums, legit)
    n = X.shape[0]
    return Dataset(X, [label_for(cfg.attack_kind)] * n, np.tile(legit, k),
                   np.repeat(np.arange(k), legit.size), [cfg.scenario_id] * n, flags,
                   float(cfg.sampling_interval), [cfg])


def merge_datasets(parts: Sequence[Dataset]) -> Dataset:
    if not parts:
        raise DatasetError("nothing to merge")
    first = parts[0]
    for p in parts[1:]:
        if p.sampling_interval != first.sampling_interval:
            raise DatasetError(f"sampling interval mismatch: {first.sampling_interval} "
                               f"vs {p.sampling_interval}")
        if p.schema_version != first.schema_version:
            raise DatasetError(f"schema version mismatch: {first.schema_version} "
                               f"vs {p.schema_version}")
    cat = lambda attr: np.concatenate([getattr(p, attr) for p in parts])
    return Dataset(cat("X"), cat("labels"), cat("nodes"), cat("intervals"), cat("scenarios"),
                   cat("flags"), first.sampling_interval,
                   [c for p in parts for c in p.provenance], first.schema_version)


# -- persistence ----------------------------------------------------------------

def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_dataset(d: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for i in range(len(d)):
            x = d.X[i]
            w.writerow([*(str(int(v)) for v in x[:COUNT_COLUMNS]), repr(float(x[6])),
                        repr(float(x[7])), d.labels[i], int(d.nodes[i]), int(d.intervals[i]),
                        d.scenarios[i]])
    meta = {
        "schema_version": d.schema_version,
        "sampling_interval": d.sampling_interval,
        "provenance": [c.to_dict() for c in d.provenance],
        "flagged": [[int(i), int(d.flags[i])] for i in np.flatnonzero(d.flags)],
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=1), encoding="utf-8")


def _parse_count(text: str, name: str, line: int) -> int:
    if not (text.isascii() and text.isdigit()):
        raise DatasetError(f"line {line}: {name} must be a non-negative integer, got {text!r}")
    return int(text)


def _parse_float(text: str, name: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DatasetError(f"line {line}: {name} is not a number: {text!r}") from None
    if not math.isfinite(v):
        raise DatasetError(f"line {line}: {name} is not finite")
    return v


def read_dataset(path) -> Dataset:
    path = Path(path)
    X, labels, nodes, intervals, scenarios = [], [], [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != HEADER:
            raise DatasetError(f"line 1: expected header {','.join(HEADER)}")
        for rec in reader:
            line = reader.line_num
            if len(rec) != len(HEADER):
                raise DatasetError(f"line {line}: expected {len(HEADER)} fields, got {len(rec)}")
            counts = [_parse_count(rec[j], HEADER[j], line) for j in range(COUNT_COLUMNS)]
            pcr = _parse_float(rec[6], "pcr", line)
            if pcr < 0:
                raise DatasetError(f"line {line}: pcr must be >= 0")
            pch = _parse_float(rec[7], "pch", line)
            if rec[8] not in LABELS:
                raise DatasetError(f"line {line}: unknown label {rec[8]!r}")
            X.append([*counts, pcr, pch])
            labels.append(rec[8])
            nodes.append(_parse_count(rec[9], "node", line))
            intervals.append(_parse_count(rec[10], "interval", line))
            scenarios.append(rec[11])
    flags = np.zeros(len(X), dtype=np.int64)
    dt, provenance, version = None, [], SCHEMA_VERSION
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
        version = meta.get("schema_version", SCHEMA_VERSION)
        dt = meta.get("sampling_interval")
        provenance = [SimConfig.from_dict(c) for c in meta.get("provenance", [])]
        for i, f in meta.get("flagged", []):
            flags[i] = f
    else:
        log.warning("no sidecar for %s; sampling interval and provenance unknown", path)
    if version != SCHEMA_VERSION:
        raise DatasetError(f"unsupported schema version {version}")
    if not X:
        return Dataset(np.zeros((0, len(FEATURE_NAMES))), [], [], [], [], [], dt, provenance)
    return Dataset(np.array(X, dtype=float), labels, nodes, intervals, scenarios, flags,
                   dt, provenance, version)


# -- scaling ------------------------------------------------------------------

@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    # a column whose spread is below this is treated as constant and left unscaled
    FLOOR = 1e-12

    @classmethod
    def fit(cls, X: np.ndarray) -> Standardizer:
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            raise ValueError("cannot fit a standardizer on zero rows")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std <= cls.FLOOR * np.maximum(1.0, np.abs(mean)), 1.0, std)
        return cls(mean, std)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Standardizer:
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


def fit_standardizer(train: Dataset) -> Standardizer:
    return Standardizer.fit(train.X)
