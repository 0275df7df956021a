"""Sweeps over sampling interval, attacker count and pause time.

Scenario datasets are simulated on demand and cached on disk, keyed by a
digest of the full configuration, so sweeps and reruns share work.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .. import __version__
from ..classifiers import MODEL_KINDS, Hyperparameters, LabelTask, Model, train_model
from ..config import AttackKind, SimConfig
from ..features import Dataset, build_dataset, merge_datasets, read_dataset, write_dataset
from ..sim.engine import run_simulation
from .metrics import EvalReport, evaluate
from .tuning import GridSpec, SearchResult, grid_search, linear_from_mlp

log = logging.getLogger(__name__)

SWEEPS = {
    "dt": (5.0, 10.0, 15.0, 30.0),
    "attackers": (5, 15, 25),
    "pause": (0.0, 200.0, 400.0, 700.0),
}
ATTACKS = (AttackKind.BLACKHOLE, AttackKind.DROPPING, AttackKind.FLOODING, AttackKind.FORGING)
NOMINAL_DURATION = 700.0
TASKS = ("binary", "multiclass")


def duration_for(dt: float, nominal: float = NOMINAL_DURATION) -> float:
    """Longest run not exceeding ``nominal`` that is a whole number of intervals."""
    return float(int(nominal // dt) * dt)


_PKG = Path(__file__).resolve().parent.parent
_DATASET_SOURCES = ("config.py", "aodv.py", "adversary.py", "features.py", "sim")


def code_fingerprint() -> str:
    """Digest of every source file that shapes a simulated dataset."""
    h = hashlib.sha256()
    for name in _DATASET_SOURCES:
        p = _PKG / name
        for f in sorted(p.glob("*.py")) if p.is_dir() else [p]:
            h.update(f.relative_to(_PKG).as_posix().encode())
            h.update(f.read_bytes())
    return h.hexdigest()


def simulate_dataset(cfg: SimConfig) -> Dataset:
    return build_dataset(run_simulation(cfg))


def _simulate_to(args) -> str:
    cfg, path = args
    write_dataset(simulate_dataset(cfg), path)
    return str(path)


class ScenarioStore:
    """Directory of simulated scenario datasets."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.fingerprint = code_fingerprint()

    def path(self, cfg: SimConfig) -> Path:
        blob = json.dumps({"config": cfg.to_dict(), "version": __version__,
                           "code": self.fingerprint}, sort_keys=True)
        digest = hashlib.sha256(blob.encode()).hexdigest()[:10]
        return self.root / f"{cfg.scenario_id}-{digest}.csv"

    def ensure(self, cfgs: list[SimConfig], jobs: int = 1) -> None:
        todo = [(c, self.path(c)) for c in dict.fromkeys(cfgs) if not self.path(c).exists()]
        if not todo:
            return
        log.info("simulating %d scenarios", len(todo))
        if jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for done in pool.map(_simulate_to, todo, chunksize=1):
                    log.debug("wrote %s", done)
        else:
            for item in todo:
                _simulate_to(item)

    def get(self, cfg: SimConfig) -> Dataset:
        p = self.path(cfg)
        if not p.exists():
            self.ensure([cfg])
        return read_dataset(p)

    def merged(self, cfgs: list[SimConfig]) -> Dataset:
        return merge_datasets([self.get(c) for c in cfgs])


def scenario(base: SimConfig, kind: AttackKind, count: int, pause: float, dt: float,
             seed: int) -> SimConfig:
    if kind is AttackKind.NONE:
        count = 0
    return base.replace(attack_kind=kind, malicious_count=count, pause_time=pause,
                        sampling_interval=dt, duration=duration_for(dt, base.duration),
                        rng_seed=seed)


@dataclass
class ExperimentSpec:
    sweep: str = "attackers"
    models: tuple[str, ...] = MODEL_KINDS
    tasks: tuple[str, ...] = TASKS
    attacks: tuple[AttackKind, ...] = ATTACKS
    dt: float = 10.0
    fixed_pause: float = 200.0
    fixed_count: int = 15
    train_counts: tuple[int, ...] = (5, 15, 25)
    train_pauses: tuple[float, ...] = (0.0, 200.0, 400.0, 700.0)
    train_seed: int = 1
    # None: enough normal runs per pause that normal rows roughly match attack rows
    normal_replicas: int | None = None
    test_seeds: tuple[int, ...] = (1001, 1002, 1003)
    # "kind" or "kind/task" -> hyperparameter dict; anything missing is tuned
    hyperparameters: dict[str, dict] = field(default_factory=dict)
    grid: GridSpec = field(default_factory=GridSpec.reduced)
    tune_row_cap: int | None = 300
    folds: int = 10
    model_seed: int = 0
    base: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ValueError(f"unknown sweep {self.sweep!r}; expected one of {sorted(SWEEPS)}")
        self.attacks = tuple(AttackKind(a) for a in self.attacks)
        unknown = set(self.models) - set(MODEL_KINDS)
        if unknown:
            raise ValueError(f"unknown model kinds {sorted(unknown)}")

    def cell_values(self) -> tuple:
        return SWEEPS[self.sweep]

    def cell_params(self, value) -> tuple[float, int, float]:
        """(dt, malicious_count, pause_time) for one sweep cell."""
        if self.sweep == "dt":
            return float(value), self.fixed_count, self.fixed_pause
        if self.sweep == "attackers":
            return self.dt, int(value), self.fixed_pause
        return self.dt, self.fixed_count, float(value)

    def replicas(self) -> int:
        if self.normal_replicas is not None:
            return self.normal_replicas
        n = self.base.node_count
        legit = sum(n - c for c in self.train_counts) * len(self.attacks)
        return max(1, round(legit / n))

    def training_configs(self, dt: float) -> list[SimConfig]:
        cfgs = []
        for pause in self.train_pauses:
            for r in range(self.replicas()):
                cfgs.append(scenario(self.base, AttackKind.NONE, 0, pause, dt, self.train_seed + r))
            for kind in self.attacks:
                for count in self.train_counts:
                    cfgs.append(scenario(self.base, kind, count, pause, dt, self.train_seed))
        return cfgs

    def test_configs(self, value, seed: int) -> list[SimConfig]:
        dt, count, pause = self.cell_params(value)
        cfgs = [scenario(self.base, AttackKind.NONE, 0, pause, dt, seed)]
        cfgs += [scenario(self.base, k, count, pause, dt, seed) for k in self.attacks]
        return cfgs


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    reports: list[EvalReport]
    tuning: dict[str, SearchResult]
    absent: list[dict[str, Any]]
    models: dict[str, Model] = field(default_factory=dict)

    def summary(self) -> list[dict[str, Any]]:
        return summarize(self.reports)


def resolve_hyperparameters(spec: ExperimentSpec, train: Dataset, jobs: int
                            ) -> tuple[dict[str, Hyperparameters], dict[str, SearchResult]]:
    """Hyperparameters per "kind/task": given ones first, the rest by grid search."""
    chosen, searches = {}, {}
    for task in spec.tasks:
        lt = LabelTask(task)
        mlp_search = None
        for kind in spec.models:
            key = f"{kind}/{task}"
            given = spec.hyperparameters.get(key, spec.hyperparameters.get(kind))
            if given is not None:
                chosen[key] = Hyperparameters.from_dict(given)
                continue
            if kind == "linear" and mlp_search is not None:
                res = linear_from_mlp(mlp_search)
            else:
                res = grid_search(kind, train, lt, spec.grid, spec.model_seed, spec.folds, jobs,
                                  spec.tune_row_cap)
            if kind == "mlp":
                mlp_search = res
            searches[key] = res
            chosen[key] = res.best
    return chosen, searches


def run_experiment(spec: ExperimentSpec, store: ScenarioStore, jobs: int = 1) -> ExperimentResult:
    values = spec.cell_values()
    dts = sorted({spec.cell_params(v)[0] for v in values})
    needed = [c for dt in dts for c in spec.training_configs(dt)]
    needed += [c for v in values for s in spec.test_seeds for c in spec.test_configs(v, s)]
    try:
        store.ensure(needed, jobs)
    except Exception:  # noqa: BLE001 - individual cells are retried below and marked absent
        log.exception("batch simulation failed; falling back to per-cell generation")

    reports: list[EvalReport] = []
    absent: list[dict[str, Any]] = []
    tuning: dict[str, SearchResult] = {}
    trained: dict[str, Model] = {}
    if not spec.models:
        return ExperimentResult(spec, reports, tuning, absent)
    for dt in dts:
        train = store.merged(spec.training_configs(dt))
        hps, searches = resolve_hyperparameters(spec, train, jobs)
        tuning.update({f"dt{dt:g}/{k}": v for k, v in searches.items()})
        for task in spec.tasks:
            for kind in spec.models:
                key = f"{kind}/{task}"
                trained[f"dt{dt:g}/{key}"] = train_model(kind, train, LabelTask(task), hps[key],
                                                         spec.model_seed)
        for value in values:
            cdt, count, pause = spec.cell_params(value)
            if cdt != dt:
                continue
            for seed in spec.test_seeds:
                cell = {"sweep": spec.sweep, "dt": cdt, "malicious_count": count,
                        "pause_time": pause, "seed": seed}
                try:
                    test = store.merged(spec.test_configs(value, seed))
                except Exception as exc:  # noqa: BLE001
                    log.warning("cell %s absent: %s", cell, exc)
                    absent.append({**cell, "reason": str(exc)})
                    continue
                for task in spec.tasks:
                    for kind in spec.models:
                        model = trained[f"dt{dt:g}/{kind}/{task}"]
                        reports.append(evaluate(model, test, cell))
    return ExperimentResult(spec, reports, tuning, absent, trained)


AXES = ("dt", "malicious_count", "pause_time")
METRICS = ("error", "dr", "fa")


def summarize(reports: list[EvalReport]) -> list[dict[str, Any]]:
    """Average/min/max over seeds for each (cell, model, task), and over models per (cell, task)."""
    groups: dict[tuple, list[EvalReport]] = {}
    for r in reports:
        axes = tuple(r.cell.get(a) for a in AXES)
        groups.setdefault(axes + (r.model_kind, r.task), []).append(r)
        groups.setdefault(axes + ("all", r.task), []).append(r)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        members = groups[key]
        row = dict(zip(AXES + ("model", "task"), key))
        row["n"] = len(members)
        for metric in METRICS:
            vals = [getattr(r, metric) for r in members if getattr(r, metric) is not None]
            if vals:
                row[f"{metric}_avg"] = float(np.mean(vals))
                row[f"{metric}_min"] = float(np.min(vals))
                row[f"{metric}_max"] = float(np.max(vals))
        rows.append(row)
    return rows


TABLE_HEADER = ("dt", "malicious_count", "pause_time", "seed", "model", "task", "metric", "value")


def report_rows(reports: list[EvalReport]) -> list[tuple]:
    """Flat plot-ready rows, one per (report, metric)."""
    rows = []
    for r in reports:
        base = (r.cell.get("dt"), r.cell.get("malicious_count"), r.cell.get("pause_time"),
                r.cell.get("seed"), r.model_kind, r.task)
        for metric in METRICS:
            v = getattr(r, metric)
            if v is not None:
                rows.append(base + (metric, v))
        for attack, v in sorted(r.per_attack.items()):
            rows.append(base + (f"dr_{attack}", v))
    return rows


def write_table(reports: list[EvalReport], path) -> int:
    rows = report_rows(reports)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for row in rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return len(rows)


SUMMARY_HEADER = ("dt", "malicious_count", "pause_time", "model", "task", "n") + tuple(
    f"{m}_{s}" for m in METRICS for s in ("avg", "min", "max"))


def write_summary(reports: list[EvalReport], path) -> int:
    rows = summarize(reports)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SUMMARY_HEADER, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return len(rows)
