"""k-fold cross validation and the staged hyperparameter search."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from ..classifiers import Hyperparameters, LabelTask, TrainingError, fit
from ..features import Dataset, Standardizer
from .metrics import classification_error

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    eta: tuple[float, ...] = (0.0001, 0.001, 0.01, 0.1)
    mlp_T: tuple[int, ...] = (10, 100, 500, 1000)
    nh: tuple[int, ...] = (10, 20, 40, 60, 80, 100, 120, 140, 160, 320)
    theta: tuple[float, ...] = (0.0001, 0.001, 0.01, 0.1)
    gmm_T: tuple[int, ...] = (25, 100, 500, 1000)
    ng: tuple[int, ...] = (10, 20, 40, 60, 80, 100, 120, 140, 160, 320)
    sigma: tuple[float, ...] = (1, 10, 100, 1000)
    c: tuple[float, ...] = (1, 10, 100, 1000)
    # structural values held fixed during the first stage
    stage1_ng: int = 20

    @classmethod
    def reduced(cls) -> GridSpec:
        """Iterations capped at 100 and three structural sizes."""
        return cls(mlp_T=(10, 100), gmm_T=(25, 100), nh=(10, 20, 40), ng=(10, 20, 40))

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> GridSpec:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def kfold_split(n: int, k: int = 10, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded permutation cut into k folds; the first ``n % k`` folds get one extra row."""
    if n < k:
        raise ValueError(f"need at least k = {k} rows, got {n}")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i, val in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append((np.sort(train), np.sort(val)))
    return out


def stratified_cap(labels, cap: int | None, seed: int) -> np.ndarray:
    """Row indices keeping at most ``cap`` rows of each label (seeded), in original order."""
    labels = np.asarray(labels, dtype=object)
    if cap is None:
        return np.arange(len(labels))
    rng = np.random.Generator(np.random.PCG64(seed))
    keep = []
    for name in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == name)
        if len(idx) > cap:
            idx = rng.choice(idx, size=cap, replace=False)
        keep.append(idx)
    return np.sort(np.concatenate(keep))


@dataclass
class CandidateScore:
    stage: int
    hyperparameters: Hyperparameters
    fold_errors: list[float] = field(default_factory=list)
    mean_error: float | None = None
    failure: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"stage": self.stage, "hyperparameters": self.hyperparameters.to_dict(),
                "fold_errors": list(self.fold_errors), "mean_error": self.mean_error,
                "failure": self.failure}

    @classmethod
    def from_dict(cls, d):
        return cls(d["stage"], Hyperparameters.from_dict(d["hyperparameters"]),
                   d["fold_errors"], d["mean_error"], d["failure"])


@dataclass
class SearchResult:
    kind: str
    task: str
    best: Hyperparameters
    table: list[CandidateScore]

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "task": self.task, "best": self.best.to_dict(),
                "table": [c.to_dict() for c in self.table]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["task"], Hyperparameters.from_dict(d["best"]),
                   [CandidateScore.from_dict(c) for c in d["table"]])


class SearchFailure(RuntimeError):
    pass


def _fold_error(args) -> tuple[float | None, str | None]:
    kind, X, y, task, hp, train, val, seed = args
    std = Standardizer.fit(X[train])
    try:
        model = fit(kind, std.apply(X[train]), y[train], task, hp, seed)
    except (TrainingError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return None, str(exc)
    return classification_error(model.predict(std.apply(X[val])), y[val]), None


def score_candidates(kind, X, y, task, cands, folds, seed, jobs, stage) -> list[CandidateScore]:
    work = [(kind, X, y, task, hp, tr, va, seed) for hp in cands for tr, va in folds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fold_error, work, chunksize=1))
    else:
        results = [_fold_error(w) for w in work]
    scores = []
    k = len(folds)
    for i, hp in enumerate(cands):
        chunk = results[i * k:(i + 1) * k]
        cs = CandidateScore(stage, hp)
        failed = [msg for err, msg in chunk if msg is not None]
        if failed:
            cs.failure = failed[0]
            log.warning("%s %s disqualified: %s", kind, hp.to_dict(), failed[0])
        else:
            cs.fold_errors = [err for err, _ in chunk]
            cs.mean_error = float(np.mean(cs.fold_errors))
        scores.append(cs)
    return scores


def pick(scores: list[CandidateScore]) -> CandidateScore:
    """Lowest mean error; candidates arrive in ascending parameter order so the
    first of equal scores is the smaller setting."""
    best = None
    for s in scores:
        if s.mean_error is None:
            continue
        if best is None or s.mean_error < best.mean_error:
            best = s
    if best is None:
        raise SearchFailure("every candidate failed: " +
                            "; ".join(f"{s.hyperparameters.to_dict()}: {s.failure}" for s in scores))
    return best


def grid_search(kind: str, data: Dataset, task: LabelTask, grid: GridSpec | None = None,
                seed: int = 0, k: int = 10, jobs: int = 1,
                row_cap: int | None = None) -> SearchResult:
    """Staged search by mean k-fold CV error.

    MLP: (eta, T) at nh = 0, then nh. Linear: the first MLP stage only.
    GMM: (theta, T) at ng = grid.stage1_ng, then ng. SVM: (sigma, c) in one
    stage. NB has nothing to tune and is scored once.
    """
    grid = grid or GridSpec()
    keep = stratified_cap(data.labels, row_cap, seed)
    X = data.X[keep]
    y = task.encode(data.labels[keep])
    folds = kfold_split(len(y), k, seed)
    run = lambda cands, stage: score_candidates(kind, X, y, task, cands, folds, seed, jobs, stage)

    if kind in ("mlp", "linear"):
        table = run([Hyperparameters(eta=e, T=t, nh=0) for e in grid.eta for t in grid.mlp_T], 1)
        best = pick(table).hyperparameters
        if kind == "mlp":
            stage2 = run([Hyperparameters(eta=best.eta, T=best.T, nh=h) for h in grid.nh], 2)
            table += stage2
            best = pick(stage2).hyperparameters
    elif kind == "gmm":
        table = run([Hyperparameters(theta=th, T=t, ng=grid.stage1_ng)
                     for th in grid.theta for t in grid.gmm_T], 1)
        best = pick(table).hyperparameters
        stage2 = run([Hyperparameters(theta=best.theta, T=best.T, ng=g) for g in grid.ng], 2)
        table += stage2
        best = pick(stage2).hyperparameters
    elif kind == "svm":
        table = run([Hyperparameters(sigma=s, c=c) for s in grid.sigma for c in grid.c], 1)
        best = pick(table).hyperparameters
    elif kind == "nb":
        table = run([Hyperparameters()], 1)
        best = pick(table).hyperparameters
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    log.info("%s/%s best %s", kind, task.mode.value, best.to_dict())
    return SearchResult(kind, task.mode.value, best, table)


def linear_from_mlp(result: SearchResult) -> SearchResult:
    """The linear model's search is the first stage of the MLP search."""
    stage1 = [c for c in result.table if c.stage == 1]
    return SearchResult("linear", result.task, pick(stage1).hyperparameters, stage1)
