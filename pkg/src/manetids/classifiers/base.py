"""Shared pieces of the five learners: label tasks, hyperparameters, model base class."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Any, ClassVar

import numpy as np

from ..features import LABELS, Standardizer

MODEL_FORMAT = 1


class TrainingError(RuntimeError):
    pass


class TaskMode(str, Enum):
    BINARY = "binary"
    MULTICLASS = "multiclass"


@dataclass(frozen=True)
class LabelTask:
    mode: TaskMode = TaskMode.MULTICLASS

    def __post_init__(self):
        object.__setattr__(self, "mode", TaskMode(self.mode))

    @property
    def classes(self) -> tuple[str, ...]:
        if self.mode is TaskMode.BINARY:
            return ("normal", "attack")
        return LABELS

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def encode(self, labels) -> np.ndarray:
        """Raw dataset labels to class indices. All attacks map to 1 in binary mode."""
        out = np.empty(len(labels), dtype=np.int64)
        lookup = {name: i for i, name in enumerate(LABELS)}
        for i, lab in enumerate(labels):
            try:
                code = lookup[lab]
            except KeyError:
                raise ValueError(f"unknown label {lab!r}") from None
            out[i] = code if self.mode is TaskMode.MULTICLASS else int(code != 0)
        return out


BINARY = LabelTask(TaskMode.BINARY)
MULTICLASS = LabelTask(TaskMode.MULTICLASS)


@dataclass(frozen=True)
class Hyperparameters:
    """Union of the per-model knobs; unused ones stay None.

    MLP/Linear use (eta, T, nh), GMM uses (theta, T, ng), SVM uses (sigma, c).
    """

    eta: float | None = None
    T: int | None = None
    nh: int | None = None
    theta: float | None = None
    ng: int | None = None
    sigma: float | None = None
    c: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Hyperparameters:
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown hyperparameters {sorted(extra)}")
        return cls(**d)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValueError(f"missing hyperparameters {missing}")


class Model:
    """Trained classifier. ``predict``/``scores`` take raw features when a
    standardizer is attached, otherwise features are used as given."""

    kind: ClassVar[str] = ""
    probabilistic: ClassVar[bool] = True

    def __init__(self, task: LabelTask, hp: Hyperparameters, dim: int,
                 standardizer: Standardizer | None = None):
        self.task = task
        self.hp = hp
        self.dim = dim
        self.standardizer = standardizer
        # interval of the training rows; None when trained on bare arrays
        self.sampling_interval: float | None = None

    # subclasses implement _scores on standardized input
    def _scores(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _prepare(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[1]}")
        if self.standardizer is not None:
            X = self.standardizer.apply(X)
        return X

    def scores(self, X) -> np.ndarray:
        """Class posteriors (probabilistic models) or vote/decision scores (SVM)."""
        return self._scores(self._prepare(X))

    def predict(self, X) -> np.ndarray:
        # argmax takes the first maximum, i.e. ties go to the earlier label
        return np.argmax(self.scores(X), axis=1)

    def predict_one(self, x) -> tuple[str, np.ndarray]:
        """Class label plus the score vector for one feature vector."""
        return self.task.classes[int(self.predict(x)[0])], self.scores(x)[0]

    # -- serialization --------------------------------------------------

    def _params(self) -> dict[str, Any]:
        raise NotImplementedError

    @classmethod
    def _from_params(cls, task, hp, dim, standardizer, params):
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "kind": self.kind,
            "task": self.task.mode.value,
            "dim": self.dim,
            "sampling_interval": self.sampling_interval,
            "hyperparameters": self.hp.to_dict(),
            "standardizer": None if self.standardizer is None else self.standardizer.to_dict(),
            "params": self._params(),
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, Model):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def arr(a) -> list:
    return np.asarray(a).tolist()


REGISTRY: dict[str, type[Model]] = {}


def register(cls: type[Model]) -> type[Model]:
    REGISTRY[cls.kind] = cls
    return cls


def model_from_dict(d: dict[str, Any]) -> Model:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {d.get('format')!r}")
    try:
        cls = REGISTRY[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {d.get('kind')!r}") from None
    std = None if d["standardizer"] is None else Standardizer.from_dict(d["standardizer"])
    model = cls._from_params(LabelTask(d["task"]), Hyperparameters.from_dict(d["hyperparameters"]),
                             int(d["dim"]), std, d["params"])
    model.sampling_interval = d.get("sampling_interval")
    return model


def save_model(model: Model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1, sort_keys=True), encoding="utf-8")


def load_model(path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
