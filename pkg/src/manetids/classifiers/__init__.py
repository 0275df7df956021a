"""The five learners behind one interface.

``train_model`` standardizes the features, dispatches on the model kind and
attaches the standardizer so the result predicts from raw feature rows.
"""

from __future__ import annotations

import numpy as np

from ..features import Dataset, Standardizer
from .base import (BINARY, MULTICLASS, Hyperparameters, LabelTask, Model, TaskMode,
                   TrainingError, load_model, model_from_dict, save_model)
from .gmm import GmmModel, NaiveBayesModel, train_gmm, train_naive_bayes
from .mlp import LinearModel, MlpModel, train_linear, train_mlp
from .svm import SvmModel, kernel_eval, train_svm

MODEL_KINDS = ("mlp", "linear", "gmm", "nb", "svm")


def fit(kind: str, Z: np.ndarray, y: np.ndarray, task: LabelTask, hp: Hyperparameters,
        seed: int = 0, standardizer: Standardizer | None = None) -> Model:
    """Train on already-standardized features ``Z``."""
    if kind == "mlp":
        return train_mlp(Z, y, task, hp, seed, standardizer)
    if kind == "linear":
        return train_linear(Z, y, task, hp, seed, standardizer)
    if kind == "gmm":
        return train_gmm(Z, y, task, hp, seed, standardizer)
    if kind == "nb":
        return train_naive_bayes(Z, y, task, seed, standardizer)
    if kind == "svm":
        return train_svm(Z, y, task, hp, seed, standardizer)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {', '.join(MODEL_KINDS)}")


def train_model(kind: str, data: Dataset, task: LabelTask, hp: Hyperparameters,
                seed: int = 0) -> Model:
    std = Standardizer.fit(data.X)
    model = fit(kind, std.apply(data.X), task.encode(data.labels), task, hp, seed, std)
    model.sampling_interval = data.sampling_interval
    return model


__all__ = [
    "BINARY", "MULTICLASS", "MODEL_KINDS", "GmmModel", "Hyperparameters", "LabelTask",
    "LinearModel", "MlpModel", "Model", "NaiveBayesModel", "SvmModel", "TaskMode",
    "TrainingError", "fit", "kernel_eval", "load_model", "model_from_dict", "save_model",
    "train_gmm", "train_linear", "train_mlp", "train_model", "train_naive_bayes", "train_svm",
]
