"""Class-conditional diagonal Gaussian mixtures fitted by EM.

Each class gets its own mixture; prediction is Bayes' rule over classes.
One component per class is the Naive Bayes model, fitted in closed form.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from ..sim.kernels import njit
from .base import Hyperparameters, LabelTask, Model, TrainingError, arr, register

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
LLOYD_ROUNDS = 20


@njit(cache=True)
def log_gauss(X, means, var):
    """``out[i, k] = log N(X[i]; means[k], diag(var[k]))``."""
    n, d = X.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for c in range(k):
        norm = 0.0
        for j in range(d):
            norm += math.log(var[c, j])
        norm = -0.5 * (norm + d * LOG_2PI)
        for i in range(n):
            s = 0.0
            for j in range(d):
                diff = X[i, j] - means[c, j]
                s += diff * diff / var[c, j]
            out[i, c] = norm - 0.5 * s
    return out


@njit(cache=True)
def weighted_moments(X, R, old_means, old_var):
    """M-step sufficient statistics; components with no mass keep their old values."""
    n, d = X.shape
    k = R.shape[1]
    mass = np.zeros(k)
    means = old_means.copy()
    var = old_var.copy()
    for c in range(k):
        for i in range(n):
            mass[c] += R[i, c]
        if mass[c] <= 0.0:
            continue
        for j in range(d):
            s = 0.0
            for i in range(n):
                s += R[i, c] * X[i, j]
            means[c, j] = s / mass[c]
        for j in range(d):
            s = 0.0
            for i in range(n):
                diff = X[i, j] - means[c, j]
                s += R[i, c] * diff * diff
            var[c, j] = s / mass[c]
    return mass, means, var


def logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(top, axis=axis) + np.log(np.exp(a - top).sum(axis=axis))


def kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding followed by a few Lloyd rounds. ``X`` must have >= k distinct rows."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        centers[c] = X[rng.choice(n, p=d2 / d2.sum())]
        d2 = np.minimum(d2, ((X - centers[c]) ** 2).sum(axis=1))
    assign = None
    for _ in range(LLOYD_ROUNDS):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2) if n * k < 2_000_000 \
            else _chunked_dist(X, centers)
        new = dist.argmin(axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for c in range(k):
            members = X[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return centers


def _chunked_dist(X, centers, chunk=20000):
    out = np.empty((X.shape[0], centers.shape[0]))
    for s in range(0, X.shape[0], chunk):
        out[s:s + chunk] = ((X[s:s + chunk, None, :] - centers[None]) ** 2).sum(axis=2)
    return out


def fit_mixture(X: np.ndarray, k: int, theta: float, T: int, floor: np.ndarray,
                rng: np.random.Generator):
    """EM for one class. Returns (weights, means, var, log-likelihood history)."""
    n = X.shape[0]
    if k == 1:
        means = X.mean(axis=0, keepdims=True)
        var = np.maximum(((X - means) ** 2).mean(axis=0, keepdims=True), floor)
        weights = np.ones(1)
        ll = float(log_gauss(X, means, var).sum())
        return weights, means, var, [ll]
    means = kmeans_pp(X, k, rng)
    assign = ((X[:, None, :] - means[None]) ** 2).sum(axis=2).argmin(axis=1) \
        if n * k < 2_000_000 else _chunked_dist(X, means).argmin(axis=1)
    R = np.zeros((n, k))
    R[np.arange(n), assign] = 1.0
    weights, means, var = _m_step(X, R, means, np.tile(X.var(axis=0), (k, 1)), floor)
    history = []
    prev = None
    for it in range(T + 1):
        with np.errstate(divide="ignore"):
            joint = log_gauss(X, means, var) + np.log(weights)
        per_row = logsumexp(joint, axis=1)
        ll = float(per_row.sum())
        history.append(ll)
        if prev is not None and (ll - prev) < theta * abs(prev):
            break
        if it == T:
            break
        prev = ll
        R = np.exp(joint - per_row[:, None])
        weights, means, var = _m_step(X, R, means, var, floor)
    return weights, means, var, history


def _m_step(X, R, means, var, floor):
    mass, means, var = weighted_moments(X, np.ascontiguousarray(R), means, var)
    var = np.maximum(var, floor)
    return mass / mass.sum(), means, var


@register
class GmmModel(Model):
    kind = "gmm"

    def __init__(self, task, hp, dim, standardizer=None, priors=None, components=None):
        super().__init__(task, hp, dim, standardizer)
        self.priors = priors
        # one (weights, means, var) triple per class; None for classes never seen
        self.components = components
        self.reductions: dict[str, int] = {}
        self.ll_history: dict[str, list[float]] = {}

    def class_log_likelihood(self, Z: np.ndarray) -> np.ndarray:
        out = np.full((Z.shape[0], self.task.n_classes), -np.inf)
        for c, comp in enumerate(self.components):
            if comp is None:
                continue
            w, mu, var = comp
            with np.errstate(divide="ignore"):
                out[:, c] = logsumexp(log_gauss(Z, mu, var) + np.log(w), axis=1)
        return out

    def _scores(self, Z):
        with np.errstate(divide="ignore"):
            joint = self.class_log_likelihood(Z) + np.log(self.priors)
        return np.exp(joint - logsumexp(joint, axis=1)[:, None])

    def _params(self):
        comps = [None if c is None else {"weights": arr(c[0]), "means": arr(c[1]), "var": arr(c[2])}
                 for c in self.components]
        return {"priors": arr(self.priors), "components": comps}

    @classmethod
    def _from_params(cls, task, hp, dim, standardizer, params):
        comps = [None if c is None else (np.array(c["weights"], dtype=float),
                                         np.array(c["means"], dtype=float).reshape(-1, dim),
                                         np.array(c["var"], dtype=float).reshape(-1, dim))
                 for c in params["components"]]
        return cls(task, hp, dim, standardizer, np.array(params["priors"], dtype=float), comps)


@register
class NaiveBayesModel(GmmModel):
    kind = "nb"


def variance_floor(X: np.ndarray) -> np.ndarray:
    return np.maximum(1e-6 * X.var(axis=0), 1e-9)


def train_gmm(X, y, task: LabelTask, hp: Hyperparameters, seed: int = 0, standardizer=None,
              require_all: bool = True, _cls: type[GmmModel] = GmmModel) -> GmmModel:
    """Fit ``hp.ng`` components per class (fewer if a class lacks distinct rows).

    With ``require_all`` every class of the task must appear in ``y``;
    otherwise missing classes get prior 0 and are never predicted.
    """
    hp.require("ng")
    ng = int(hp.ng)
    theta = 0.0 if hp.theta is None else float(hp.theta)
    T = 0 if hp.T is None else int(hp.T)
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise TrainingError("no training rows")
    floor = variance_floor(X)
    rng = np.random.Generator(np.random.PCG64(seed))
    counts = np.bincount(y, minlength=task.n_classes)
    priors = counts / counts.sum()
    comps = []
    model = _cls(task, hp, X.shape[1], standardizer, priors, comps)
    for c, name in enumerate(task.classes):
        Xc = X[y == c]
        if len(Xc) == 0:
            if require_all:
                raise TrainingError(f"class {name!r} has no training rows")
            comps.append(None)
            continue
        k = ng
        if k > 1:
            distinct = len(np.unique(Xc, axis=0))
            if distinct < k:
                k = distinct
                model.reductions[name] = k
                log.info("class %s: %d distinct rows, components reduced %d -> %d",
                         name, distinct, ng, k)
        w, mu, var, hist = fit_mixture(Xc, k, theta, T, floor, rng)
        comps.append((w, mu, var))
        model.ll_history[name] = hist
    return model


def train_naive_bayes(X, y, task: LabelTask, seed: int = 0, standardizer=None,
                      require_all: bool = True) -> GmmModel:
    return train_gmm(X, y, task, Hyperparameters(ng=1), seed, standardizer, require_all,
                     NaiveBayesModel)
