"""One-hidden-layer perceptron with softmax output, trained by plain SGD.

With ``nh = 0`` the hidden layer disappears and the same code is softmax
regression, which is what the Linear model is.

Parameters are stored with the bias as the last column:
``V`` is ``(nh, d + 1)`` and ``W`` is ``(C, m + 1)`` with ``m = nh or d``.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from ..sim.kernels import njit
from .base import Hyperparameters, LabelTask, Model, TrainingError, arr, register

log = logging.getLogger(__name__)


@njit(cache=True)
def sgd_epoch(X, y, order, V, W, eta):
    """One pass of per-sample SGD in ``order``; updates V and W in place.

    Returns the mean cross-entropy seen before each update.
    """
    nh = V.shape[0]
    d = X.shape[1]
    C = W.shape[0]
    z = np.empty(nh)
    p = np.empty(C)
    dz = np.empty(nh)
    loss = 0.0
    for t in range(order.size):
        i = order[t]
        x = X[i]
        for h in range(nh):
            a = V[h, d]
            for j in range(d):
                a += V[h, j] * x[j]
            z[h] = math.tanh(a)
        inp = x if nh == 0 else z
        m = inp.size
        top = -np.inf
        for c in range(C):
            s = W[c, m]
            for j in range(m):
                s += W[c, j] * inp[j]
            p[c] = s
            if s > top:
                top = s
        tot = 0.0
        for c in range(C):
            p[c] = math.exp(p[c] - top)
            tot += p[c]
        loss -= math.log(p[y[i]] / tot)
        for c in range(C):
            p[c] /= tot
        p[y[i]] -= 1.0
        if nh > 0:
            for h in range(nh):
                s = 0.0
                for c in range(C):
                    s += W[c, h] * p[c]
                dz[h] = s * (1.0 - z[h] * z[h])
        for c in range(C):
            g = eta * p[c]
            for j in range(m):
                W[c, j] -= g * inp[j]
            W[c, m] -= g
        for h in range(nh):
            g = eta * dz[h]
            for j in range(d):
                V[h, j] -= g * x[j]
            V[h, d] -= g
    return loss / max(order.size, 1)


def forward(V: np.ndarray, W: np.ndarray, X: np.ndarray):
    """Batch forward pass: returns (hidden activations, class probabilities)."""
    ones = np.ones((X.shape[0], 1))
    if V.shape[0]:
        Z = np.tanh(np.hstack([X, ones]) @ V.T)
    else:
        Z = X
    logits = np.hstack([Z, ones]) @ W.T
    logits -= logits.max(axis=1, keepdims=True)
    P = np.exp(logits)
    P /= P.sum(axis=1, keepdims=True)
    return Z, P


def loss_and_grad(V, W, X, y):
    """Mean cross-entropy and its gradient w.r.t. (V, W), by backpropagation."""
    n = X.shape[0]
    ones = np.ones((n, 1))
    Z, P = forward(V, W, X)
    loss = -np.mean(np.log(P[np.arange(n), y]))
    G = P.copy()
    G[np.arange(n), y] -= 1.0
    G /= n
    dW = G.T @ np.hstack([Z, ones])
    if V.shape[0]:
        dA = (G @ W[:, :-1]) * (1.0 - Z ** 2)
        dV = dA.T @ np.hstack([X, ones])
    else:
        dV = np.zeros_like(V)
    return loss, dV, dW


def init_weights(d: int, nh: int, C: int, rng: np.random.Generator):
    m = nh or d
    V = rng.uniform(-1.0, 1.0, size=(nh, d + 1)) / math.sqrt(d + 1)
    W = rng.uniform(-1.0, 1.0, size=(C, m + 1)) / math.sqrt(m + 1)
    return V, W


@register
class MlpModel(Model):
    kind = "mlp"

    def __init__(self, task, hp, dim, standardizer=None, V=None, W=None):
        super().__init__(task, hp, dim, standardizer)
        self.V = V
        self.W = W
        self.loss_history: list[float] = []

    @property
    def nh(self) -> int:
        return self.V.shape[0]

    def _scores(self, Z):
        return forward(self.V, self.W, Z)[1]

    def _params(self):
        return {"V": arr(self.V), "W": arr(self.W)}

    @classmethod
    def _from_params(cls, task, hp, dim, standardizer, params):
        V = np.array(params["V"], dtype=float).reshape(-1, dim + 1)
        W = np.array(params["W"], dtype=float).reshape(task.n_classes, -1)
        return cls(task, hp, dim, standardizer, V, W)


@register
class LinearModel(MlpModel):
    kind = "linear"


def train_mlp(X, y, task: LabelTask, hp: Hyperparameters, seed: int = 0,
              standardizer=None) -> MlpModel:
    """SGD on cross-entropy for ``hp.T`` epochs, reshuffling each epoch.

    ``X`` must already be standardized; ``standardizer`` is only attached to
    the returned model for later raw-feature prediction.
    """
    hp.require("eta", "T", "nh")
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise TrainingError("no training rows")
    rng = np.random.Generator(np.random.PCG64(seed))
    V, W = init_weights(X.shape[1], hp.nh, task.n_classes, rng)
    cls = LinearModel if hp.nh == 0 else MlpModel
    model = cls(task, hp, X.shape[1], standardizer, V, W)
    for epoch in range(hp.T):
        order = rng.permutation(X.shape[0])
        loss = sgd_epoch(X, y, order, V, W, float(hp.eta))
        if not (math.isfinite(loss) and np.isfinite(W).all() and np.isfinite(V).all()):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        model.loss_history.append(loss)
    log.debug("%s nh=%d eta=%g T=%d final loss %.4f", cls.kind, hp.nh, hp.eta, hp.T,
              model.loss_history[-1] if model.loss_history else float("nan"))
    return model


def train_linear(X, y, task, hp: Hyperparameters, seed: int = 0, standardizer=None) -> MlpModel:
    return train_mlp(X, y, task, Hyperparameters(eta=hp.eta, T=hp.T, nh=0), seed, standardizer)
