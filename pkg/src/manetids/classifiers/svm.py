"""Soft-margin SVM with a gaussian kernel, solved by SMO, combined one-vs-one.

The kernel keeps its normalising prefactor:
``k(a, b) = exp(-|a - b|^2 / sigma^2) / (sqrt(2 pi) sigma)``.

The solver follows the usual SMO scheme with second-order working-set
selection; it stops once the maximal KKT violation between the "up" and
"low" index sets drops below the tolerance.
"""

from __future__ import annotations

import logging
import math
from itertools import combinations

import numpy as np

from ..sim.kernels import njit
from .base import Hyperparameters, LabelTask, Model, TrainingError, arr, register

log = logging.getLogger(__name__)

KKT_TOL = 1e-3
SV_EPS = 1e-8
ROW_CAP = 1000
TAU = 1e-12


def kernel_eval(a, b, sigma: float) -> float:
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return math.exp(-float(diff @ diff) / sigma ** 2) / (math.sqrt(2.0 * math.pi) * sigma)


def kernel_matrix(A: np.ndarray, B: np.ndarray, sigma: float, scale: float | None = None) -> np.ndarray:
    """Gram matrix between rows of A and B. ``scale`` overrides the prefactor."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if scale is None:
        scale = 1.0 / (math.sqrt(2.0 * math.pi) * sigma)
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return scale * np.exp(-sq / sigma ** 2)


@njit(cache=True)
def smo(K, y, C, tol, max_iter):
    """Solve min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0 with Q = yy' * K.

    Returns (alpha, grad, iterations, gap). ``gap`` above ``tol`` means the
    iteration cap was hit.
    """
    n = y.size
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    gap = np.inf
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        # j: second-order choice in I_low
        gmax2 = -np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = y[t] * G[t]
                if v > gmax2:
                    gmax2 = v
                diff = gmax + v
                if diff > 0 and i >= 0:
                    quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if quad <= 0:
                        quad = TAU
                    obj = -(diff * diff) / quad
                    if obj < best:
                        best = obj
                        j = t
        gap = gmax + gmax2
        if gap < tol or i < 0 or j < 0:
            break
        it += 1
        yi = y[i]
        yj = y[j]
        Qij = yi * yj * K[i, j]
        ai = alpha[i]
        aj = alpha[j]
        if yi != yj:
            quad = K[i, i] + K[j, j] + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        di = alpha[i] - ai
        dj = alpha[j] - aj
        for t in range(n):
            G[t] += y[t] * (yi * K[t, i] * di + yj * K[t, j] * dj)
    return alpha, G, it, gap


def compute_rho(alpha, G, y, C) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yG[free].mean())
    upper = alpha >= C
    lower = alpha <= 0
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def kkt_residual(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, rho: float, C: float) -> float:
    """Largest violation of the pointwise KKT conditions, in margin units."""
    margin = y * (K @ (alpha * y) - rho)
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~(at_zero | at_c)
    viol = np.zeros_like(margin)
    viol[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    viol[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    viol[free] = np.abs(margin[free] - 1.0)
    return float(viol.max()) if viol.size else 0.0


class BinarySvm:
    """One binary subproblem: positives are ``a``, negatives ``b``."""

    __slots__ = ("a", "b", "sv", "coef", "rho", "residual", "iterations")

    def __init__(self, a, b, sv, coef, rho, residual=0.0, iterations=0):
        self.a, self.b = a, b
        self.sv = sv          # row indices into the model's support-vector table
        self.coef = coef      # alpha_i * y_i
        self.rho = rho
        self.residual = residual
        self.iterations = iterations


def fit_binary(X: np.ndarray, y: np.ndarray, sigma: float, C: float, tol: float = KKT_TOL,
               scale: float | None = None, max_iter: int | None = None):
    """Returns (alpha, rho, residual, iterations) for labels y in {+1, -1}."""
    K = kernel_matrix(X, X, sigma, scale)
    n = len(y)
    if max_iter is None:
        max_iter = max(1_000_000, 100 * n)
    yf = y.astype(float)
    alpha, G, it, gap = smo(K, yf, float(C), tol, max_iter)
    if gap >= tol:
        raise TrainingError(f"SMO hit {max_iter} iterations with KKT gap {gap:.3g}")
    alpha[alpha < SV_EPS] = 0.0
    rho = compute_rho(alpha, G, yf, C)
    residual = kkt_residual(K, yf, alpha, rho, C)
    return alpha, rho, residual, it


def cap_rows(idx: np.ndarray, cap: int | None, rng: np.random.Generator) -> np.ndarray:
    if cap is None or len(idx) <= cap:
        return idx
    return np.sort(rng.choice(idx, size=cap, replace=False))


@register
class SvmModel(Model):
    kind = "svm"
    probabilistic = False

    def __init__(self, task, hp, dim, standardizer=None, vectors=None, machines=None,
                 default_class=0):
        super().__init__(task, hp, dim, standardizer)
        self.vectors = vectors
        self.machines: list[BinarySvm] = machines or []
        self.default_class = default_class

    def decisions(self, Z: np.ndarray) -> np.ndarray:
        """Decision value of every pairwise machine, shape (n, n_machines)."""
        out = np.zeros((Z.shape[0], len(self.machines)))
        if not self.machines:
            return out
        for start in range(0, Z.shape[0], 4096):
            Kz = kernel_matrix(Z[start:start + 4096], self.vectors, self.hp.sigma)
            for m, mach in enumerate(self.machines):
                out[start:start + 4096, m] = Kz[:, mach.sv] @ mach.coef - mach.rho
        return out

    def votes(self, Z: np.ndarray):
        C = self.task.n_classes
        dec = self.decisions(Z)
        votes = np.zeros((Z.shape[0], C))
        sums = np.zeros((Z.shape[0], C))
        for m, mach in enumerate(self.machines):
            f = dec[:, m]
            win_a = f >= 0
            votes[:, mach.a] += win_a
            votes[:, mach.b] += ~win_a
            sums[:, mach.a] += f
            sums[:, mach.b] -= f
        if not self.machines:
            votes[:, self.default_class] = 1
        return votes, sums

    def _scores(self, Z):
        return self.votes(Z)[0]

    def predict(self, X):
        votes, sums = self.votes(self._prepare(X))
        top = votes.max(axis=1, keepdims=True)
        # among the vote leaders take the largest summed decision value, then the earlier label
        masked = np.where(votes == top, sums, -np.inf)
        return np.argmax(masked, axis=1)

    def _params(self):
        return {
            "vectors": arr(self.vectors),
            "default_class": self.default_class,
            "machines": [{"a": m.a, "b": m.b, "sv": arr(m.sv), "coef": arr(m.coef),
                          "rho": m.rho, "residual": m.residual, "iterations": m.iterations}
                         for m in self.machines],
        }

    @classmethod
    def _from_params(cls, task, hp, dim, standardizer, params):
        machines = [BinarySvm(m["a"], m["b"], np.array(m["sv"], dtype=np.int64),
                              np.array(m["coef"], dtype=float), m["rho"], m["residual"],
                              m["iterations"]) for m in params["machines"]]
        vectors = np.array(params["vectors"], dtype=float).reshape(-1, dim)
        return cls(task, hp, dim, standardizer, vectors, machines, params["default_class"])


def train_svm(X, y, task: LabelTask, hp: Hyperparameters, seed: int = 0, standardizer=None,
              row_cap: int | None = ROW_CAP, tol: float = KKT_TOL) -> SvmModel:
    """One machine per pair of classes present in ``y``.

    Each class contributes at most ``row_cap`` rows (seeded draw) to the
    subproblems it takes part in.
    """
    hp.require("sigma", "c")
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise TrainingError("no training rows")
    rng = np.random.Generator(np.random.PCG64(seed))
    present = [c for c in range(task.n_classes) if (y == c).any()]
    rows = {c: cap_rows(np.flatnonzero(y == c), row_cap, rng) for c in present}
    table: dict[int, int] = {}
    vectors = []
    machines = []
    for a, b in combinations(present, 2):
        idx = np.concatenate([rows[a], rows[b]])
        yy = np.where(y[idx] == a, 1, -1)
        alpha, rho, residual, it = fit_binary(X[idx], yy, hp.sigma, hp.c, tol)
        keep = np.flatnonzero(alpha > 0)
        sv = []
        for k in keep:
            src = int(idx[k])
            if src not in table:
                table[src] = len(vectors)
                vectors.append(X[src])
            sv.append(table[src])
        machines.append(BinarySvm(a, b, np.array(sv, dtype=np.int64), alpha[keep] * yy[keep],
                                  rho, residual, it))
        log.debug("svm %s/%s: %d SVs, %d iterations, residual %.2g",
                  task.classes[a], task.classes[b], len(keep), it, residual)
    vecs = np.array(vectors) if vectors else np.zeros((0, X.shape[1]))
    return SvmModel(task, hp, X.shape[1], standardizer, vecs, machines, present[0])
