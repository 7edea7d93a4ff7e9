"""Class-weighted linear classifiers trained by full-batch gradient descent.

The objective is ``sum_n w_n * loss_n + l2/2 * ||coef||^2`` (bias not
penalized). Each step moves by ``learning_rate / sum(w)`` times the gradient,
so rescaling all sample weights together with ``l2`` leaves the iterates
unchanged. The data term and its gradient are one engine aggregate per step.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import Aggregator, Engine, partition
from .prep import LabelScheme, get_scheme

LOGISTIC = "Logistic"
HINGE = "HingeSVM"


class LinearModelError(Exception):
    pass


class NonFiniteLoss(LinearModelError):
    pass


class DimensionMismatch(LinearModelError):
    pass


@dataclass
class LinearHyper:
    iterations: int = 200
    learning_rate: float = 0.5
    l2: float = 1e-4
    backtracking: bool = False


def default_hyper(kind: str) -> LinearHyper:
    return LinearHyper(learning_rate=0.5 if kind == LOGISTIC else 0.1)


# -- data terms -------------------------------------------------------------
# Each returns (loss, grad_coef, grad_bias) summed over rows of one block.

def logistic_terms(coef, bias, X, y, w):
    """Binary weighted log loss; ``y`` is 1 for the positive class, else 0."""
    z = X @ coef[0] + bias[0]
    loss = float(np.dot(w, np.logaddexp(0.0, z) - y * z))
    r = w * (_sigmoid(z) - y)
    return loss, (r @ X)[None, :], np.array([r.sum()])


def softmax_terms(coef, bias, X, y, w):
    """Multinomial weighted log loss; ``y`` holds class indices."""
    Z = X @ coef.T + bias
    m = Z.max(axis=1, keepdims=True)
    E = np.exp(Z - m)
    S = E.sum(axis=1, keepdims=True)
    lse = (m + np.log(S))[:, 0]
    loss = float(np.dot(w, lse - Z[np.arange(len(y)), y]))
    P = E / S
    P[np.arange(len(y)), y] -= 1.0
    R = P * w[:, None]
    return loss, R.T @ X, R.sum(axis=0)


def hinge_terms(coef, bias, X, Y, w):
    """Weighted hinge loss for a bank of hyperplanes; ``Y`` is (n, k) of +-1."""
    Z = X @ coef.T + bias
    M = 1.0 - Y * Z
    active = M > 0
    loss = float(np.dot(w, np.where(active, M, 0.0).sum(axis=1)))
    D = np.where(active, -Y, 0.0) * w[:, None]
    return loss, D.T @ X, D.sum(axis=0)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def objective(terms, coef, bias, X, y, w, l2):
    """Full regularized objective and gradient on in-memory data."""
    loss, gc, gb = terms(coef, bias, X, y, w)
    return loss + 0.5 * l2 * float(np.sum(coef * coef)), gc + l2 * coef, gb


# -- model ------------------------------------------------------------------

@dataclass
class LinearModel:
    kind: str
    coef: np.ndarray  # (k, d)
    bias: np.ndarray  # (k,)
    scheme: LabelScheme
    hyper: LinearHyper
    loss_history: list = field(default_factory=list)
    schema_hash: str | None = None
    standardizer: dict | None = None

    @property
    def n_dims(self) -> int:
        return self.coef.shape[1]

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_dims:
            raise DimensionMismatch(f"expected {self.n_dims} dims, got {X.shape[1]}")
        return X @ self.coef.T + self.bias

    def scores(self, X) -> np.ndarray:
        Z = self.decision(X)
        k = self.scheme.n_classes
        if self.coef.shape[0] == 1 and k == 2:
            z = Z[:, 0]
            if self.kind == LOGISTIC:
                p = _sigmoid(z)
                return np.column_stack([p, 1.0 - p])
            return np.column_stack([z, -z])
        return Z

    def predict(self, X) -> np.ndarray:
        """Class indices; ``argmax`` keeps the first maximum, i.e. scheme order."""
        return np.argmax(self.scores(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "type": "linear",
            "kind": self.kind,
            "scheme": self.scheme.id,
            "coef": self.coef.tolist(),
            "bias": self.bias.tolist(),
            "hyper": asdict(self.hyper),
            "schema_hash": self.schema_hash,
            "standardizer": self.standardizer,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d) -> "LinearModel":
        return cls(d["kind"], np.array(d["coef"], dtype=np.float64), np.array(d["bias"], dtype=np.float64),
                   get_scheme(d["scheme"]), LinearHyper(**d["hyper"]),
                   schema_hash=d.get("schema_hash"), standardizer=d.get("standardizer"))


def predict_linear(model: LinearModel, vector):
    """``(label, per-class scores)`` for one vector."""
    s = model.scores(np.asarray(vector, dtype=np.float64)[None, :])[0]
    return model.scheme.classes[int(np.argmax(s))], s


def _targets(kind: str, scheme: LabelScheme, y: np.ndarray):
    k = scheme.n_classes
    if kind == LOGISTIC:
        if k == 2:
            return logistic_terms, (y == 0).astype(np.float64), 1
        return softmax_terms, y.astype(np.int64), k
    if k == 2:
        return hinge_terms, np.where(y == 0, 1.0, -1.0)[:, None], 1
    Y = np.where(y[:, None] == np.arange(k)[None, :], 1.0, -1.0)
    return hinge_terms, Y, k


def _fit(kind, X, y, w, scheme, hyper, partitions, engine):
    scheme = get_scheme(scheme)
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(w, dtype=np.float64)
    terms, target, k = _targets(kind, scheme, y)
    d = X.shape[1]
    engine = engine or Engine()
    pd = partition((X, target, w), partitions)

    def evaluate(coef, bias):
        agg = Aggregator(
            zero=lambda: (0.0, np.zeros((k, d)), np.zeros(k)),
            merge=lambda a, b: (a[0] + b[0], a[1] + b[1], a[2] + b[2]),
            lift_block=lambda blk: terms(coef, bias, *blk) if len(blk[0]) else (0.0, np.zeros((k, d)), np.zeros(k)),
        )
        # divergence is reported below, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            loss, gc, gb = engine.aggregate(pd, agg)
            loss += 0.5 * hyper.l2 * float(np.sum(coef * coef))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became {loss}; lower the learning rate")
        return loss, gc + hyper.l2 * coef, gb

    total_w = float(w.sum())
    if total_w <= 0:
        raise LinearModelError("sample weights must sum to a positive value")
    coef = np.zeros((k, d))
    bias = np.zeros(k)
    lr = hyper.learning_rate
    loss, gc, gb = evaluate(coef, bias)
    history = [loss]
    for _ in range(hyper.iterations):
        step = lr / total_w
        new_coef, new_bias = coef - step * gc, bias - step * gb
        new = evaluate(new_coef, new_bias)
        if hyper.backtracking:
            while new[0] > loss and lr > 1e-12:
                lr *= 0.5
                step = lr / total_w
                new_coef, new_bias = coef - step * gc, bias - step * gb
                new = evaluate(new_coef, new_bias)
        coef, bias = new_coef, new_bias
        loss, gc, gb = new
        history.append(loss)
    return LinearModel(kind, coef, bias, scheme, hyper, history)


def train_logistic(X, y, w, scheme, hyper: LinearHyper | None = None, *, partitions: int = 1,
                   engine: Engine | None = None) -> LinearModel:
    """Weighted logistic regression: sigmoid link for two classes, softmax otherwise."""
    return _fit(LOGISTIC, X, y, w, scheme, hyper or default_hyper(LOGISTIC), partitions, engine)


def train_linear_svm(X, y, w, scheme, hyper: LinearHyper | None = None, *, partitions: int = 1,
                     engine: Engine | None = None) -> LinearModel:
    """Weighted hinge-loss hyperplane; one-vs-rest bank for more than two classes."""
    return _fit(HINGE, X, y, w, scheme, hyper or default_hyper(HINGE), partitions, engine)
