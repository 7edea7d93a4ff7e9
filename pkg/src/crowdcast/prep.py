"""Label schemes, class-imbalance weights, stratified splitting, standardization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .engine import Aggregator, Engine, partition
from .ingest import State

SUCCESSFUL = "Successful"
FAILED = "Failed"
CANCELED = "Canceled"
SUSPENDED = "Suspended"
NOT_SUCCESSFUL = "NotSuccessful"


@dataclass(frozen=True)
class LabelScheme:
    id: str
    classes: tuple[str, ...]

    def index(self, label: str) -> int:
        return self.classes.index(label)

    @property
    def n_classes(self) -> int:
        return len(self.classes)


P1 = LabelScheme("P1", (SUCCESSFUL, FAILED, CANCELED, SUSPENDED))
P2 = LabelScheme("P2", (SUCCESSFUL, NOT_SUCCESSFUL))
SCHEMES = {"P1": P1, "P2": P2}


def get_scheme(scheme) -> LabelScheme:
    return scheme if isinstance(scheme, LabelScheme) else SCHEMES[str(scheme).upper()]


class PrepError(Exception):
    pass


class EmptyClass(PrepError):
    pass


class DegenerateStratum(PrepError):
    pass


def relabel(state: State, scheme) -> str | None:
    """Class label for ``state`` under ``scheme``; None means excluded (Live)."""
    scheme = get_scheme(scheme)
    state = State(state) if not isinstance(state, State) else state
    if state is State.LIVE:
        return None
    if scheme.id == "P2" and state is not State.SUCCESSFUL:
        return NOT_SUCCESSFUL
    return state.value


@dataclass(frozen=True)
class ClassWeights:
    weights: dict
    counts: dict
    scheme: str | None = None

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "counts": self.counts, "weights": self.weights}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d) -> "ClassWeights":
        return cls(dict(d["weights"]), dict(d["counts"]), d.get("scheme"))

    def vector(self, scheme: LabelScheme) -> np.ndarray:
        return np.array([self.weights[c] for c in scheme.classes], dtype=np.float64)


def compute_class_weights(counts: Mapping[str, int], scheme=None) -> ClassWeights:
    """``w_i = sum(counts) / (n_classes * counts_i)`` for every class."""
    if not counts:
        raise EmptyClass("no classes")
    for c, lam in counts.items():
        if lam <= 0:
            raise EmptyClass(c)
    total = sum(counts.values())
    n = len(counts)
    weights = {c: total / (n * lam) for c, lam in counts.items()}
    sid = get_scheme(scheme).id if scheme is not None else None
    return ClassWeights(weights, dict(counts), sid)


def class_counts(labels: Sequence[str], scheme) -> dict:
    scheme = get_scheme(scheme)
    counts = {c: 0 for c in scheme.classes}
    for lab in labels:
        counts[lab] += 1
    return counts


@dataclass
class SplitResult:
    train: np.ndarray  # row indices, ascending
    test: np.ndarray
    seed: int
    test_fraction: float

    def to_dict(self, ids=None) -> dict:
        pick = (lambda idx: [int(ids[i]) for i in idx]) if ids is not None else (lambda idx: idx.tolist())
        return {"seed": self.seed, "test_fraction": self.test_fraction,
                "train": pick(self.train), "test": pick(self.test)}


def stratified_split(labels: Sequence[str], test_fraction: float = 0.2, seed: int = 42,
                     order_keys: Sequence | None = None, classes: Sequence[str] | None = None) -> SplitResult:
    """Per-class seeded split; ``round(count * test_fraction)`` of each class go to test.

    ``order_keys`` (record ids) fix the order in which class members are
    enumerated, so the result does not depend on how the input was laid out.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    labels = np.asarray(labels, dtype=object)
    n = len(labels)
    order = np.arange(n) if order_keys is None else np.argsort(np.asarray(order_keys), kind="stable")
    if classes is None:
        classes = sorted(set(labels.tolist()))
    rng = np.random.default_rng(seed)
    test_parts = []
    seen = 0
    for c in classes:
        members = order[labels[order] == c]
        seen += len(members)
        if len(members) < 2:
            raise DegenerateStratum(f"class {c!r} has {len(members)} record(s)")
        k = int(np.floor(len(members) * test_fraction + 0.5))
        perm = rng.permutation(len(members))
        test_parts.append(members[perm[:k]])
    if seen != n:
        raise ValueError("labels outside the given classes")
    test = np.sort(np.concatenate(test_parts)) if test_parts else np.array([], dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    return SplitResult(np.flatnonzero(mask), test, seed, test_fraction)


def sample_weights(y: np.ndarray, weights: ClassWeights, scheme) -> np.ndarray:
    return weights.vector(get_scheme(scheme))[y]


# moments are merged pairwise (count, mean, M2) to avoid cancellation
def _moments_block(X):
    n = X.shape[0]
    if n == 0:
        return (0, np.zeros(X.shape[1]), np.zeros(X.shape[1]))
    mean = X.mean(axis=0)
    return (n, mean, ((X - mean) ** 2).sum(axis=0))


def _moments_merge(a, b):
    na, ma, sa = a
    nb, mb, sb = b
    if na == 0:
        return b
    if nb == 0:
        return a
    n = na + nb
    delta = mb - ma
    return (n, ma + delta * (nb / n), sa + sb + delta ** 2 * (na * nb / n))


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    dims: np.ndarray  # indices of continuous dims
    zero_variance: list = field(default_factory=list)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=np.float64, copy=True)
        X[..., self.dims] = (X[..., self.dims] - self.mean) / self.std
        return X

    def to_dict(self) -> dict:
        return {"dims": self.dims.tolist(), "mean": self.mean.tolist(), "std": self.std.tolist(),
                "zero_variance": list(self.zero_variance)}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.array(d["mean"]), np.array(d["std"]), np.array(d["dims"], dtype=np.int64),
                   list(d.get("zero_variance", [])))


def fit_standardizer(X: np.ndarray, continuous_dims, *, partitions: int = 1,
                     engine: Engine | None = None) -> Standardizer:
    """Fit per-dimension mean/std on training rows (population std).

    Zero-variance dimensions keep mean 0 and std 1 so they pass through, and
    are listed in ``zero_variance``.
    """
    dims = np.asarray(continuous_dims)
    if dims.dtype == bool:
        dims = np.flatnonzero(dims)
    engine = engine or Engine()
    sub = np.ascontiguousarray(X[:, dims], dtype=np.float64)
    agg = Aggregator(zero=lambda: (0, np.zeros(len(dims)), np.zeros(len(dims))),
                     merge=_moments_merge, lift_block=_moments_block)
    n, mean, m2 = engine.aggregate(partition(sub, partitions), agg)
    std = np.sqrt(m2 / n) if n else np.zeros(len(dims))
    flat = ~(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
    mean = np.where(flat, 0.0, mean)
    std = np.where(flat, 1.0, std)
    return Standardizer(mean, std, dims.astype(np.int64), [int(d) for d in dims[flat]])


def apply_standardizer(std: Standardizer, X: np.ndarray) -> np.ndarray:
    return std.transform(X)
