"""In-process partition-parallel execution.

Datasets are cut into contiguous blocks along their global order. Statistics
are computed per block and combined with an associative, commutative merge
whose tree shape is fixed (balanced binary over partition index), so float
results are reproducible run to run.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Generic, Iterable, Sequence, TypeVar

import numpy as np

P = TypeVar("P")


def _length(data) -> int:
    if isinstance(data, dict):
        lengths = {len(v) for v in data.values()}
    elif isinstance(data, tuple):
        lengths = {len(v) for v in data}
    else:
        return len(data)
    if len(lengths) > 1:
        raise ValueError(f"columns have unequal lengths: {sorted(lengths)}")
    return lengths.pop() if lengths else 0


def _slice(data, start: int, stop: int):
    if isinstance(data, dict):
        return {k: v[start:stop] for k, v in data.items()}
    if isinstance(data, tuple):
        return tuple(v[start:stop] for v in data)
    return data[start:stop]


@dataclass(frozen=True)
class PartitionedDataset:
    """A logical dataset split into contiguous, order-preserving blocks.

    ``data`` is a sequence, an array, or a tuple/dict of equal-length columns.
    Blocks are views (numpy) or shallow slices; they are never mutated.
    """

    data: Any
    bounds: tuple[tuple[int, int], ...]

    @property
    def partition_count(self) -> int:
        return len(self.bounds)

    def __len__(self) -> int:
        return self.bounds[-1][1] if self.bounds else 0

    def block(self, k: int):
        start, stop = self.bounds[k]
        return _slice(self.data, start, stop)

    def blocks(self) -> list:
        return [self.block(k) for k in range(self.partition_count)]

    def with_data(self, data) -> "PartitionedDataset":
        """Same block layout over different (equal-length) columns."""
        if _length(data) != len(self):
            raise ValueError("replacement data must keep the logical length")
        return PartitionedDataset(data, self.bounds)


def partition(data, n_partitions: int) -> PartitionedDataset:
    """Split ``data`` into ``n_partitions`` contiguous blocks.

    Block sizes differ by at most one, larger blocks first. When there are
    more partitions than records the tail blocks are empty.
    """
    if n_partitions < 1:
        raise ValueError("n_partitions must be >= 1")
    n = _length(data)
    base, extra = divmod(n, n_partitions)
    bounds = []
    start = 0
    for k in range(n_partitions):
        stop = start + base + (1 if k < extra else 0)
        bounds.append((start, stop))
        start = stop
    return PartitionedDataset(data, tuple(bounds))


@dataclass(frozen=True)
class Aggregator(Generic[P]):
    """Monoid-style aggregation: ``zero``, per-record ``lift``, ``merge``.

    ``lift_block`` computes the fold of ``lift`` over a whole block; supply a
    vectorized version when one exists, otherwise records are folded one by
    one in block order.
    """

    zero: Callable[[], P]
    merge: Callable[[P, P], P]
    lift: Callable[[Any], P] | None = None
    lift_block: Callable[[Any], P] | None = None

    def fold_block(self, block) -> P:
        if self.lift_block is not None:
            return self.lift_block(block)
        if self.lift is None:
            raise ValueError("aggregator needs lift or lift_block")
        acc = self.zero()
        for record in block:
            acc = self.merge(acc, self.lift(record))
        return acc


def tree_reduce(partials: Sequence[P], merge: Callable[[P, P], P], zero: Callable[[], P]) -> P:
    """Merge ``partials`` along a balanced binary tree over their index."""
    if not partials:
        return zero()
    level = list(partials)
    while len(level) > 1:
        nxt = [merge(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


@dataclass
class Engine:
    """Runs block maps on a thread pool and merges deterministically.

    ``workers`` only controls concurrency; results depend on the partition
    layout alone (and, for integer partials, not even on that).
    """

    workers: int = 1
    _pool: ThreadPoolExecutor | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def map_blocks(self, pd: PartitionedDataset, fn: Callable[[Any], P]) -> list[P]:
        blocks = pd.blocks()
        if self.workers == 1 or len(blocks) == 1:
            return [fn(b) for b in blocks]
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.workers)
        return list(self._pool.map(fn, blocks))

    def aggregate(self, pd: PartitionedDataset, agg: Aggregator[P]) -> P:
        partials = self.map_blocks(pd, agg.fold_block)
        return tree_reduce(partials, agg.merge, agg.zero)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def array_sum(shape, dtype=np.float64) -> Aggregator:
    """Column sums of a 2-D array block (rows are records)."""
    return Aggregator(zero=lambda: np.zeros(shape, dtype=dtype), merge=np.add,
                      lift_block=lambda b: np.asarray(b, dtype=dtype).sum(axis=0))


def count_by(keys: Iterable, key_fn: Callable[[Any], Any] | None = None) -> dict:
    """Sequential key counter, used as the reference for aggregated counts."""
    out: dict = {}
    for k in keys:
        k = key_fn(k) if key_fn else k
        out[k] = out.get(k, 0) + 1
    return out


def counter_aggregator(key_fn: Callable[[Any], Any]) -> Aggregator[dict]:
    def merge(a: dict, b: dict) -> dict:
        out = dict(a)
        for k, v in b.items():
            out[k] = out.get(k, 0) + v
        return out

    return Aggregator(zero=dict, merge=merge, lift_block=lambda block: count_by(block, key_fn))
