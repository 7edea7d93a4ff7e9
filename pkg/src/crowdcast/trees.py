"""Histogram-based decision tree, random forest and gradient-boosted trees.

Features are bucketed into at most ``max_bins`` quantile bins fitted on the
training rows. Node statistics are integer histograms (class multiplicities,
or fixed-point gradient sums for boosting) built per partition and added
together, so a trained tree does not depend on the partition layout.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .engine import Aggregator, Engine, partition
from .prep import LabelScheme, get_scheme

GINI = "gini"
ENTROPY = "entropy"

# histogram cells built per aggregate before node batching kicks in
_HIST_BUDGET = 1 << 23


class TreeModelError(Exception):
    pass


class NonFiniteLoss(TreeModelError):
    pass


class DimensionMismatch(TreeModelError):
    pass


# -- binning ----------------------------------------------------------------

@dataclass
class BinMapper:
    edges: list  # per dim, sorted unique upper bin edges
    max_bins: int

    @property
    def n_dims(self) -> int:
        return len(self.edges)

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([len(e) + 1 for e in self.edges], dtype=np.int64)

    def transform(self, X) -> np.ndarray:
        """Bin index = number of edges strictly below the value (clamped at both ends)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_dims:
            raise DimensionMismatch(f"expected {self.n_dims} dims")
        out = np.empty(X.shape, dtype=np.uint8)
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(e, X[:, j], side="left")
        return out

    def to_dict(self) -> dict:
        return {"max_bins": self.max_bins, "edges": [e.tolist() for e in self.edges]}

    @classmethod
    def from_dict(cls, d) -> "BinMapper":
        return cls([np.array(e, dtype=np.float64) for e in d["edges"]], d["max_bins"])


def fit_bins(X, max_bins: int = 32, binary_dims=None) -> BinMapper:
    """Equal-frequency edges per continuous dim; two bins for binary dims."""
    if not 2 <= max_bins <= 256:
        raise ValueError("max_bins must be in [2, 256]")
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    binary = np.zeros(d, dtype=bool) if binary_dims is None else np.asarray(binary_dims, dtype=bool)
    qs = np.arange(1, max_bins) / max_bins
    edges = []
    for j in range(d):
        col = X[:, j]
        if col.size == 0:
            edges.append(np.empty(0))
            continue
        lo, hi = col.min(), col.max()
        if lo == hi:
            e = np.empty(0)
        elif binary[j]:
            e = np.array([lo])
        else:
            e = np.unique(np.quantile(col, qs, method="inverted_cdf"))
            e = e[e < hi]
        edges.append(e.astype(np.float64))
    return BinMapper(edges, max_bins)


@dataclass
class BinnedDataset:
    bins: np.ndarray  # (n, d) uint8
    mapper: BinMapper
    y: np.ndarray | None = None
    w: np.ndarray | None = None


# -- tree structure -----------------------------------------------------------

@dataclass
class Tree:
    """Flat node list. Internal nodes route ``x[feature] <= threshold`` left."""

    nodes: list

    def arrays(self):
        if not hasattr(self, "_arr"):
            n = len(self.nodes)
            feat = np.full(n, -1, dtype=np.int64)
            thr = np.zeros(n)
            left = np.zeros(n, dtype=np.int64)
            right = np.zeros(n, dtype=np.int64)
            for nd in self.nodes:
                if "feature" in nd:
                    i = nd["id"]
                    feat[i], thr[i], left[i], right[i] = nd["feature"], nd["threshold"], nd["left"], nd["right"]
            self._arr = (feat, thr, left, right)
        return self._arr

    def apply(self, X) -> np.ndarray:
        """Leaf id reached by every row of ``X``."""
        feat, thr, left, right = self.arrays()
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            f = feat[node]
            internal = f >= 0
            if not internal.any():
                return node
            idx = np.flatnonzero(internal)
            go_left = X[idx, f[idx]] <= thr[node[idx]]
            node[idx] = np.where(go_left, left[node[idx]], right[node[idx]])

    @property
    def depth(self) -> int:
        return max(nd["depth"] for nd in self.nodes)

    @property
    def n_leaves(self) -> int:
        return sum("feature" not in nd for nd in self.nodes)


# -- grower -------------------------------------------------------------------

def _hist_aggregate(bins, node_of_row, feat_idx, values, layout, engine, partitions):
    offsets, total = layout
    shape = (feat_idx.shape[0], total + 1, values.shape[1])
    pd = partition((bins, node_of_row, values), partitions)
    agg = Aggregator(
        zero=lambda: np.zeros(shape, dtype=np.int64),
        merge=np.add,
        lift_block=lambda b: kernels.build_histogram(b[0], b[1], feat_idx, b[2], offsets, total),
    )
    return engine.aggregate(pd, agg)


class _Criterion:
    """Split scoring over integer histograms; subclasses define the statistics.

    ``gains`` may return nan/inf where a child is empty; those candidates are
    masked out by the caller.
    """

    split_channels = slice(None)  # histogram channels that split scoring reads

    def totals_weight(self, tot):
        raise NotImplementedError

    def gains(self, left, tot):
        raise NotImplementedError

    def leaf(self, tot) -> dict:
        raise NotImplementedError


class _ClassCriterion(_Criterion):
    def __init__(self, class_weights, impurity=GINI):
        self.cw = np.asarray(class_weights, dtype=np.float64)
        if impurity not in (GINI, ENTROPY):
            raise ValueError(f"unknown impurity {impurity!r}")
        self.impurity = impurity

    def totals_weight(self, tot):
        return tot @ self.cw

    def _score(self, S):
        # larger is purer; weighted impurity decrease = score(L) + score(R) - score(P)
        W = S.sum(axis=-1)
        if self.impurity == GINI:
            return (S * S).sum(axis=-1) / W
        logs = np.log(np.where(S > 0, S, 1.0))
        return (S * logs).sum(axis=-1) - W * np.log(W)

    def gains(self, left, tot):
        Lw = left * self.cw
        Pw = tot * self.cw
        Rw = Pw[..., None, :] - Lw
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._score(Lw) + self._score(Rw) - self._score(Pw)[..., None]

    def child_weights(self, left, tot):
        lw = left @ self.cw
        return lw, self.totals_weight(tot)[..., None] - lw

    def leaf(self, tot) -> dict:
        dist = (tot * self.cw)
        return {"distribution": dist.tolist(), "label": int(np.argmax(dist))}


class _RegressionCriterion(_Criterion):
    """Channels: fixed-point sum(w*r), sum(w), sum(w*p*(1-p)); r is the negative gradient."""

    split_channels = slice(0, 2)

    def __init__(self, scale):
        self.scale = float(scale)

    def totals_weight(self, tot):
        return tot[..., 1] / self.scale

    def gains(self, left, tot):
        # least-squares gain S_L^2/W_L + S_R^2/W_R - S^2/W, computed in fixed-point units
        SL, WL = left[..., 0].astype(np.float64), left[..., 1].astype(np.float64)
        SP, WP = tot[..., 0, None].astype(np.float64), tot[..., 1, None].astype(np.float64)
        SR, WR = SP - SL, WP - WL
        with np.errstate(divide="ignore", invalid="ignore"):
            return (SL * SL / WL + SR * SR / WR - SP * SP / WP) / self.scale

    def child_weights(self, left, tot):
        wl = left[..., 1] / self.scale
        return wl, self.totals_weight(tot)[..., None] - wl

    def leaf(self, tot) -> dict:
        g, h = tot[0] / self.scale, tot[2] / self.scale
        return {"value": g / h if h > 0 else 0.0}


class _Layout:
    """Flat histogram positions: feature ``j`` owns ``n_bins[j]`` consecutive slots."""

    def __init__(self, n_bins):
        n_bins = np.asarray(n_bins, dtype=np.int64)
        self.n_bins = n_bins
        self.offsets = np.concatenate([[0], np.cumsum(n_bins)[:-1]]).astype(np.int64)
        self.total = int(n_bins.sum())
        self.feature = np.repeat(np.arange(len(n_bins)), n_bins)  # position -> feature
        self.bin = np.arange(self.total) - self.offsets[self.feature]
        # a split after the last bin of a feature sends everything left
        self.candidate = self.bin < n_bins[self.feature] - 1

    def as_tuple(self):
        return self.offsets, self.total


def _best_splits(hist, layout: _Layout, selected, crit, min_leaf_weight):
    """Best (feature, bin, gain) per node, vectorized over a batch of nodes.

    ``selected`` is an (nodes, d) mask of the features each node may use.
    Among candidates whose gain is within a relative 1e-12 of the node's best,
    the lowest feature then lowest bin wins.
    """
    nn = hist.shape[0]
    T = layout.total
    tot = hist[:, T]
    h = hist[:, :T, crit.split_channels]
    cum = np.cumsum(h, axis=1)
    # subtract the running total at the start of each feature's segment
    base = (cum - h)[:, layout.offsets]
    left = cum - base[:, layout.feature]
    tot_b = tot[:, crit.split_channels]
    gains = crit.gains(left, tot_b)  # (nn, T)
    lw, rw = crit.child_weights(left, tot_b)
    valid = layout.candidate[None, :] & selected[:, layout.feature]
    valid &= (lw >= min_leaf_weight) & (rw >= min_leaf_weight) & (lw > 0) & (rw > 0)
    gains = np.where(valid, gains, -np.inf)
    best = gains.max(axis=1) if T else np.full(nn, -np.inf)
    scale = np.abs(crit.totals_weight(tot)) + 1.0
    tol = 1e-12 * scale
    ok = np.isfinite(best) & (best > tol)
    pick = np.argmax(gains >= (best - tol)[:, None], axis=1) if T else np.zeros(nn, dtype=np.int64)
    feat = np.where(ok, layout.feature[pick] if T else -1, -1)
    thr = layout.bin[pick] if T else np.zeros(nn, dtype=np.int64)
    return tot, feat, thr, np.where(ok, best, 0.0)


def _build_level(bins, node_of_row, feat_idx, values, layout, engine, partitions, slots=None):
    """Histograms for the frontier slots in ``slots`` (all when None), batched by memory budget."""
    nf = feat_idx.shape[0]
    slots = np.arange(nf) if slots is None else np.asarray(slots, dtype=np.int64)
    per_node = max(1, (layout.total + 1) * values.shape[1])
    batch = max(1, _HIST_BUDGET // per_node)
    for s0 in range(0, len(slots), batch):
        part = slots[s0:s0 + batch]
        if len(part) == nf:
            nor = node_of_row
        else:
            cmap = np.full(nf, -1, dtype=np.int32)
            cmap[part] = np.arange(len(part), dtype=np.int32)
            nor = np.where(node_of_row >= 0, cmap[np.maximum(node_of_row, 0)], -1).astype(np.int32)
        fi = np.ascontiguousarray(feat_idx[part])
        yield part, _hist_aggregate(bins, nor, fi, values, layout.as_tuple(), engine, partitions)


def grow_tree(bins, n_bins, values, crit, *, max_depth=None, min_leaf_weight=0.0, features_per_split=None,
              rng=None, engine=None, partitions=1, active=None):
    """Grow one tree level by level from integer per-row ``values``.

    Returns ``(nodes, row_leaf)`` where ``row_leaf`` is each row's final leaf
    id (-1 for inactive rows). When every split sees all features, only the
    smaller child of each split gets a fresh histogram; its sibling is the
    parent minus that child (exact, the histograms are integer).
    """
    engine = engine or Engine()
    n, d = bins.shape
    n_bins = np.asarray(n_bins, dtype=np.int64)
    layout = _Layout(n_bins)
    C = values.shape[1]
    node_of_row = np.zeros(n, dtype=np.int32) if active is None else np.where(active, 0, -1).astype(np.int32)
    m = d if features_per_split is None else min(d, int(features_per_split))
    subtract = m == d
    per_node = max(1, (layout.total + 1) * C)
    row_leaf = np.full(n, -1, dtype=np.int64)
    nodes: list = [{"id": 0, "depth": 0}]
    frontier = [0]  # global node ids at current depth; slot = position
    derived: dict = {}  # slot -> (parent histogram, sibling slot)
    depth = 0
    while frontier:
        nf = len(frontier)
        if m == d:
            feat_idx = np.broadcast_to(np.arange(d, dtype=np.int32), (nf, d))
        else:
            feat_idx = np.sort(np.argsort(rng.random((nf, d)), axis=1)[:, :m], axis=1).astype(np.int32)
        selected = np.zeros((nf, d), dtype=bool)
        np.put_along_axis(selected, feat_idx.astype(np.int64), True, axis=1)
        split_feat = np.full(nf, -1)
        thrs = np.zeros(nf, dtype=np.int64)
        gains = np.zeros(nf)
        tots = [None] * nf
        keep = subtract and nf * per_node <= _HIST_BUDGET
        H = np.empty((nf, layout.total + 1, C), dtype=np.int64) if keep else None
        todo = [k for k in range(nf) if k not in derived] if keep else None
        for part, hist in _build_level(bins, node_of_row, feat_idx, values, layout, engine, partitions, todo):
            if keep:
                H[part] = hist
                continue
            tot, sf, th, gn = _best_splits(hist, layout, selected[part], crit, min_leaf_weight)
            split_feat[part], thrs[part], gains[part] = sf, th, gn
            for i, k in enumerate(part):
                tots[k] = tot[i]
        if keep:
            for k, (parent, sib) in derived.items():
                H[k] = parent - H[sib]
            tot, split_feat, thrs, gains = _best_splits(H, layout, selected, crit, min_leaf_weight)
            tots = list(tot)
        if max_depth is not None and depth >= max_depth:
            split_feat = np.full(nf, -1)
        split_dim = np.full(nf, -1, dtype=np.int64)
        next_left = np.full(nf, -1, dtype=np.int32)
        next_right = np.full(nf, -1, dtype=np.int32)
        new_frontier = []
        for k, nid in enumerate(frontier):
            node = nodes[nid]
            tot = tots[k]
            node["weight"] = float(crit.totals_weight(tot))
            if split_feat[k] < 0:
                node.update(crit.leaf(tot))
                continue
            assert gains[k] > 0, "accepted split must decrease impurity"
            j = int(split_feat[k])
            split_dim[k] = j
            node["feature"] = j
            node["bin"] = int(thrs[k])
            node["gain"] = float(gains[k])
            for side, arr in (("left", next_left), ("right", next_right)):
                cid = len(nodes)
                nodes.append({"id": cid, "depth": depth + 1})
                node[side] = cid
                arr[k] = len(new_frontier)
                new_frontier.append(cid)
        rows = np.flatnonzero(node_of_row >= 0)
        s = node_of_row[rows]
        dims = split_dim[s]
        splitting = dims >= 0
        stay = rows[~splitting]
        row_leaf[stay] = np.asarray(frontier, dtype=np.int64)[node_of_row[stay]]
        if not new_frontier:
            break
        r, s, dims = rows[splitting], s[splitting], dims[splitting]
        go_left = bins[r, dims] <= thrs[s]
        new_nor = np.full(n, -1, dtype=np.int32)
        new_nor[r] = np.where(go_left, next_left[s], next_right[s])
        derived = {}
        if keep and len(new_frontier) * per_node <= _HIST_BUDGET:
            sizes = np.bincount(new_nor[new_nor >= 0], minlength=len(new_frontier))
            for k in np.flatnonzero(split_dim >= 0):
                lo, hi = next_left[k], next_right[k]
                # build the smaller child; ties build the left one
                small, big = (lo, hi) if sizes[lo] <= sizes[hi] else (hi, lo)
                derived[int(big)] = (H[k], int(small))
        node_of_row = new_nor
        frontier = new_frontier
        depth += 1
    return nodes, row_leaf


def _finish_nodes(nodes, mapper: BinMapper):
    for nd in nodes:
        if "feature" in nd:
            nd["threshold"] = float(mapper.edges[nd["feature"]][nd["bin"]])
    return nodes


# -- decision tree ------------------------------------------------------------

@dataclass
class TreeHyper:
    max_depth: int | None = 10
    max_bins: int = 32
    min_leaf_weight: float = 1.0
    impurity: str = GINI


@dataclass
class TreeModel:
    tree: Tree
    scheme: LabelScheme
    class_weights: list
    hyper: TreeHyper
    mapper: BinMapper | None = None
    schema_hash: str | None = None

    @property
    def n_dims(self):
        return self.mapper.n_dims if self.mapper is not None else getattr(self, "_n_dims", None)

    def scores(self, X) -> np.ndarray:
        X = _check_dims(X, self.n_dims)
        dist = np.zeros((len(self.tree.nodes), self.scheme.n_classes))
        for nd in self.tree.nodes:
            if "distribution" in nd:
                dist[nd["id"]] = nd["distribution"]
        return dist[self.tree.apply(X)]

    def predict(self, X) -> np.ndarray:
        X = _check_dims(X, self.n_dims)
        labels = np.array([nd.get("label", -1) for nd in self.tree.nodes], dtype=np.int64)
        return labels[self.tree.apply(X)]

    def to_dict(self) -> dict:
        return {
            "type": "tree",
            "scheme": self.scheme.id,
            "class_weights": list(self.class_weights),
            "hyper": asdict(self.hyper),
            "schema_hash": self.schema_hash,
            "n_dims": self.n_dims,
            "nodes": self.tree.nodes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "TreeModel":
        m = cls(Tree(d["nodes"]), get_scheme(d["scheme"]), d["class_weights"], TreeHyper(**d["hyper"]),
                schema_hash=d.get("schema_hash"))
        m._n_dims = d.get("n_dims")
        return m


def _check_dims(X, n_dims):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if n_dims is not None and X.shape[1] != n_dims:
        raise DimensionMismatch(f"expected {n_dims} dims, got {X.shape[1]}")
    return X


def class_values(y, n_classes, multiplicity=None) -> np.ndarray:
    """One-hot multiplicity channels for the classification histograms."""
    y = np.asarray(y, dtype=np.int64)
    mult = np.ones(len(y), dtype=np.int64) if multiplicity is None else np.asarray(multiplicity, dtype=np.int64)
    V = np.zeros((len(y), n_classes), dtype=np.int64)
    V[np.arange(len(y)), y] = mult
    return V


def train_decision_tree(binned: BinnedDataset, class_weights, scheme, hyper: TreeHyper | None = None, *,
                        multiplicity=None, features_per_split=None, rng=None,
                        engine: Engine | None = None, partitions: int = 1) -> TreeModel:
    """Weighted CART on binned features.

    ``class_weights`` is the per-class weight vector in scheme order; a record
    of class ``c`` counts ``multiplicity * class_weights[c]`` in every node.
    """
    hyper = hyper or TreeHyper()
    scheme = get_scheme(scheme)
    cw = np.asarray(class_weights, dtype=np.float64)
    if (cw <= 0).any():
        raise TreeModelError("class weights must be positive")
    values = class_values(binned.y, scheme.n_classes, multiplicity)
    active = None if multiplicity is None else np.asarray(multiplicity) > 0
    nodes, _ = grow_tree(binned.bins, binned.mapper.n_bins, values, _ClassCriterion(cw, hyper.impurity),
                         max_depth=hyper.max_depth, min_leaf_weight=hyper.min_leaf_weight,
                         features_per_split=features_per_split, rng=rng, engine=engine,
                         partitions=partitions, active=active)
    return TreeModel(Tree(_finish_nodes(nodes, binned.mapper)), scheme, cw.tolist(), hyper, binned.mapper)


def predict_tree(model: TreeModel, vector):
    s = model.scores(np.asarray(vector)[None, :])[0]
    return model.scheme.classes[int(np.argmax(s))], s


# -- random forest --------------------------------------------------------------

@dataclass
class ForestHyper:
    n_trees: int = 100
    feature_subset: str | int = "sqrt"  # "sqrt", "all" or an explicit count
    bootstrap: bool = True
    seed: int = 42
    tree: TreeHyper = field(default_factory=TreeHyper)


@dataclass
class ForestModel:
    trees: list  # TreeModel
    seeds: list
    feature_subset_size: int
    scheme: LabelScheme
    hyper: ForestHyper

    def votes(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        V = np.zeros((len(X), self.scheme.n_classes), dtype=np.int64)
        for t in self.trees:
            V[np.arange(len(X)), t.predict(X)] += 1
        return V

    scores = votes

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def to_dict(self) -> dict:
        h = asdict(self.hyper)
        return {
            "type": "forest",
            "scheme": self.scheme.id,
            "hyper": h,
            "seeds": self.seeds,
            "feature_subset_size": self.feature_subset_size,
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "ForestModel":
        h = dict(d["hyper"])
        h["tree"] = TreeHyper(**h["tree"])
        return cls([TreeModel.from_dict(t) for t in d["trees"]], d["seeds"], d["feature_subset_size"],
                   get_scheme(d["scheme"]), ForestHyper(**h))


def subset_size(spec, d: int) -> int:
    if spec == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    if spec == "all":
        return d
    return max(1, min(d, int(spec)))


def train_random_forest(binned: BinnedDataset, class_weights, scheme, hyper: ForestHyper | None = None, *,
                        engine: Engine | None = None, partitions: int = 1) -> ForestModel:
    """Bagged trees with per-split feature subsampling.

    Each tree gets its own seed from ``hyper.seed``; the bootstrap draws ``n``
    rows uniformly with replacement and the draw counts multiply the class
    weights.
    """
    hyper = hyper or ForestHyper()
    if hyper.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n, d = binned.bins.shape
    m = subset_size(hyper.feature_subset, d)
    children = np.random.SeedSequence(hyper.seed).spawn(hyper.n_trees)
    trees, seeds = [], []
    for child in children:
        rng = np.random.default_rng(child)
        seeds.append(int(child.generate_state(1)[0]))
        mult = rng.multinomial(n, np.full(n, 1.0 / n)) if hyper.bootstrap else None
        trees.append(train_decision_tree(binned, class_weights, scheme, hyper.tree, multiplicity=mult,
                                         features_per_split=None if m == d else m, rng=rng,
                                         engine=engine, partitions=partitions))
    return ForestModel(trees, seeds, m, get_scheme(scheme), hyper)


def predict_forest(model: ForestModel, vector):
    s = model.votes(np.asarray(vector)[None, :])[0]
    return model.scheme.classes[int(np.argmax(s))], s


# -- gradient boosting ------------------------------------------------------------

@dataclass
class GBTHyper:
    iterations: int = 100
    learning_rate: float = 0.1
    max_depth: int = 5
    max_bins: int = 32
    min_leaf_weight: float = 1.0


@dataclass
class GBTModel:
    """One boosted chain per class (one-vs-rest), or a single chain for two classes."""

    chains: list  # list of list of Tree
    init: list
    scheme: LabelScheme
    hyper: GBTHyper
    loss_history: list = field(default_factory=list)
    mapper: BinMapper | None = None
    schema_hash: str | None = None

    @property
    def n_dims(self):
        return self.mapper.n_dims if self.mapper is not None else getattr(self, "_n_dims", None)

    def margins(self, X) -> np.ndarray:
        X = _check_dims(X, self.n_dims)
        F = np.tile(np.asarray(self.init, dtype=np.float64), (len(X), 1))
        for k, chain in enumerate(self.chains):
            for tree in chain:
                vals = np.array([nd.get("value", 0.0) for nd in tree.nodes])
                F[:, k] += self.hyper.learning_rate * vals[tree.apply(X)]
        return F

    def scores(self, X) -> np.ndarray:
        F = self.margins(X)
        if len(self.chains) == 1:
            return np.column_stack([F[:, 0], -F[:, 0]])
        return F

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "type": "gbt",
            "scheme": self.scheme.id,
            "hyper": asdict(self.hyper),
            "init": list(self.init),
            "schema_hash": self.schema_hash,
            "n_dims": self.n_dims,
            "chains": [[t.nodes for t in chain] for chain in self.chains],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "GBTModel":
        m = cls([[Tree(nodes) for nodes in chain] for chain in d["chains"]], d["init"],
                get_scheme(d["scheme"]), GBTHyper(**d["hyper"]), schema_hash=d.get("schema_hash"))
        m._n_dims = d.get("n_dims")
        return m


def _fixed_point_scale(total_weight: float) -> float:
    # keeps every histogram total below 2**50 so float64 and int64 sums agree
    return 2.0 ** (50 - max(0, math.ceil(math.log2(max(total_weight, 1.0)))))


def weighted_log_loss(F, y01, w) -> float:
    return float(np.dot(w, np.logaddexp(0.0, F) - y01 * F))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def train_gbt(binned: BinnedDataset, sample_weight, scheme, hyper: GBTHyper | None = None, *,
              engine: Engine | None = None, partitions: int = 1) -> GBTModel:
    """Stage-wise boosting of regression trees on the weighted log loss.

    Trees are fit by weighted least squares to the negative gradient
    ``y - p``; each leaf then takes one Newton step
    ``sum(w * (y - p)) / sum(w * p * (1 - p))``, shrunk by the learning rate.
    """
    hyper = hyper or GBTHyper()
    if hyper.iterations < 0:
        raise ValueError("iterations must be >= 0")
    if not 0 < hyper.learning_rate <= 1:
        raise ValueError("learning_rate must be in (0, 1]")
    scheme = get_scheme(scheme)
    y = np.asarray(binned.y, dtype=np.int64)
    w = np.asarray(sample_weight, dtype=np.float64)
    n_chains = 1 if scheme.n_classes == 2 else scheme.n_classes
    scale = _fixed_point_scale(float(w.sum()))
    crit = _RegressionCriterion(scale)
    chains, init, history = [], [], []
    for k in range(n_chains):
        y01 = (y == k).astype(np.float64)
        pos, neg = float(np.dot(w, y01)), float(np.dot(w, 1 - y01))
        if pos <= 0 or neg <= 0:
            raise TreeModelError(f"class {scheme.classes[k]!r} has no weight on one side")
        f0 = math.log(pos / neg)
        F = np.full(len(y), f0)
        chain, hist = [], [weighted_log_loss(F, y01, w)]
        for _ in range(hyper.iterations):
            p = _sigmoid(F)
            r = y01 - p
            vals = np.column_stack([w * r, w, w * p * (1 - p)])
            q = np.rint(vals * scale).astype(np.int64)
            nodes, row_leaf = grow_tree(binned.bins, binned.mapper.n_bins, q, crit, max_depth=hyper.max_depth,
                                        min_leaf_weight=hyper.min_leaf_weight, engine=engine,
                                        partitions=partitions)
            leaf_val = np.array([nd.get("value", 0.0) for nd in nodes])
            F = F + hyper.learning_rate * leaf_val[row_leaf]
            loss = weighted_log_loss(F, y01, w)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"stage loss became {loss}")
            hist.append(loss)
            chain.append(Tree(_finish_nodes(nodes, binned.mapper)))
        chains.append(chain)
        init.append(f0)
        history.append(hist)
    return GBTModel(chains, init, scheme, hyper, history, binned.mapper)


def predict_gbt(model: GBTModel, vector):
    s = model.scores(np.asarray(vector)[None, :])[0]
    return model.scheme.classes[int(np.argmax(s))], s


def load_model(d: dict):
    """Rebuild any tree-family model from its JSON dictionary."""
    kind = d["type"]
    if kind == "tree":
        return TreeModel.from_dict(d)
    if kind == "forest":
        return ForestModel.from_dict(d)
    if kind == "gbt":
        return GBTModel.from_dict(d)
    raise ValueError(f"not a tree model: {kind!r}")
