"""Random-forest classifier grown from scratch.

Binary labels only (1 = the enrolled user). Trees use axis-aligned splits
chosen by Gini impurity among `max_features` random candidate features,
are grown to purity, and vote with the majority class of their leaf (ties
vote negative). The forest score is the fraction of positive votes.

Randomness: tree t of a forest seeded with s draws its stratified bootstrap
from numpy's PCG64 seeded with SeedSequence([s, t]); the same generator
supplies a 64-bit seed for the SplitMix64 stream that picks candidate
features inside the compiled tree builder. Both generators are
platform-independent, so results depend only on (data, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numba as nb
import numpy as np

from .model import TapKnockError

FOREST_FORMAT = "tapknock-forest"
FOREST_VERSION = 1


class ForestError(TapKnockError, ValueError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_features: Optional[int] = None  # None means floor(sqrt(n_features))
    min_leaf: int = 1
    seed: int = 0

    def resolved_max_features(self, n_features: int) -> int:
        k = self.max_features if self.max_features is not None else int(math.isqrt(n_features))
        if not 1 <= k <= n_features:
            raise ForestError(f"max_features {k} outside [1, {n_features}]")
        return k

    def __post_init__(self):
        if self.n_trees < 1:
            raise ForestError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ForestError("min_leaf must be >= 1")
        if self.seed < 0:
            raise ForestError("seed must be non-negative")


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@nb.njit(cache=True)
def _splitmix_next(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def _grow_tree(X, y, sample, max_features, min_leaf, seed):
    n_feat = X.shape[1]
    m = sample.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    npos = np.zeros(cap, np.int64)
    ntot = np.zeros(cap, np.int64)
    importance = np.zeros(n_feat)

    idx = sample.copy()
    perm = np.arange(n_feat)
    cand = np.empty(n_feat, np.int64)
    vals = np.empty(m)
    state = np.empty(1, np.uint64)
    state[0] = seed

    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        cnt = hi - lo
        p = 0
        for i in range(lo, hi):
            p += y[idx[i]]
        npos[node] = p
        ntot[node] = cnt
        if p == 0 or p == cnt or cnt < 2 * min_leaf:
            continue
        parent = cnt - (p * p + (cnt - p) * (cnt - p)) / cnt

        best_cost = np.inf
        best_f = -1
        best_thr = 0.0
        drawn = 0
        # draw candidates in chunks; later chunks only when every earlier
        # candidate was constant on this node
        while drawn < n_feat and best_f < 0:
            k = min(max_features, n_feat - drawn)
            for i in range(drawn, drawn + k):
                j = i + np.int64(_splitmix_next(state) % np.uint64(n_feat - i))
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
            cand[:k] = np.sort(perm[drawn:drawn + k])
            drawn += k
            for ci in range(k):
                f = cand[ci]
                for i in range(cnt):
                    vals[i] = X[idx[lo + i], f]
                order = np.argsort(vals[:cnt])
                lp = 0
                for r in range(cnt - 1):
                    a = order[r]
                    lp += y[idx[lo + a]]
                    v0 = vals[a]
                    v1 = vals[order[r + 1]]
                    if not v1 > v0:
                        continue
                    nl = r + 1
                    nr = cnt - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    rp = p - lp
                    cost = (nl - (lp * lp + (nl - lp) * (nl - lp)) / nl
                            + nr - (rp * rp + (nr - rp) * (nr - rp)) / nr)
                    if cost < best_cost:
                        best_cost = cost
                        best_f = f
                        thr = v0 + (v1 - v0) * 0.5
                        if thr >= v1:
                            thr = v0
                        best_thr = thr
        if best_f < 0:
            continue

        importance[best_f] += parent - best_cost
        i = lo
        j = hi - 1
        while i <= j:
            if X[idx[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        st_node[top] = n_nodes + 1
        st_lo[top] = i
        st_hi[top] = hi
        st_node[top + 1] = n_nodes
        st_lo[top + 1] = lo
        st_hi[top + 1] = i
        top += 2
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), npos[:n_nodes].copy(), ntot[:n_nodes].copy(), importance)


@nb.njit(cache=True)
def _count_votes(X, feature, threshold, left, right, vote, roots):
    n = X.shape[0]
    out = np.zeros(n, np.int64)
    for t in range(roots.shape[0]):
        for i in range(n):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            if vote[node]:
                out[i] += 1
    return out


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    npos: np.ndarray  # bootstrap positives reaching each node
    ntot: np.ndarray
    inbag: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def vote(self) -> np.ndarray:
        return 2 * self.npos > self.ntot

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def used_features(self) -> np.ndarray:
        return np.unique(self.feature[self.feature >= 0])


@dataclass(frozen=True)
class Forest:
    trees: Tuple[Tree, ...]
    feature_names: Tuple[str, ...]
    importances: np.ndarray
    config: ForestConfig
    theta: Optional[float] = None
    _packed: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])
        feature = np.concatenate([t.feature for t in self.trees])
        threshold = np.concatenate([t.threshold for t in self.trees])
        vote = np.concatenate([t.vote for t in self.trees])
        left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(self.trees, offsets)])
        right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(self.trees, offsets)])
        object.__setattr__(self, "_packed", (feature, threshold, left, right, vote, offsets[:-1].copy()))

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def with_theta(self, theta: float) -> "Forest":
        if not 0.0 <= theta <= 1.0 + 1e-12 and not math.isinf(theta):
            raise ForestError(f"theta {theta} outside [0, 1]")
        return replace(self, theta=float(theta))

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _count_votes(X, *self._packed)

    def top_features(self, k: int = 5) -> Tuple[str, ...]:
        order = np.lexsort((np.arange(self.n_features), -self.importances))
        return tuple(self.feature_names[i] for i in order[:k])


def _as_matrix(rows, names: Sequence[str]) -> np.ndarray:
    X = np.ascontiguousarray(rows, dtype=np.float64)
    if X.ndim != 2:
        raise ForestError("feature matrix must be 2-D")
    if X.shape[1] != len(names):
        raise ForestError("schema mismatch: matrix width differs from feature names")
    return X


def train(X, y, cfg: ForestConfig = ForestConfig(), feature_names: Optional[Sequence[str]] = None) -> Forest:
    """Grow a forest on rows `X` with binary labels `y`."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ForestError("need a non-empty 2-D feature matrix")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(X.shape[1]))
    X = _as_matrix(X, names)
    if len(set(names)) != len(names):
        raise ForestError("duplicated feature names")
    if not np.all(np.isfinite(X)):
        raise ForestError("non-finite feature value")
    y = np.asarray(y).astype(np.int64).ravel()
    if len(y) != X.shape[0] or not np.all((y == 0) | (y == 1)):
        raise ForestError("labels must be 0/1, one per row")
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ForestError("training data holds a single class")
    k = cfg.resolved_max_features(X.shape[1])

    trees = []
    total = np.zeros(X.shape[1])
    for t in range(cfg.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, t]))
        sample = np.concatenate([rng.choice(pos, size=len(pos)), rng.choice(neg, size=len(neg))])
        seed = rng.integers(0, 2 ** 64, dtype=np.uint64)
        feat, thr, left, right, npos, ntot, imp = _grow_tree(X, y, sample, k, cfg.min_leaf, seed)
        total += imp
        trees.append(Tree(feat, thr, left, right, npos, ntot, inbag=sample))
    s = total.sum()
    importances = total / s if s > 0 else total
    return Forest(tuple(trees), names, importances, cfg)


def score(forest: Forest, vector) -> np.ndarray:
    """Fraction of trees voting positive; scalar for one vector, array for a matrix."""
    names = getattr(vector, "names", None)
    values = getattr(vector, "values", vector)
    if names is not None and tuple(names) != forest.feature_names:
        raise ForestError("schema mismatch: feature names differ from training")
    X = np.asarray(values, dtype=np.float64)
    single = X.ndim == 1
    X = _as_matrix(X[None, :] if single else X, forest.feature_names)
    s = forest.votes(X) / len(forest.trees)
    return float(s[0]) if single else s


def decide(forest: Forest, vector) -> bool:
    """Accept iff the score reaches the forest's threshold."""
    if forest.theta is None:
        raise ForestError("theta unset")
    return bool(score(forest, vector) >= forest.theta)


def oob_error(forest: Forest, X, y) -> float:
    """Out-of-bag error on the training rows (rows never left out are skipped)."""
    X = _as_matrix(X, forest.feature_names)
    y = np.asarray(y).astype(np.int64)
    pos_votes = np.zeros(len(y))
    n_votes = np.zeros(len(y))
    for tree in forest.trees:
        out = np.ones(len(y), bool)
        out[tree.inbag] = False
        if not out.any():
            continue
        single = Forest((tree,), forest.feature_names, forest.importances, forest.config)
        pos_votes[out] += single.votes(X[out])
        n_votes[out] += 1
    seen = n_votes > 0
    pred = 2 * pos_votes[seen] > n_votes[seen]
    return float(np.mean(pred != (y[seen] == 1)))


def to_json(forest: Forest) -> str:
    doc = {
        "format": FOREST_FORMAT,
        "version": FOREST_VERSION,
        "config": {
            "n_trees": forest.config.n_trees,
            "max_features": forest.config.max_features,
            "min_leaf": forest.config.min_leaf,
            "seed": forest.config.seed,
        },
        "theta": forest.theta,
        "feature_names": list(forest.feature_names),
        "importances": forest.importances.tolist(),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "npos": t.npos.tolist(),
                "ntot": t.ntot.tolist(),
            }
            for t in forest.trees
        ],
    }
    return json.dumps(doc)


def from_json(text: str) -> Forest:
    doc = json.loads(text)
    if doc.get("format") != FOREST_FORMAT or doc.get("version") != FOREST_VERSION:
        raise ForestError("unsupported forest document")
    trees = tuple(
        Tree(
            np.asarray(t["feature"], np.int64),
            np.asarray(t["threshold"], np.float64),
            np.asarray(t["left"], np.int64),
            np.asarray(t["right"], np.int64),
            np.asarray(t["npos"], np.int64),
            np.asarray(t["ntot"], np.int64),
        )
        for t in doc["trees"]
    )
    return Forest(trees, tuple(doc["feature_names"]), np.asarray(doc["importances"]),
                  ForestConfig(**doc["config"]), doc["theta"])
