"""Random-forest regression built from CART trees.

Trees are grown on bootstrap resamples of the training rows. At every node
the split maximizing the reduction in the sum of squared deviations is
searched over a random subset of features, at midpoints between sorted
distinct values; a split is admissible only if both children keep at least
``min_leaf`` rows (bootstrap duplicates count). Leaves predict the mean of
their rows.

Each tree is stored as flat arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``; ``feature == -1`` marks a leaf), which makes the
model easy to persist without pickle.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from joblib import Parallel, delayed

from ..errors import DataError, ModelError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    min_leaf: int = 5
    mtry: int | None = None          # default floor(p / 3)
    seed: int = 0
    n_jobs: int = 1

    def resolved_mtry(self, p: int) -> int:
        return int(self.mtry) if self.mtry else max(1, p // 3)


@numba.njit(cache=True, nogil=True)
def _grow(X, y, rows, keys, mtry, min_leaf):
    n = rows.size
    cap = 2 * n + 1
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    val = np.zeros(cap)
    # stack of (node, start, end) over the shared ``rows`` buffer
    st_node = np.zeros(cap, np.int64)
    st_a = np.zeros(cap, np.int64)
    st_b = np.zeros(cap, np.int64)
    top = 0
    st_node[0], st_a[0], st_b[0] = 0, 0, n
    top = 1
    n_nodes = 1
    p = X.shape[1]
    while top > 0:
        top -= 1
        node, a, b = st_node[top], st_a[top], st_b[top]
        m = b - a
        idx = rows[a:b]
        tot = 0.0
        for i in range(m):
            tot += y[idx[i]]
        val[node] = tot / m
        if m < 2 * min_leaf:
            continue
        ymin = y[idx[0]]
        ymax = ymin
        for i in range(m):
            ymin = min(ymin, y[idx[i]])
            ymax = max(ymax, y[idx[i]])
        if ymax == ymin:
            continue
        order = np.argsort(keys[node % keys.shape[0]])
        base = tot * tot / m
        best_gain = 1e-12 * (abs(base) + 1.0)
        best_f = -1
        best_t = 0.0
        for c in range(mtry):
            f = order[c]
            xs = X[idx, f]
            o = np.argsort(xs, kind="mergesort")
            sx = xs[o]
            if sx[0] == sx[m - 1]:
                continue
            sl = 0.0
            for i in range(m - 1):
                sl += y[idx[o[i]]]
                nl = i + 1
                if nl < min_leaf:
                    continue
                if m - nl < min_leaf:
                    break
                if sx[i] == sx[i + 1]:
                    continue
                sr = tot - sl
                gain = sl * sl / nl + sr * sr / (m - nl) - base
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_t = 0.5 * (sx[i] + sx[i + 1])
        if best_f < 0:
            continue
        # partition rows[a:b] in place, keeping relative order
        buf = np.empty(m, np.int64)
        k = 0
        for i in range(m):
            if X[idx[i], best_f] <= best_t:
                buf[k] = idx[i]
                k += 1
        mid = k
        for i in range(m):
            if X[idx[i], best_f] > best_t:
                buf[k] = idx[i]
                k += 1
        rows[a:b] = buf
        feat[node], thr[node] = best_f, best_t
        left[node], right[node] = n_nodes, n_nodes + 1
        st_node[top], st_a[top], st_b[top] = n_nodes + 1, a + mid, b
        st_node[top + 1], st_a[top + 1], st_b[top + 1] = n_nodes, a, a + mid
        top += 2
        n_nodes += 2
    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], val[:n_nodes]


@numba.njit(cache=True, nogil=True)
def _predict(offsets, feat, thr, left, right, val, Z):
    n_trees = offsets.size - 1
    out = np.zeros((Z.shape[0], n_trees))
    for r in range(Z.shape[0]):
        for t in range(n_trees):
            o = offsets[t]
            node = 0
            while feat[o + node] >= 0:
                if Z[r, feat[o + node]] <= thr[o + node]:
                    node = left[o + node]
                else:
                    node = right[o + node]
            out[r, t] = val[o + node]
    return out


@dataclass(frozen=True)
class ForestModel:
    """Immutable ensemble for one target; trees are concatenated flat arrays."""

    offsets: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int
    schema_hash: str
    meta: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return self.offsets.size - 1

    def tree_predictions(self, Z) -> np.ndarray:
        Z = np.ascontiguousarray(np.atleast_2d(np.asarray(Z, dtype=float)))
        if Z.shape[1] != self.n_features:
            raise ModelError(f"expected {self.n_features} features, got {Z.shape[1]}")
        return _predict(self.offsets, self.feature, self.threshold, self.left, self.right,
                        self.value, Z)

    def save(self, path) -> None:
        path = Path(path)
        np.savez(path.with_suffix(".npz"), offsets=self.offsets, feature=self.feature,
                 threshold=self.threshold, left=self.left, right=self.right, value=self.value,
                 header=np.array([FORMAT_VERSION, self.n_features], dtype=np.int64),
                 schema_hash=np.array(self.schema_hash))
        meta = dict(self.meta, format_version=FORMAT_VERSION, schema_hash=self.schema_hash,
                    n_features=self.n_features, n_trees=self.n_trees)
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "ForestModel":
        path = Path(path)
        try:
            z = np.load(path.with_suffix(".npz"), allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise ModelError(f"cannot read forest model {path}: {exc}") from exc
        version, n_features = (int(v) for v in z["header"])
        if version != FORMAT_VERSION:
            raise ModelError(f"unsupported forest format version {version}")
        meta_path = path.with_suffix(".json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(z["offsets"], z["feature"], z["threshold"], z["left"], z["right"],
                   z["value"], n_features, str(z["schema_hash"]), meta)


def _canonical_order(X, y):
    """Row order depending only on row contents, so shuffling the input is harmless."""
    return np.lexsort(np.column_stack([X, y[:, None]]).T[::-1])


def _grow_one(X, y, seed, mtry, min_leaf):
    rng = np.random.default_rng(seed)
    n, p = X.shape
    rows = rng.integers(0, n, size=n)
    keys = rng.random((max(1, 2 * n // min_leaf + 1), p))
    tree = _grow(X, y, rows.astype(np.int64), keys, mtry, min_leaf)
    inbag = np.bincount(rows, minlength=n) > 0
    return tree, inbag


def train_forest(features, targets, config: ForestConfig = ForestConfig(), *,
                 target_index: int = 0, schema_hash: str = "") -> ForestModel:
    """Fit one forest of regression trees for a single target column."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DataError("features must be (S, p) and targets (S,)")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("training data must be finite")
    if X.shape[0] < 2 * config.min_leaf:
        raise DataError("too few training rows")
    order = _canonical_order(X, y)
    X = np.ascontiguousarray(X[order])
    y = np.ascontiguousarray(y[order])
    n, p = X.shape
    mtry = config.resolved_mtry(p)
    if np.ptp(y) == 0:
        warnings.warn("constant training target; every tree is a single leaf", RuntimeWarning,
                      stacklevel=2)
    seeds = [np.random.SeedSequence(config.seed, spawn_key=(target_index, t))
             for t in range(config.n_trees)]
    results = Parallel(n_jobs=config.n_jobs, prefer="threads")(
        delayed(_grow_one)(X, y, s, mtry, config.min_leaf) for s in seeds)
    trees = [r[0] for r in results]
    sizes = np.array([t[0].size for t in trees])
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    cat = [np.concatenate([t[i] for t in trees]) for i in range(5)]
    meta = {"target_index": target_index, "n_trees": config.n_trees,
            "min_leaf": config.min_leaf, "mtry": mtry, "seed": config.seed,
            "n_train": n, "target_min": float(y.min()), "target_max": float(y.max())}
    model = ForestModel(offsets, cat[0], cat[1], cat[2], cat[3], cat[4], p, schema_hash, meta)

    inbag = np.vstack([r[1] for r in results])          # (trees, n)
    preds = model.tree_predictions(X)                   # (n, trees)
    oob = ~inbag.T
    cnt = oob.sum(axis=1)
    ok = cnt > 0
    if ok.sum() > 1 and np.var(y[ok]) > 0:
        oob_pred = (preds * oob).sum(axis=1)[ok] / cnt[ok]
        mse = float(np.mean((y[ok] - oob_pred) ** 2))
        model.meta.update(oob_mse=mse, oob_r2=1.0 - mse / float(np.var(y[ok])))
    return model


def predict(f: ForestModel, z, schema_hash: str | None = None):
    """Mean over trees of the leaf means reached by ``z`` (one row or a matrix)."""
    values = getattr(z, "values", z)
    schema_hash = getattr(z, "schema_hash", schema_hash)
    if schema_hash is not None and f.schema_hash and schema_hash != f.schema_hash:
        raise ModelError("feature schema does not match the one the forest was trained on")
    values = np.asarray(values, dtype=float)
    out = f.tree_predictions(values).mean(axis=1)
    return float(out[0]) if values.ndim == 1 else out
