"""Random forest with out-of-bag permutation importance.

Built from scratch so that out-of-bag bookkeeping, determinism, and
per-attribute permutation importance are fully controlled.  Trees are
CART-style with Gini impurity; categorical features split on equality
against one code, ordinal (binned) features split on a code threshold.

Importance of an attribute is the mean drop in out-of-bag accuracy when
that attribute's column is permuted, averaged over a number of seeded
permutations.  Permuting a constant column is the identity, so constant
attributes score exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .._seeds import STREAM_TREE


class _Tree:
    """CART tree over small integer codes, stored as parallel arrays."""

    def __init__(self, min_samples_leaf: int, max_depth: Optional[int]):
        self.min_samples_leaf = min_samples_leaf
        self.max_depth = max_depth
        self.feature: list[int] = []
        self.is_eq: list[bool] = []  # equality split (categorical) vs <= split
        self.threshold: list[int] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaf_class: list[int] = []
        self.used_features: set[int] = set()

    def fit(self, X, y, kinds, n_codes, mtry, rng) -> None:
        self._X, self._y = X, y
        self._kinds, self._n_codes, self._mtry, self._rng = kinds, n_codes, mtry, rng
        self._kmax = max(n_codes)
        self._build(np.arange(X.shape[0]), 0)
        del self._X, self._y, self._rng

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.is_eq.append(False)
        self.threshold.append(0)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf_class.append(-1)
        return len(self.feature) - 1

    def _build(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        ys = self._y[idx]
        counts = np.bincount(ys, minlength=2)
        majority = int(counts[1] > counts[0])
        if (
            counts[0] == 0
            or counts[1] == 0
            or idx.size < 2 * self.min_samples_leaf
            or (self.max_depth is not None and depth >= self.max_depth)
        ):
            self.leaf_class[node] = majority
            return node
        split = self._best_split(idx, ys, counts)
        if split is None:
            self.leaf_class[node] = majority
            return node
        feat, is_eq, threshold, mask = split
        self.feature[node] = feat
        self.is_eq[node] = is_eq
        self.threshold[node] = threshold
        self.used_features.add(feat)
        left_idx = idx[mask]
        right_idx = idx[~mask]
        self.left[node] = self._build(left_idx, depth + 1)
        self.right[node] = self._build(right_idx, depth + 1)
        return node

    def _best_split(self, idx, ys, counts):
        d = self._X.shape[1]
        mtry = min(self._mtry, d)
        chosen = self._rng.choice(d, size=mtry, replace=False)
        chosen.sort()
        n = idx.size
        total = counts
        parent_gini = 1.0 - float(((total / n) ** 2).sum())
        best = None  # (decrease, feat, is_eq, threshold)
        min_leaf = self.min_samples_leaf
        # one bincount over all tried features: cell (j, code, class)
        kmax = self._kmax
        codes_block = self._X[np.ix_(idx, chosen)]
        flat = (np.arange(mtry) * kmax)[None, :] * 2 + codes_block * 2 + ys[:, None]
        all_counts = np.bincount(flat.ravel(), minlength=2 * kmax * mtry).reshape(
            mtry, kmax, 2
        )
        for j, feat in enumerate(chosen):
            k = self._n_codes[feat]
            cnt = all_counts[j, :k]
            if self._kinds[feat] == "ord":
                left = cnt.cumsum(axis=0)[:-1]  # split "code <= t", t = 0..k-2
                thresholds = np.arange(k - 1)
                is_eq = False
            else:
                left = cnt  # split "code == v"
                thresholds = np.arange(k)
                is_eq = True
            right = total - left
            nl = left.sum(axis=1)
            nr = right.sum(axis=1)
            valid = (nl >= min_leaf) & (nr >= min_leaf)
            if not valid.any():
                continue
            # weighted child impurity: n_c * gini_c = n_c - sum(counts^2)/n_c
            wl = nl - (left * left).sum(axis=1) / np.maximum(nl, 1.0)
            wr = nr - (right * right).sum(axis=1) / np.maximum(nr, 1.0)
            decrease = parent_gini - (wl + wr) / n
            decrease[~valid] = -np.inf
            t = int(decrease.argmax())
            if decrease[t] > 1e-12 and (best is None or decrease[t] > best[0]):
                best = (float(decrease[t]), int(feat), is_eq, int(thresholds[t]))
        if best is None:
            return None
        _, feat, is_eq, threshold = best
        codes = self._X[idx, feat]
        mask = (codes == threshold) if is_eq else (codes <= threshold)
        return feat, is_eq, threshold, mask

    def predict_one(self, row) -> int:
        node = 0
        while self.leaf_class[node] < 0:
            code = row[self.feature[node]]
            if self.is_eq[node]:
                node = self.left[node] if code == self.threshold[node] else self.right[node]
            else:
                node = self.left[node] if code <= self.threshold[node] else self.right[node]
        return self.leaf_class[node]

    def predict_one_override(self, row, feat: int, value: int) -> int:
        node = 0
        while self.leaf_class[node] < 0:
            f = self.feature[node]
            code = value if f == feat else row[f]
            if self.is_eq[node]:
                node = self.left[node] if code == self.threshold[node] else self.right[node]
            else:
                node = self.left[node] if code <= self.threshold[node] else self.right[node]
        return self.leaf_class[node]


class RandomForest:
    """Bagged CART trees with Gini splits and OOB accuracy tracking."""

    def __init__(
        self,
        n_trees: int = 200,
        max_depth: Optional[int] = None,
        min_samples_leaf: int = 2,
        random_state: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state

    def get_params(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "random_state": self.random_state,
        }

    def fit(self, X: np.ndarray, y: np.ndarray, kinds: Sequence[str], n_codes: Sequence[int]):
        X = np.asarray(X, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        n, d = X.shape
        if n < 10:
            raise ValueError(f"need at least 10 training vectors, got {n}")
        if np.unique(y).size < 2:
            raise ValueError("training data contains a single label")
        self.X_, self.y_ = X, y
        self.kinds_ = list(kinds)
        self.n_codes_ = list(n_codes)
        self.n_features_ = d
        mtry = math.ceil(math.sqrt(d))
        root = np.random.SeedSequence([STREAM_TREE, self.random_state])
        children = root.spawn(self.n_trees)
        self.trees_: list[_Tree] = []
        self.oob_indices_: list[np.ndarray] = []
        all_idx = np.arange(n)
        for ss in children:
            rng = np.random.Generator(np.random.PCG64(ss))
            bootstrap = rng.integers(0, n, size=n)
            oob = np.setdiff1d(all_idx, bootstrap)
            tree = _Tree(self.min_samples_leaf, self.max_depth)
            tree.fit(X[bootstrap], y[bootstrap], self.kinds_, self.n_codes_, mtry, rng)
            self.trees_.append(tree)
            self.oob_indices_.append(oob)
        rows = [X[i].tolist() for i in range(n)]
        self._base_oob_preds = [
            np.array([t.predict_one(rows[i]) for i in oob], dtype=np.int64)
            for t, oob in zip(self.trees_, self.oob_indices_)
        ]
        self.oob_accuracy_ = self._oob_accuracy(self._base_oob_preds)
        return self

    def _oob_accuracy(self, per_tree_preds: Sequence[np.ndarray]) -> float:
        n = self.X_.shape[0]
        votes = np.zeros((n, 2), dtype=np.int64)
        for oob, preds in zip(self.oob_indices_, per_tree_preds):
            np.add.at(votes, (oob, preds), 1)
        counted = votes.sum(axis=1) > 0
        majority = (votes[:, 1] > votes[:, 0]).astype(np.int64)
        if not counted.any():
            raise ValueError("no out-of-bag samples; increase data or tree count")
        return float(np.mean(majority[counted] == self.y_[counted]))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        votes = np.zeros((X.shape[0], 2), dtype=np.int64)
        for tree in self.trees_:
            for i in range(X.shape[0]):
                votes[i, tree.predict_one(X[i])] += 1
        return (votes[:, 1] > votes[:, 0]).astype(np.int64)


def train_forest(
    X: np.ndarray,
    y: np.ndarray,
    kinds: Sequence[str],
    n_codes: Sequence[int],
    n_trees: int = 200,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 2,
    seed: int = 0,
) -> RandomForest:
    forest = RandomForest(
        n_trees=n_trees,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        random_state=seed,
    )
    return forest.fit(X, y, kinds, n_codes)


@dataclass(frozen=True)
class ImportanceResult:
    names: tuple[str, ...]
    means: np.ndarray  # mean OOB-accuracy drop per attribute
    stds: np.ndarray  # std of the drop over repetitions
    repetitions: int
    baseline: float  # unpermuted OOB accuracy

    def ranking(self) -> list[tuple[str, float, float]]:
        order = np.argsort(-self.means, kind="stable")
        return [(self.names[i], float(self.means[i]), float(self.stds[i])) for i in order]


def permutation_importance(
    forest: RandomForest,
    names: Sequence[str],
    repetitions: int = 20,
    seed: int = 0,
) -> ImportanceResult:
    """Mean OOB-accuracy drop per attribute over seeded permutations.

    Predictions under a permuted column are read from precomputed
    per-tree tables (prediction of each OOB sample for every possible
    code of each attribute the tree actually uses), which makes the
    repetition loop a pure lookup.
    """
    if len(names) != forest.n_features_:
        raise ValueError(
            f"schema mismatch: {len(names)} names for {forest.n_features_} features"
        )
    X, y = forest.X_, forest.y_
    n, d = X.shape

    # tables[t][a][i, v] = prediction for OOB sample i of tree t with
    # attribute a overridden to code v
    rows_as_lists = [X[i].tolist() for i in range(n)]
    tables: list[dict[int, np.ndarray]] = []
    arange_cache: list[np.ndarray] = []
    for tree, oob in zip(forest.trees_, forest.oob_indices_):
        per_attr: dict[int, np.ndarray] = {}
        for a in sorted(tree.used_features):
            k = forest.n_codes_[a]
            table = np.empty((oob.size, k), dtype=np.int64)
            for i, row_idx in enumerate(oob):
                row = rows_as_lists[row_idx]
                for v in range(k):
                    table[i, v] = tree.predict_one_override(row, a, v)
            per_attr[a] = table
        tables.append(per_attr)
        arange_cache.append(np.arange(oob.size))

    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([STREAM_TREE, seed, repetitions]))
    )
    drops = np.zeros((d, repetitions), dtype=np.float64)
    for rep in range(repetitions):
        perm = rng.permutation(n)
        for a in range(d):
            permuted_col = X[perm, a]
            per_tree_preds = []
            for t, oob in enumerate(forest.oob_indices_):
                table = tables[t].get(a)
                if table is not None:
                    per_tree_preds.append(table[arange_cache[t], permuted_col[oob]])
                else:
                    per_tree_preds.append(forest._base_oob_preds[t])
            drops[a, rep] = forest.oob_accuracy_ - forest._oob_accuracy(per_tree_preds)

    return ImportanceResult(
        names=tuple(names),
        means=drops.mean(axis=1),
        stds=drops.std(axis=1),
        repetitions=repetitions,
        baseline=forest.oob_accuracy_,
    )


@dataclass(frozen=True)
class SelectionResult:
    names: tuple[str, ...]  # selected attributes, by decreasing importance
    low_confidence: bool  # True when the 2-standard-error rule selected nothing


def select_attributes(importance: ImportanceResult) -> SelectionResult:
    """Attributes whose mean drop clears zero by two standard errors.

    Falls back to the top two attributes by mean drop (flagged low
    confidence) when nothing clears the bar.
    """
    se = importance.stds / math.sqrt(importance.repetitions)
    qualified = [
        (float(importance.means[i]), importance.names[i])
        for i in range(len(importance.names))
        if importance.means[i] >= 2.0 * se[i] and importance.means[i] > 0.0
    ]
    if qualified:
        qualified.sort(key=lambda pair: (-pair[0], pair[1]))
        return SelectionResult(names=tuple(name for _, name in qualified), low_confidence=False)
    ranked = importance.ranking()
    return SelectionResult(names=tuple(name for name, _, _ in ranked[:2]), low_confidence=True)
