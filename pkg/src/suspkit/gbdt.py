"""Gradient-boosted decision trees for binary classification.

Histogram-based: features are quantile-binned once (at most 256 bins,
uint8 codes) and split gains use second-order statistics of the
logistic loss.  Trees grow level-wise to a depth cap.  Split
thresholds are stored as real feature values chosen so that binned
decisions during training and float comparisons at prediction time
agree exactly on the training data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MAX_BINS = 256


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(y: np.ndarray, proba: np.ndarray) -> float:
    p = np.clip(proba, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _quantile_uppers(column: np.ndarray, max_bins: int) -> np.ndarray:
    # Cut points are data quantiles; code b covers values <= uppers[b],
    # the last bin is unbounded above.
    qs = np.linspace(0.0, 1.0, max_bins + 1)[1:-1]
    return np.unique(np.quantile(column, qs))


@dataclass
class BinMapper:
    uppers: list[np.ndarray]  # per feature, sorted cut values

    @classmethod
    def fit(cls, X: np.ndarray, max_bins: int = _MAX_BINS) -> "BinMapper":
        return cls(uppers=[_quantile_uppers(X[:, j], max_bins) for j in range(X.shape[1])])

    def transform(self, X: np.ndarray) -> np.ndarray:
        codes = np.empty(X.shape, dtype=np.uint8)
        for j, uppers in enumerate(self.uppers):
            codes[:, j] = np.searchsorted(uppers, X[:, j], side="left")
        return codes

    def n_bins(self, j: int) -> int:
        return len(self.uppers[j]) + 1


@dataclass
class Tree:
    """Array-of-nodes binary tree; feature -1 marks a leaf."""

    feature: np.ndarray  # (n_nodes,) int32
    threshold: np.ndarray  # (n_nodes,) float64, go left when x <= threshold
    left: np.ndarray  # (n_nodes,) int32
    right: np.ndarray  # (n_nodes,) int32
    value: np.ndarray  # (n_nodes,) float64, meaningful at leaves

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[idx]
            active = feat >= 0
            if not active.any():
                return self.value[idx]
            rows = np.flatnonzero(active)
            go_left = X[rows, feat[rows]] <= self.threshold[idx[rows]]
            idx[rows] = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int32),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int32),
            right=np.asarray(data["right"], dtype=np.int32),
            value=np.asarray(data["value"], dtype=np.float64),
        )


@dataclass
class _NodeBuild:
    node_id: int
    depth: int
    rows: np.ndarray


def _best_split(
    codes_col: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    rows_by_node: list[np.ndarray],
    n_bins: int,
    lam: float,
    min_child_hess: float,
) -> list[tuple[float, int]]:
    """Best (gain, split_bin) per node for one feature, histogram route."""
    out = []
    for rows in rows_by_node:
        binned = codes_col[rows]
        g_hist = np.bincount(binned, weights=g[rows], minlength=n_bins)
        h_hist = np.bincount(binned, weights=h[rows], minlength=n_bins)
        gl = np.cumsum(g_hist)[:-1]
        hl = np.cumsum(h_hist)[:-1]
        gt, ht = g_hist.sum(), h_hist.sum()
        gr, hr = gt - gl, ht - hl
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = gl**2 / (hl + lam) + gr**2 / (hr + lam) - gt**2 / (ht + lam)
        gain[(hl < min_child_hess) | (hr < min_child_hess)] = -np.inf
        if gain.size == 0:
            out.append((-np.inf, -1))
        else:
            best = int(np.argmax(gain))
            out.append((float(gain[best]), best))
    return out


class GbdtClassifier:
    """Boosted trees over binned features with a logistic link."""

    def __init__(
        self,
        n_rounds: int = 200,
        learning_rate: float = 0.1,
        max_depth: int = 6,
        reg_lambda: float = 1.0,
        min_child_hess: float = 1e-3,
        max_bins: int = _MAX_BINS,
    ):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.min_child_hess = min_child_hess
        self.max_bins = max_bins
        self.trees: list[Tree] = []
        self.base_score = 0.0
        self.train_loss: list[float] = []
        self.n_features = 0
        self._split_gain: np.ndarray | None = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GbdtClassifier":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (n, d) with matching y")
        if not np.isfinite(X).all():
            raise ValueError("X must be finite (impute first)")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("labels must be 0 or 1")
        n, d = X.shape
        self.n_features = d
        mapper = BinMapper.fit(X, self.max_bins)
        codes = mapper.transform(X)

        pos_rate = np.clip(y.mean(), 1e-6, 1.0 - 1e-6)
        self.base_score = float(np.log(pos_rate / (1.0 - pos_rate)))
        raw = np.full(n, self.base_score)
        self.trees = []
        self.train_loss = []
        self._split_gain = np.zeros(d)

        for _ in range(self.n_rounds):
            p = sigmoid(raw)
            g = p - y
            h = p * (1.0 - p)
            tree = self._grow_tree(codes, mapper, g, h)
            self.trees.append(tree)
            raw += self.learning_rate * tree.predict(X)
            self.train_loss.append(log_loss(y, sigmoid(raw)))
        return self

    def _grow_tree(
        self, codes: np.ndarray, mapper: BinMapper, g: np.ndarray, h: np.ndarray
    ) -> Tree:
        lam = self.reg_lambda
        feature = [np.int32(-1)]
        threshold = [0.0]
        left = [np.int32(-1)]
        right = [np.int32(-1)]
        value = [0.0]

        frontier = [_NodeBuild(node_id=0, depth=0, rows=np.arange(codes.shape[0]))]
        while frontier:
            splittable: list[_NodeBuild] = []
            settled: list[_NodeBuild] = []
            for nb in frontier:
                if nb.depth < self.max_depth and nb.rows.size > 1:
                    splittable.append(nb)
                else:
                    settled.append(nb)
            for nb in settled:
                gs, hs = g[nb.rows].sum(), h[nb.rows].sum()
                value[nb.node_id] = -gs / (hs + lam)
            if not splittable:
                break

            rows_by_node = [nb.rows for nb in splittable]
            best_gain = np.full(len(splittable), -np.inf)
            best_feat = np.full(len(splittable), -1, dtype=np.int64)
            best_bin = np.full(len(splittable), -1, dtype=np.int64)
            for j in range(codes.shape[1]):
                n_bins = mapper.n_bins(j)
                if n_bins < 2:
                    continue
                for i, (gain, split_bin) in enumerate(
                    _best_split(codes[:, j], g, h, rows_by_node, n_bins, lam, self.min_child_hess)
                ):
                    if gain > best_gain[i]:
                        best_gain[i] = gain
                        best_feat[i] = j
                        best_bin[i] = split_bin

            next_frontier: list[_NodeBuild] = []
            for i, nb in enumerate(splittable):
                if best_gain[i] <= 0.0:
                    gs, hs = g[nb.rows].sum(), h[nb.rows].sum()
                    value[nb.node_id] = -gs / (hs + lam)
                    continue
                j, s = int(best_feat[i]), int(best_bin[i])
                self._split_gain[j] += best_gain[i]
                go_left = codes[nb.rows, j] <= s
                feature[nb.node_id] = np.int32(j)
                threshold[nb.node_id] = float(mapper.uppers[j][s])
                for mask in (go_left, ~go_left):
                    child = len(feature)
                    feature.append(np.int32(-1))
                    threshold.append(0.0)
                    left.append(np.int32(-1))
                    right.append(np.int32(-1))
                    value.append(0.0)
                    next_frontier.append(
                        _NodeBuild(node_id=child, depth=nb.depth + 1, rows=nb.rows[mask])
                    )
                left[nb.node_id] = np.int32(len(feature) - 2)
                right[nb.node_id] = np.int32(len(feature) - 1)
            frontier = next_frontier

        return Tree(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            value=np.asarray(value, dtype=np.float64),
        )

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        raw = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            raw += self.learning_rate * tree.predict(X)
        return raw

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def feature_importance(self) -> np.ndarray:
        """Total split gain per feature, normalized to sum to 1."""
        if self._split_gain is None:
            raise ValueError("model not fitted")
        total = self._split_gain.sum()
        if total == 0.0:
            return np.zeros_like(self._split_gain)
        return self._split_gain / total

    def to_dict(self) -> dict:
        return {
            "kind": "gbdt",
            "n_rounds": self.n_rounds,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "reg_lambda": self.reg_lambda,
            "min_child_hess": self.min_child_hess,
            "max_bins": self.max_bins,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "split_gain": self._split_gain.tolist() if self._split_gain is not None else None,
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GbdtClassifier":
        model = cls(
            n_rounds=data["n_rounds"],
            learning_rate=data["learning_rate"],
            max_depth=data["max_depth"],
            reg_lambda=data["reg_lambda"],
            min_child_hess=data["min_child_hess"],
            max_bins=data["max_bins"],
        )
        model.base_score = data["base_score"]
        model.n_features = data["n_features"]
        if data.get("split_gain") is not None:
            model._split_gain = np.asarray(data["split_gain"], dtype=np.float64)
        model.trees = [Tree.from_dict(t) for t in data["trees"]]
        return model
