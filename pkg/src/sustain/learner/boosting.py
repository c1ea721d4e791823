"""Second-order gradient boosting of regression trees with a logistic link.

Trees are grown level by level with exact greedy split search over every
distinct value of every sampled column. Split gain and leaf weights use the
usual regularized second-order formulas::

    gain = 1/2 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)]
    leaf = -G / (H + lambda)

where G and H are sums of gradients ``p - y`` and hessians ``p (1 - p)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from sustain.errors import DimensionMismatch, InvalidConfig, SingleClass, ValidationError

_EPS_PROB = 1e-16
MIN_SPLIT_GAIN = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    l2_lambda: float = 1.0
    subsample: float = 1.0
    colsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidConfig(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 0:
            raise InvalidConfig(f"max_depth must be >= 0, got {self.max_depth}")
        if not 0 < self.learning_rate <= 1:
            raise InvalidConfig(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if not 0 < self.subsample <= 1 or not 0 < self.colsample <= 1:
            raise InvalidConfig("subsample and colsample must lie in (0, 1]")
        if self.min_child_weight < 0 or self.l2_lambda < 0:
            raise InvalidConfig("min_child_weight and l2_lambda must be >= 0")


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    default_left: np.ndarray

    @classmethod
    def leaf(cls, weight: float) -> "Tree":
        return cls(
            np.array([-1], dtype=np.int64),
            np.array([0.0]),
            np.array([-1], dtype=np.int64),
            np.array([-1], dtype=np.int64),
            np.array([float(weight)]),
            np.array([True]),
        )

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        """Edges on the longest root-to-leaf path."""
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] >= 0:
                stack.append((int(self.left[node]), d + 1))
                stack.append((int(self.right[node]), d + 1))
            else:
                best = max(best, d)
        return best

    def to_records(self) -> list[dict]:
        out = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                out.append({"id": i, "leaf": float(self.value[i])})
            else:
                out.append(
                    {
                        "id": i,
                        "feature": int(self.feature[i]),
                        "threshold": float(self.threshold[i]),
                        "default_left": bool(self.default_left[i]),
                        "left": int(self.left[i]),
                        "right": int(self.right[i]),
                    }
                )
        return out

    @classmethod
    def from_records(cls, records: list[dict]) -> "Tree":
        n = len(records)
        t = cls(
            np.full(n, -1, dtype=np.int64),
            np.zeros(n),
            np.full(n, -1, dtype=np.int64),
            np.full(n, -1, dtype=np.int64),
            np.zeros(n),
            np.ones(n, dtype=bool),
        )
        for rec in records:
            i = rec["id"]
            if "leaf" in rec:
                t.value[i] = rec["leaf"]
            else:
                t.feature[i] = rec["feature"]
                t.threshold[i] = rec["threshold"]
                t.default_left[i] = rec.get("default_left", True)
                t.left[i] = rec["left"]
                t.right[i] = rec["right"]
        return t


@numba.njit(cache=True, nogil=True)
def _predict_margin(X, feature, threshold, left, right, default_left, value, roots, depths, base):
    """Sum of leaf values over packed trees.

    Leaves loop back to themselves (threshold +inf, both children = self), so
    every row takes exactly ``depths[t]`` steps in tree ``t`` with no
    data-dependent exit. Trees are the outer loop so per-row sums keep tree order.
    """
    n = X.shape[0]
    out = np.full(n, base)
    for t in range(roots.shape[0]):
        root = roots[t]
        depth = depths[t]
        for i in range(n):
            node = root
            for _ in range(depth):
                x = X[i, feature[node]]
                # NaN compares false and follows default_left
                go_right = (x >= threshold[node]) | ((x != x) & (not default_left[node]))
                node = left[node] + go_right * (right[node] - left[node])
            out[i] += value[node]
    return out


def _pack_trees(trees) -> tuple:
    """Concatenated node arrays in the self-looping leaf layout used for prediction."""
    if not trees:
        z = np.zeros(0, dtype=np.int64)
        return z, np.zeros(0), z, z, np.zeros(0, dtype=np.bool_), np.zeros(0), z, z
    sizes = [t.n_nodes for t in trees]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    feat, thr, left, right, dl, val, depths = [], [], [], [], [], [], []
    for t, o in zip(trees, offsets):
        leaf = t.feature < 0
        own = np.arange(t.n_nodes, dtype=np.int64) + o
        feat.append(np.where(leaf, 0, t.feature).astype(np.int64))
        thr.append(np.where(leaf, np.inf, t.threshold).astype(float))
        left.append(np.where(leaf, own, t.left.astype(np.int64) + o))
        right.append(np.where(leaf, own, t.right.astype(np.int64) + o))
        dl.append(np.where(leaf, True, t.default_left).astype(np.bool_))
        val.append(np.asarray(t.value, dtype=float))
        depths.append(t.depth())
    return (np.concatenate(feat), np.concatenate(thr), np.concatenate(left), np.concatenate(right),
            np.concatenate(dl), np.concatenate(val), offsets[:-1].copy(), np.asarray(depths, dtype=np.int64))


@numba.njit(cache=True, nogil=True)
def _best_splits(X, sort_idx, cols, node_of, g, h, G, H, lam, mcw):
    """Best (gain, feature, threshold) for every open node of one level."""
    n_nodes = G.shape[0]
    best_gain = np.full(n_nodes, -np.inf)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    GL = np.zeros(n_nodes)
    HL = np.zeros(n_nodes)
    last = np.zeros(n_nodes)
    seen = np.zeros(n_nodes, dtype=np.bool_)
    parent = np.empty(n_nodes)
    for j in range(n_nodes):
        parent[j] = G[j] * G[j] / (H[j] + lam)
    for c in range(cols.shape[0]):
        f = cols[c]
        GL[:] = 0.0
        HL[:] = 0.0
        seen[:] = False
        for pos in range(sort_idx.shape[1]):
            r = sort_idx[f, pos]
            j = node_of[r]
            if j < 0:
                continue
            v = X[r, f]
            if seen[j] and v > last[j]:
                gl = GL[j]
                hl = HL[j]
                gr = G[j] - gl
                hr = H[j] - hl
                if hl >= mcw and hr >= mcw:
                    gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent[j])
                    if gain > best_gain[j]:
                        mid = 0.5 * (last[j] + v)
                        if not (last[j] < mid and mid <= v):
                            mid = v
                        best_gain[j] = gain
                        best_feat[j] = f
                        best_thr[j] = mid
            GL[j] += g[r]
            HL[j] += h[r]
            last[j] = v
            seen[j] = True
    return best_gain, best_feat, best_thr


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.clip(_sigmoid(np.atleast_1d(z)), _EPS_PROB, 1 - _EPS_PROB).reshape(z.shape)


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, _EPS_PROB, 1 - _EPS_PROB)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


@dataclass
class BoostedEnsemble:
    base_score: float
    trees: list[Tree] = field(default_factory=list)
    n_features: int = 64
    feature_names: list[str] | None = None
    config: TrainConfig | None = None
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    def _pack(self):
        if self._packed is None or self._packed[0] != len(self.trees):
            self._packed = (len(self.trees), _pack_trees(self.trees))
        return self._packed[1]

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.ndim != 2 or X2.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"model expects {self.n_features} features, got shape {X.shape}"
            )
        return np.ascontiguousarray(X2), single

    def predict_margin(self, X) -> np.ndarray:
        X2, single = self._check(X)
        out = _predict_margin(X2, *self._pack(), float(self.base_score))
        return out[0] if single else out

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.predict_margin(X))

    def to_dict(self) -> dict:
        return {
            "format": "sustain-boosted-trees/1",
            "base_score": float(self.base_score),
            "n_features": int(self.n_features),
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "config": asdict(self.config) if self.config else None,
            "trees": [t.to_records() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BoostedEnsemble":
        if payload.get("format") != "sustain-boosted-trees/1":
            raise ValidationError("not a serialized boosted-tree model")
        cfg = payload.get("config")
        model = cls(
            base_score=float(payload["base_score"]),
            trees=[Tree.from_records(t) for t in payload["trees"]],
            n_features=int(payload["n_features"]),
            feature_names=payload.get("feature_names"),
            config=TrainConfig(**cfg) if cfg else None,
        )
        for t in model.trees:
            internal = t.feature >= 0
            if np.any(t.feature[internal] >= model.n_features):
                raise ValidationError("tree node references a feature index out of range")
            if not np.all(np.isfinite(t.value[~internal])):
                raise ValidationError("non-finite leaf weight")
        return model

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "BoostedEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict_proba(model, X) -> np.ndarray:
    return model.predict_proba(X)


def validate_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise DimensionMismatch(f"feature matrix must be 2-D, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows but {y.shape} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("labels must be 0/1")
    if X.shape[0] < 2 or y.min() == y.max():
        raise SingleClass("training data needs both classes")
    if not np.all(np.isfinite(X)):
        raise ValidationError("feature matrix contains non-finite values")
    return np.ascontiguousarray(X), y.astype(float)


def _grow_tree(X, sort_idx, in_sample, cols, g, h, cfg: TrainConfig) -> Tree:
    lam = cfg.l2_lambda
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
    node_of = np.where(in_sample, 0, -1).astype(np.int64)
    level = [0]
    for depth in range(cfg.max_depth + 1):
        active = node_of >= 0
        nl = len(level)
        G = np.bincount(node_of[active], weights=g[active], minlength=nl)
        H = np.bincount(node_of[active], weights=h[active], minlength=nl)
        if depth < cfg.max_depth:
            gain, feat, thr = _best_splits(X, sort_idx, cols, node_of, g, h, G, H, lam,
                                           cfg.min_child_weight)
        else:
            gain = np.full(nl, -np.inf)
            feat = np.full(nl, -1)
            thr = np.zeros(nl)
        next_level = []
        child_left = np.full(nl, -1, dtype=np.int64)
        child_right = np.full(nl, -1, dtype=np.int64)
        for j, node in enumerate(level):
            if gain[j] > MIN_SPLIT_GAIN:
                feature[node] = int(feat[j])
                threshold[node] = float(thr[j])
                for side in (left, right):
                    side[node] = len(feature)
                    feature.append(-1)
                    threshold.append(0.0)
                    left.append(-1)
                    right.append(-1)
                    value.append(0.0)
                child_left[j] = len(next_level)
                next_level.append(left[node])
                child_right[j] = len(next_level)
                next_level.append(right[node])
            else:
                value[node] = -cfg.learning_rate * G[j] / (H[j] + lam)
        if not next_level:
            break
        rows = np.flatnonzero(active)
        cur = node_of[rows]
        f_of = feat[cur]
        split_rows = child_left[cur] >= 0
        go_left = np.zeros(rows.shape[0], dtype=bool)
        go_left[split_rows] = X[rows[split_rows], f_of[split_rows]] < thr[cur[split_rows]]
        new = np.where(go_left, child_left[cur], child_right[cur])
        node_of[rows] = new
        level = next_level
    n = len(feature)
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
        np.ones(n, dtype=bool),
    )


def train(X, y, config: TrainConfig | None = None, feature_names=None, *, callback=None) -> BoostedEnsemble:
    """Fit a boosted ensemble; deterministic for a fixed ``config.seed``."""
    cfg = config or TrainConfig()
    X, yf = validate_xy(X, y)
    n, n_feat = X.shape
    rng = np.random.default_rng(cfg.seed)
    prior = yf.mean()
    model = BoostedEnsemble(
        base_score=math.log(prior / (1 - prior)),
        n_features=n_feat,
        feature_names=list(feature_names) if feature_names is not None else None,
        config=cfg,
    )
    sort_idx = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))
    margin = np.full(n, model.base_score)
    n_rows = max(1, int(round(cfg.subsample * n)))
    n_cols = max(1, int(round(cfg.colsample * n_feat)))
    all_cols = np.arange(n_feat, dtype=np.int64)
    for _ in range(cfg.n_trees):
        p = _sigmoid(margin)
        g = p - yf
        h = p * (1 - p)
        if n_rows < n:
            in_sample = np.zeros(n, dtype=bool)
            in_sample[rng.choice(n, n_rows, replace=False)] = True
        else:
            in_sample = np.ones(n, dtype=bool)
        cols = np.sort(rng.choice(n_feat, n_cols, replace=False)) if n_cols < n_feat else all_cols
        tree = _grow_tree(X, sort_idx, in_sample, cols.astype(np.int64), g, h, cfg)
        model.trees.append(tree)
        margin += _tree_outputs(tree, X)
        if callback is not None:
            callback(model, margin)
    return model


def _tree_outputs(tree: Tree, X: np.ndarray) -> np.ndarray:
    return _predict_margin(X, *_pack_trees([tree]), 0.0)
