"""Local linear surrogate explanations of single predictions.

Around one instance, perturbed neighbours are drawn by resampling every
feature's training-quartile bin uniformly and then a value uniformly within
that bin's observed range. Neighbours are weighted by an exponential kernel
on the Euclidean distance between standardized bin-membership indicators,
and a weighted ridge regression of the
model's probabilities on the standardized neighbours yields one slope per
feature.
"""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from sustain.errors import (
    DimensionMismatch,
    MalformedRow,
    NonpositiveWidth,
    RankDeficient,
    ValidationError,
)
from sustain.features import FEATURE_NAMES
from sustain.parallel import pmap
from sustain.tableio import read_table, write_table

MAX_BINS = 4


class DegenerateFeature(UserWarning):
    """A feature is constant in training; its bins collapse and it is held fixed."""


@dataclass(frozen=True)
class ExplainConfig:
    n_samples: int = 5000
    kernel_width: float | None = None  # default 0.75 * sqrt(n_features)
    ridge_alpha: float = 1.0
    seed: int = 0

    def width(self, n_features: int) -> float:
        return self.kernel_width if self.kernel_width is not None else 0.75 * np.sqrt(n_features)


@dataclass
class TrainStats:
    """Per-feature training summaries used to build neighbourhoods."""

    mean: np.ndarray
    std: np.ndarray
    quartiles: np.ndarray          # (n_features, 3)
    bin_lo: np.ndarray             # (n_features, MAX_BINS), NaN-padded
    bin_hi: np.ndarray
    n_bins: np.ndarray             # bins with at least one training value
    degenerate: np.ndarray         # constant in training
    names: list[str] = field(default_factory=lambda: list(FEATURE_NAMES))

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


def compute_train_stats(X, names: Sequence[str] | None = None) -> TrainStats:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("training statistics need a non-empty 2-D matrix")
    n_feat = X.shape[1]
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    degenerate = std == 0
    std = np.where(degenerate, 1.0, std)
    quartiles = np.quantile(X, [0.25, 0.5, 0.75], axis=0).T
    lo = np.full((n_feat, MAX_BINS), np.nan)
    hi = np.full((n_feat, MAX_BINS), np.nan)
    n_bins = np.zeros(n_feat, dtype=np.int64)
    for j in range(n_feat):
        col = X[:, j]
        uniq = np.unique(col)
        if uniq.size <= 2:
            groups = [np.array([u]) for u in uniq]
        else:
            edges = np.unique(quartiles[j])
            idx = np.searchsorted(edges, col, side="left")
            groups = [col[idx == b] for b in range(edges.size + 1)]
        groups = [g for g in groups if g.size]
        for b, g in enumerate(groups):
            lo[j, b] = g.min()
            hi[j, b] = g.max()
        n_bins[j] = len(groups)
    names = list(names) if names is not None else list(FEATURE_NAMES[:n_feat])
    if degenerate.any():
        fixed = [names[j] for j in np.flatnonzero(degenerate)]
        warnings.warn(f"constant in training, held fixed: {', '.join(fixed)}", DegenerateFeature,
                      stacklevel=2)
    return TrainStats(mean, std, quartiles, lo, hi, n_bins, degenerate, names)


def _instance_bins(x: np.ndarray, stats: TrainStats) -> np.ndarray:
    """Bin of each instance value; values outside every training range go to the nearest bin."""
    out = np.zeros(x.shape[0], dtype=np.int64)
    for j in range(x.shape[0]):
        k = int(stats.n_bins[j])
        if k > 1:
            out[j] = min(int(np.searchsorted(stats.bin_hi[j, :k], x[j], side="left")), k - 1)
    return out


def perturb(instance, stats: TrainStats, n_samples: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Neighbourhood sample around ``instance`` and its distances to the instance.

    Row 0 is the instance itself. Features that are constant in training
    keep the instance value. Distances are Euclidean on the standardized
    same-bin indicators, so one feature leaving the instance's bin adds
    1 / (p (1 - p)) to the squared distance, with p = 1 / bins.
    """
    x = np.asarray(instance, dtype=float).ravel()
    if x.shape[0] != stats.n_features:
        raise DimensionMismatch(f"instance has {x.shape[0]} features, stats have {stats.n_features}")
    if n_samples <= 0:
        return np.zeros((0, x.shape[0])), np.zeros(0)
    rng = np.random.default_rng(seed)
    n_feat = x.shape[0]
    bins = np.floor(rng.random((n_samples, n_feat)) * stats.n_bins).astype(np.int64)
    bins = np.minimum(bins, np.maximum(stats.n_bins - 1, 0))
    cols = np.arange(n_feat)
    lo = stats.bin_lo[cols, bins]
    hi = stats.bin_hi[cols, bins]
    samples = lo + rng.random((n_samples, n_feat)) * (hi - lo)
    samples[:, stats.degenerate] = x[stats.degenerate]
    samples[0] = x
    home = _instance_bins(x, stats)
    bins[0] = home
    k = stats.n_bins.astype(float)
    penalty = np.where(k > 1, k * k / np.maximum(k - 1, 1), 0.0)  # 1 / (p (1 - p)), p = 1/k
    moved = bins != home
    distances = np.sqrt(moved.astype(float) @ penalty)
    return samples, distances


def kernel_weight(distance, width: float):
    if not width > 0:
        raise NonpositiveWidth(f"kernel width must be positive, got {width}")
    d = np.asarray(distance, dtype=float)
    return np.exp(-(d * d) / (width * width))


@dataclass
class LocalFit:
    coef: np.ndarray
    intercept: float
    r2: float
    center: np.ndarray  # weighted mean of the design columns


def fit_local_linear(samples, outputs, weights, ridge_alpha: float = 1.0) -> LocalFit:
    """Weighted ridge least squares with an unpenalized intercept.

    Weights are rescaled to mean 1 first, so multiplying every weight by a
    constant leaves the fit unchanged.
    """
    Z = np.asarray(samples, dtype=float)
    y = np.asarray(outputs, dtype=float)
    w = np.asarray(weights, dtype=float)
    n, p = Z.shape
    if n < p + 1:
        raise ValidationError(f"need at least {p + 1} samples for {p} features, got {n}")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValidationError("weights must be non-negative and not all zero")
    if ridge_alpha < 0:
        raise ValidationError("ridge_alpha must be >= 0")
    w = w * (n / w.sum())
    center = w @ Z / n
    ybar = float(w @ y / n)
    Zc = Z - center
    yc = y - ybar
    A = (Zc * w[:, None]).T @ Zc
    b = (Zc * w[:, None]).T @ yc
    A[np.diag_indices(p)] += ridge_alpha
    if ridge_alpha == 0 and np.linalg.matrix_rank(A) < p:
        raise RankDeficient("design is singular and no ridge penalty was given")
    coef = np.linalg.solve(A, b)
    scale = max(1.0, float(np.linalg.norm(b)))
    for _ in range(3):
        resid = b - A @ coef
        if np.linalg.norm(resid) <= 1e-8 * scale:
            break
        coef = coef + np.linalg.solve(A, resid)
    fitted = ybar + Zc @ coef
    sst = float(w @ (yc * yc))
    sse = float(w @ ((y - fitted) ** 2))
    r2 = 1.0 if sst <= 1e-300 else 1.0 - sse / sst
    return LocalFit(coef, ybar - float(center @ coef), r2, center)


@dataclass
class LocalExplanation:
    project_id: str
    coefficients: dict[str, float]
    intercept: float
    local_fidelity_r2: float
    n_samples: int
    seed: int
    contributions: dict[str, float] = field(default_factory=dict)
    prediction: float = float("nan")

    def coef_array(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()))


def derive_seed(master: int, project_id: str) -> int:
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, zlib.crc32(project_id.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


def _proba_fn(model) -> Callable[[np.ndarray], np.ndarray]:
    if callable(model) and not hasattr(model, "predict_proba"):
        return model
    return model.predict_proba


def explain(model, instance, stats: TrainStats, config: ExplainConfig | None = None,
            project_id: str = "", seed: int | None = None) -> LocalExplanation:
    """Explain one prediction.

    Slopes are per training standard deviation. ``contributions`` holds
    slope x standardized instance value, i.e. the feature's signed share of
    the prediction relative to an average training project.
    """
    cfg = config or ExplainConfig()
    seed = cfg.seed if seed is None else seed
    x = np.asarray(instance, dtype=float).ravel()
    samples, dist = perturb(x, stats, cfg.n_samples, seed)
    proba = _proba_fn(model)
    outputs = np.asarray(proba(samples), dtype=float).ravel()
    weights = kernel_weight(dist, cfg.width(stats.n_features))
    live = ~stats.degenerate
    Z = stats.standardize(samples)[:, live]
    coef = np.zeros(stats.n_features)
    contrib = np.zeros(stats.n_features)
    if live.any():
        fit = fit_local_linear(Z, outputs, weights, cfg.ridge_alpha)
        coef[live] = fit.coef
        contrib[live] = fit.coef * stats.standardize(x)[live]
        intercept, r2 = fit.intercept, fit.r2
    else:
        intercept, r2 = float(np.average(outputs, weights=weights)), 1.0
    names = stats.names
    return LocalExplanation(
        project_id=project_id,
        coefficients={n: float(c) for n, c in zip(names, coef)},
        intercept=float(intercept),
        local_fidelity_r2=float(r2),
        n_samples=cfg.n_samples,
        seed=int(seed),
        contributions={n: float(c) for n, c in zip(names, contrib)},
        prediction=float(outputs[0]),
    )


def explain_corpus(model, X, project_ids: Sequence[str], stats: TrainStats,
                   config: ExplainConfig | None = None) -> list[LocalExplanation]:
    """Explain every row; each project's seed derives from the master seed and its id."""
    cfg = config or ExplainConfig()
    X = np.asarray(X, dtype=float)
    if X.shape[0] != len(project_ids):
        raise DimensionMismatch(f"{X.shape[0]} rows but {len(project_ids)} project ids")
    return pmap(
        lambda i: explain(model, X[i], stats, cfg, project_ids[i], derive_seed(cfg.seed, project_ids[i])),
        range(len(project_ids)),
    )


def explanation_columns(names: Sequence[str] = FEATURE_NAMES) -> list[str]:
    return (["project_id", *names, "intercept", "fidelity", "seed"]
            + [f"contrib:{n}" for n in names] + ["prediction"])


def write_explanations(expls: Sequence[LocalExplanation], path: str | Path, params=None) -> None:
    names = list(expls[0].coefficients) if expls else list(FEATURE_NAMES)

    def rows():
        for e in sorted(expls, key=lambda e: e.project_id):
            yield ([e.project_id, *(e.coefficients[n] for n in names), e.intercept,
                    e.local_fidelity_r2, e.seed]
                   + [e.contributions.get(n, 0.0) for n in names] + [e.prediction])

    write_table(path, explanation_columns(names), rows(), params)


def read_explanations(path: str | Path, n_samples: int = 0) -> list[LocalExplanation]:
    header, rows = read_table(path)
    if not header or header[0] != "project_id" or "intercept" not in header:
        raise MalformedRow(1, "not an explanations table", path)
    k = header.index("intercept")
    names = header[1:k]
    contrib_names = [h[len("contrib:"):] for h in header if h.startswith("contrib:")]
    out = []
    for line_no, cells in rows:
        if len(cells) != len(header):
            raise MalformedRow(line_no, f"expected {len(header)} cells, found {len(cells)}", path)
        try:
            coefs = {n: float(c) for n, c in zip(names, cells[1:k])}
            contrib_start = k + 3
            contrib = {n: float(c) for n, c in zip(contrib_names, cells[contrib_start:contrib_start + len(contrib_names)])}
            pred = float(cells[-1]) if header[-1] == "prediction" else float("nan")
            out.append(LocalExplanation(cells[0], coefs, float(cells[k]), float(cells[k + 1]),
                                        n_samples, int(cells[k + 2]), contrib, pred))
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc), path) from None
    return out
