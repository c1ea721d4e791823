"""Stratified k-fold evaluation, the logistic baseline, and column-subset ablations."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from sustain.errors import DimensionMismatch, TooFewSamples, ValidationError
from sustain.features import FEATURE_INDEX, FEATURE_NAMES, dimension_columns
from sustain.learner.boosting import TrainConfig, train, validate_xy
from sustain.learner.logreg import fit_logreg
from sustain.learner.metrics import auc, precision_recall_at
from sustain.parallel import pmap

MODELS = ("gbt", "logreg")


@dataclass
class EvalReport:
    auc: float
    precision: float
    recall: float
    fold_auc: list[float]
    fold_precision: list[float]
    fold_recall: list[float]
    folds: int
    n: int
    n_pos: int
    params: dict = field(default_factory=dict)
    dimension: str = "all"
    model: str = "gbt"
    undefined_precision_folds: int = 0

    def row(self) -> dict:
        return {
            "m": self.params.get("m"),
            "t": self.params.get("t"),
            "k": self.params.get("k"),
            "dimension": self.dimension,
            "model": self.model,
            "auc": self.auc,
            "precision": self.precision,
            "recall": self.recall,
            "folds": self.folds,
            "n": self.n,
            "n_pos": self.n_pos,
        }

    def to_dict(self) -> dict:
        d = self.row()
        d.update(
            fold_auc=self.fold_auc,
            fold_precision=self.fold_precision,
            fold_recall=self.fold_recall,
            undefined_precision_folds=self.undefined_precision_folds,
        )
        return d


def stratified_folds(labels, folds: int = 10, seed: int = 0) -> np.ndarray:
    """Fold index per row; each class is shuffled then dealt round-robin."""
    y = np.asarray(labels).astype(int)
    if folds < 2:
        raise ValidationError(f"need at least 2 folds, got {folds}")
    for c in (0, 1):
        if np.sum(y == c) < folds:
            raise TooFewSamples(
                f"class {c} has {int(np.sum(y == c))} rows, fewer than {folds} folds"
            )
    rng = np.random.default_rng(seed)
    assignment = np.empty(y.size, dtype=np.int64)
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == c))
        assignment[idx] = np.arange(idx.size) % folds
    return assignment


def _fit_predict(model: str, X_tr, y_tr, X_te, config: TrainConfig, fold: int) -> np.ndarray:
    if model == "gbt":
        ens = train(X_tr, y_tr, replace(config, seed=config.seed + fold))
        return ens.predict_proba(X_te)
    if model == "logreg":
        return fit_logreg(X_tr, y_tr).predict_proba(X_te)
    raise ValidationError(f"unknown model {model!r}; expected one of {MODELS}")


def kfold_cv(
    X,
    y,
    config: TrainConfig | None = None,
    folds: int = 10,
    seed: int = 0,
    *,
    model: str = "gbt",
    params: dict | None = None,
    dimension: str = "all",
    threshold: float = 0.5,
) -> EvalReport:
    config = config or TrainConfig()
    X, yf = validate_xy(X, y)
    y = yf.astype(int)
    assign = stratified_folds(y, folds, seed)

    def run(fold):
        test = assign == fold
        p = _fit_predict(model, X[~test], y[~test], X[test], config, fold)
        pr = precision_recall_at(p, y[test], threshold)
        return auc(p, y[test]), pr.precision, pr.recall, pr.precision_defined

    results = pmap(run, range(folds))
    a, p, r, defined = (list(col) for col in zip(*results))
    return EvalReport(
        auc=float(np.mean(a)),
        precision=float(np.mean(p)),
        recall=float(np.mean(r)),
        fold_auc=[float(v) for v in a],
        fold_precision=[float(v) for v in p],
        fold_recall=[float(v) for v in r],
        folds=folds,
        n=int(y.size),
        n_pos=int(y.sum()),
        params=dict(params or {}),
        dimension=dimension,
        model=model,
        undefined_precision_folds=int(sum(not d for d in defined)),
    )


def train_baseline_logreg(X, y, folds: int = 10, seed: int = 0, params: dict | None = None):
    """Fitted logistic model on all rows plus its cross-validated report."""
    model = fit_logreg(X, y)
    report = kfold_cv(X, y, folds=folds, seed=seed, model="logreg", params=params)
    return model, report


def ablation_run(
    X,
    y,
    dimension: str,
    config: TrainConfig | None = None,
    folds: int = 10,
    seed: int = 0,
    params: dict | None = None,
) -> EvalReport:
    """Cross-validated boosted model restricted to one documented column subset."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(FEATURE_NAMES):
        raise DimensionMismatch(f"ablations need the full {len(FEATURE_NAMES)}-column matrix")
    cols = [FEATURE_INDEX[n] for n in dimension_columns(dimension)]
    return kfold_cv(X[:, cols], y, config, folds, seed, params=params, dimension=dimension)
