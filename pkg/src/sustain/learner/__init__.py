from sustain.learner.boosting import BoostedEnsemble, TrainConfig, Tree, predict_proba, train
from sustain.learner.logreg import LogisticModel, fit_logreg
from sustain.learner.metrics import auc, precision_recall_at
from sustain.learner.validation import (
    EvalReport,
    ablation_run,
    kfold_cv,
    stratified_folds,
    train_baseline_logreg,
)

__all__ = [
    "BoostedEnsemble",
    "EvalReport",
    "LogisticModel",
    "TrainConfig",
    "Tree",
    "ablation_run",
    "auc",
    "fit_logreg",
    "kfold_cv",
    "precision_recall_at",
    "predict_proba",
    "stratified_folds",
    "train",
    "train_baseline_logreg",
]
