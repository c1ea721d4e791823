"""Stage compositions shared by the CLI and the tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from sustain.corpus import SustainedLabel, label_sustained
from sustain.errors import SingleClass, TooFewSamples
from sustain.features import FeatureVector, extract_all, feature_matrix
from sustain.ingest import Corpus, ParticipantProfile, ProjectSnapshot, window_events
from sustain.learner.boosting import TrainConfig
from sustain.learner.validation import EvalReport, ablation_run
from sustain.parallel import pmap
from sustain.roles import assign_roles

REFERENCE_GRID = {"m": (1, 3, 5), "t": (1, 2), "k": (1, 2, 6)}


def label_corpus(corpus: Corpus, t: float, k: float) -> dict[str, SustainedLabel]:
    ids = corpus.ids()
    labels = pmap(lambda pid: label_sustained(corpus.logs[pid], t, k), ids)
    return dict(zip(ids, labels))


def featurize_corpus(
    corpus: Corpus,
    profiles: Mapping[str, ParticipantProfile],
    m: int,
    labels: Mapping[str, SustainedLabel] | None = None,
    *,
    on_missing: str = "error",
) -> list[FeatureVector]:
    """Window, role assignment and extraction for every project, in id order."""

    def one(pid):
        win = window_events(corpus.logs[pid], m)
        snap = corpus.snapshots.get(pid, ProjectSnapshot(pid))
        fv = extract_all(win, assign_roles(win), profiles, snap, m, on_missing=on_missing)
        if labels is not None and pid in labels:
            fv.status = labels[pid].status
        return fv

    return pmap(one, corpus.ids())


@dataclass
class GridCell:
    m: int
    t: float
    k: float
    report: EvalReport | None
    n: int
    n_pos: int
    note: str = ""

    def row(self) -> dict:
        if self.report is not None:
            return {**self.report.row(), "note": self.note}
        nan = float("nan")
        return {"m": self.m, "t": self.t, "k": self.k, "dimension": "all", "model": "gbt",
                "auc": nan, "precision": nan, "recall": nan, "folds": 0,
                "n": self.n, "n_pos": self.n_pos, "note": self.note}


def evaluate_grid(
    corpus: Corpus,
    profiles: Mapping[str, ParticipantProfile],
    ms: Sequence[int],
    ts: Sequence[float],
    ks: Sequence[float],
    config: TrainConfig | None = None,
    *,
    folds: int = 10,
    seed: int = 0,
    dimension: str = "all",
    on_missing: str = "error",
) -> list[GridCell]:
    """Cross-validated report for every (m, t, k); degenerate cells still get a row."""
    feats = {m: featurize_corpus(corpus, profiles, m, on_missing=on_missing) for m in ms}
    labels = {(t, k): label_corpus(corpus, t, k) for t, k in itertools.product(ts, ks)}
    cells = []
    for m, t, k in itertools.product(ms, ts, ks):
        X = feature_matrix(feats[m])
        lab = labels[(t, k)]
        y = np.array([lab[fv.project_id].status for fv in feats[m]], dtype=int)
        params = {"m": m, "t": t, "k": k}
        try:
            rep = ablation_run(X, y, dimension, config, folds, seed, params=params)
            cells.append(GridCell(m, t, k, rep, int(y.size), int(y.sum())))
        except (SingleClass, TooFewSamples) as exc:
            cells.append(GridCell(m, t, k, None, int(y.size), int(y.sum()), note=str(exc)))
    return cells
