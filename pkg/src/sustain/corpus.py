"""Project selection filters and sustained-activity labels."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from sustain.errors import EmptyCorpus, MalformedRow, NoCommits, ValidationError
from sustain.ingest import DAY, MONTH_DAYS, Corpus, EventKind, ProjectEventLog
from sustain.tableio import read_table, write_table

YEAR_DAYS = 365


def _utc(*args) -> int:
    return int(datetime(*args, tzinfo=timezone.utc).timestamp())


@dataclass(frozen=True)
class SelectionThresholds:
    min_commits: int = 0
    min_prs: int = 0
    min_issues: int = 0
    min_forks: int = 0
    min_stars: int = 0
    min_span_days: float = 0.0
    created_after: int = 0
    created_before: int = 2**62

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValidationError(f"threshold {name} must be >= 0, got {value}")

    @classmethod
    def reference(cls) -> "SelectionThresholds":
        """Cut-offs used for the published GHTorrent sample."""
        return cls(
            min_commits=57,
            min_prs=4,
            min_issues=1,
            min_forks=1,
            min_stars=2,
            min_span_days=3 * MONTH_DAYS,
            created_after=_utc(2012, 1, 1),
            created_before=_utc(2019, 3, 31, 23, 59, 59),
        )


@dataclass(frozen=True)
class LifetimeMetrics:
    commits: int
    prs: int
    issues: int
    forks: int
    stars: int
    span_days: float


def lifetime_metrics(log: ProjectEventLog) -> LifetimeMetrics:
    counts = Counter(e.kind for e in log.events)
    commit_ts = [e.timestamp for e in log.events if e.kind is EventKind.COMMIT]
    span = (max(commit_ts) - min(commit_ts)) / DAY if commit_ts else 0.0
    return LifetimeMetrics(
        commits=counts[EventKind.COMMIT],
        prs=counts[EventKind.PULL_REQUEST],
        issues=counts[EventKind.ISSUE_OPENED],
        forks=counts[EventKind.FORK],
        stars=counts[EventKind.STAR],
        span_days=span,
    )


def nearest_rank(values: Iterable[float], percentile: float) -> float:
    """Smallest observed v with at least ``percentile`` of values <= v."""
    ordered = sorted(values)
    if not ordered:
        raise EmptyCorpus("no values to rank")
    rank = max(1, math.ceil(percentile * len(ordered) - 1e-9))
    return ordered[rank - 1]


def compute_percentile_thresholds(
    corpus: Corpus | Mapping[str, ProjectEventLog],
    percentile: float = 0.95,
    *,
    base: SelectionThresholds | None = None,
) -> SelectionThresholds:
    """Activity/popularity cut-offs at the given percentile of the corpus.

    Span and creation-date limits are taken from ``base`` (reference values
    by default) since they are not percentile-derived.
    """
    logs = corpus.logs if isinstance(corpus, Corpus) else corpus
    if not logs:
        raise EmptyCorpus("cannot compute percentiles of an empty corpus")
    if not 0 < percentile < 1:
        raise ValidationError(f"percentile must lie in (0, 1), got {percentile}")
    metrics = [lifetime_metrics(lg) for lg in logs.values()]
    base = base or SelectionThresholds.reference()
    return SelectionThresholds(
        min_commits=nearest_rank((m.commits for m in metrics), percentile),
        min_prs=nearest_rank((m.prs for m in metrics), percentile),
        min_issues=nearest_rank((m.issues for m in metrics), percentile),
        min_forks=nearest_rank((m.forks for m in metrics), percentile),
        min_stars=nearest_rank((m.stars for m in metrics), percentile),
        min_span_days=base.min_span_days,
        created_after=base.created_after,
        created_before=base.created_before,
    )


def passes(log: ProjectEventLog, th: SelectionThresholds) -> bool:
    if log.is_fork or log.is_deleted or log.created_at is None:
        return False
    if not th.created_after <= log.created_at <= th.created_before:
        return False
    m = lifetime_metrics(log)
    return (
        m.commits >= th.min_commits
        and m.prs >= th.min_prs
        and m.issues >= th.min_issues
        and m.forks >= th.min_forks
        and m.stars >= th.min_stars
        and m.span_days >= th.min_span_days
    )


def select_projects(corpus: Corpus, thresholds: SelectionThresholds) -> Corpus:
    keep = [pid for pid, lg in corpus.logs.items() if passes(lg, thresholds)]
    return corpus.subset(keep)


@dataclass(frozen=True)
class SustainedLabel:
    status: int
    t: float
    k: float
    active_span_days: float
    median_monthly_commits: float


def monthly_commit_counts(
    log: ProjectEventLog, *, include_empty_months: bool = True
) -> np.ndarray:
    """Commits per 30-day bucket anchored at the first commit.

    The trailing partial bucket is kept. With ``include_empty_months`` off,
    buckets without commits are dropped.
    """
    ts = np.fromiter(
        (e.timestamp for e in log.events if e.kind is EventKind.COMMIT), dtype=np.int64
    )
    if ts.size == 0:
        raise NoCommits(f"{log.project_id}: no commits")
    bucket = (ts - ts.min()) // (MONTH_DAYS * DAY)
    counts = np.bincount(bucket)
    if not include_empty_months:
        counts = counts[counts > 0]
    return counts


def label_sustained(
    log: ProjectEventLog, t: float, k: float, *, include_empty_months: bool = True
) -> SustainedLabel:
    if t < 1 or k < 1:
        raise ValidationError(f"t and k must be >= 1, got t={t}, k={k}")
    counts = monthly_commit_counts(log, include_empty_months=include_empty_months)
    ts = [e.timestamp for e in log.events if e.kind is EventKind.COMMIT]
    span = (max(ts) - min(ts)) / DAY
    med = float(np.median(counts))
    status = int(span > t * YEAR_DAYS and med >= k)
    return SustainedLabel(status, t, k, span, med)


LABEL_COLUMNS = ["project_id", "status", "t", "k", "active_span_days", "median_monthly_commits"]


def write_labels(labels: Mapping[str, SustainedLabel], path: str | Path, params=None) -> None:
    rows = (
        [pid, lb.status, lb.t, lb.k, lb.active_span_days, lb.median_monthly_commits]
        for pid, lb in sorted(labels.items())
    )
    write_table(path, LABEL_COLUMNS, rows, params)


def read_labels(path: str | Path) -> dict[str, SustainedLabel]:
    header, rows = read_table(path)
    if header[: len(LABEL_COLUMNS)] != LABEL_COLUMNS:
        raise MalformedRow(1, f"expected columns {LABEL_COLUMNS}", path)
    out = {}
    for line_no, cells in rows:
        try:
            pid, status, t, k, span, med = cells[:6]
            out[pid] = SustainedLabel(int(status), float(t), float(k), float(span), float(med))
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc), path) from None
    return out
