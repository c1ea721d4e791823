import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sustain.corpus import (
    SelectionThresholds,
    compute_percentile_thresholds,
    label_sustained,
    lifetime_metrics,
    monthly_commit_counts,
    nearest_rank,
    passes,
    read_labels,
    select_projects,
    write_labels,
)
from sustain.errors import EmptyCorpus, NoCommits, ValidationError
from sustain.ingest import DAY, Corpus, Event, EventKind, ProjectEventLog, ProjectSnapshot

import oracles
from conftest import T0, commit_log, ev, make_log


def _activity_log(pid, commits, prs=0, issues=0, forks=0, stars=0, span=200, **meta):
    evs = [ev("a", "Commit", span * i / max(commits - 1, 1), pid, seq=i) for i in range(commits)]
    for kind, n in (("PullRequest", prs), ("IssueOpened", issues), ("Fork", forks), ("Star", stars)):
        evs += [ev(f"x{j}", kind, 1, pid, seq=j) for j in range(n)]
    return ProjectEventLog(pid, tuple(sorted(evs, key=Event.sort_key)), **meta)


def test_reference_thresholds():
    th = SelectionThresholds.reference()
    assert (th.min_commits, th.min_prs, th.min_issues, th.min_forks, th.min_stars) == (57, 4, 1, 1, 2)
    assert th.min_span_days == 90


def test_negative_threshold_rejected():
    with pytest.raises(ValidationError):
        SelectionThresholds(min_commits=-1)


def test_56_commits_excluded_57_kept():
    th = SelectionThresholds.reference()
    assert not passes(_activity_log("a", 56, 4, 1, 1, 2), th)
    assert passes(_activity_log("b", 57, 4, 1, 1, 2), th)


def test_fork_and_deleted_excluded():
    th = SelectionThresholds()
    assert not passes(_activity_log("f", 10_000, 9, 9, 9, 9, is_fork=True), th)
    assert not passes(_activity_log("d", 100, is_deleted=True), th)
    assert passes(_activity_log("ok", 1), th)


def test_creation_range_is_inclusive():
    log = commit_log([0])
    assert passes(log, SelectionThresholds(created_after=T0, created_before=T0))
    assert not passes(log, SelectionThresholds(created_after=T0 + 1))


def test_selection_matches_predicate_oracle(rng):
    logs = {}
    for i in range(500):
        pid = f"p{i}"
        logs[pid] = _activity_log(pid, int(rng.integers(1, 120)), *rng.integers(0, 6, size=4).tolist(),
                                  span=int(rng.integers(0, 400)), is_fork=bool(rng.random() < 0.05))
    corpus = Corpus(logs, {pid: ProjectSnapshot(pid) for pid in logs})
    th = SelectionThresholds.reference()
    expected = set()
    for pid, lg in logs.items():
        kinds = [e.kind for e in lg.events]
        ts = [e.timestamp for e in lg.events if e.kind is EventKind.COMMIT]
        if (not lg.is_fork and kinds.count(EventKind.COMMIT) >= 57 and kinds.count(EventKind.PULL_REQUEST) >= 4
                and kinds.count(EventKind.ISSUE_OPENED) >= 1 and kinds.count(EventKind.FORK) >= 1
                and kinds.count(EventKind.STAR) >= 2 and (max(ts) - min(ts)) >= 90 * DAY
                and th.created_after <= min(ts) <= th.created_before):
            expected.add(pid)
    assert set(select_projects(corpus, th).ids()) == expected
    assert 0 < len(expected) < 500


def test_zero_thresholds_only_drop_forks_and_deleted():
    logs = {"a": _activity_log("a", 1), "b": _activity_log("b", 3, is_fork=True), "c": _activity_log("c", 2, is_deleted=True)}
    kept = select_projects(Corpus(logs, {}), SelectionThresholds())
    assert kept.ids() == ["a"]


def test_nearest_rank_examples():
    assert nearest_rank([10] * 20, 0.95) == 10
    assert nearest_rank(range(1, 101), 0.95) == 95
    with pytest.raises(EmptyCorpus):
        nearest_rank([], 0.5)


@given(st.lists(st.integers(0, 50), min_size=1, max_size=40), st.floats(0.01, 0.99))
def test_nearest_rank_oracle(values, q):
    assert nearest_rank(values, q) == oracles.nearest_rank(values, q)


def test_percentile_thresholds_uniform():
    logs = {f"p{i}": _activity_log(f"p{i}", i) for i in range(1, 101)}
    th = compute_percentile_thresholds(Corpus(logs, {}), 0.95)
    assert th.min_commits == 95
    assert th.min_span_days == SelectionThresholds.reference().min_span_days
    with pytest.raises(ValidationError):
        compute_percentile_thresholds(Corpus(logs, {}), 1.0)
    with pytest.raises(EmptyCorpus):
        compute_percentile_thresholds(Corpus({}, {}), 0.5)


def test_lifetime_metrics_counts():
    m = lifetime_metrics(_activity_log("a", 5, 2, 1, 0, 3, span=40))
    assert (m.commits, m.prs, m.issues, m.forks, m.stars) == (5, 2, 1, 0, 3)
    assert m.span_days == pytest.approx(40)


def test_monthly_buckets_keep_zero_and_partial_months():
    counts = monthly_commit_counts(commit_log([0, 1, 65]))
    assert counts.tolist() == [2, 0, 1]
    assert monthly_commit_counts(commit_log([0, 1, 65]), include_empty_months=False).tolist() == [2, 1]


def test_monthly_26_commits_sustained():
    label = label_sustained(commit_log([30 * i for i in range(26)]), t=2, k=1)
    assert label.status == 1
    assert label.median_monthly_commits == 1
    assert label.active_span_days == 750


def test_eleven_month_span_never_sustained():
    log = commit_log([d for d in range(0, 330, 2)])
    for k in (1, 2, 6):
        assert label_sustained(log, 1, k).status == 0


def test_span_must_exceed_strictly():
    assert label_sustained(commit_log([0, 365]), 1, 1).status == 0
    log = commit_log([i * 5 for i in range(74)] + [365.5])
    assert label_sustained(log, 1, 1).status == 1


def test_even_median_is_mean_of_central_pair():
    log = commit_log([0, 1, 2, 3, 35])
    assert monthly_commit_counts(log).tolist() == [4, 1]
    assert label_sustained(log, 1, 1).median_monthly_commits == 2.5


def test_label_errors():
    with pytest.raises(NoCommits):
        label_sustained(make_log([ev("a", "IssueOpened", 0)]), 1, 1)
    with pytest.raises(ValidationError):
        label_sustained(commit_log([0]), 0, 1)


def test_label_ignores_noncommit_events():
    base = commit_log([0, 20, 50, 400])
    noisy = make_log(list(base.events) + [ev("z", "IssueComment", d, seq=9) for d in (-3, 10, 900)])
    assert label_sustained(base, 1, 1) == label_sustained(noisy, 1, 1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1200 * DAY), min_size=1, max_size=60))
def test_label_monotone_in_t_and_k(offsets):
    log = commit_log([o / DAY for o in offsets])
    for t in (1, 2):
        for k_lo, k_hi in ((1, 2), (2, 6)):
            assert label_sustained(log, t, k_hi).status <= label_sustained(log, t, k_lo).status
    assert label_sustained(log, 2, 1).status <= label_sustained(log, 1, 1).status


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 900 * DAY), min_size=1, max_size=80), st.sampled_from([1, 2]), st.sampled_from([1, 2, 6]))
def test_label_matches_bruteforce(offsets, t, k):
    log = commit_log([o / DAY for o in offsets])
    status, span, med = oracles.brute_label([e.timestamp for e in log.events], t, k)
    got = label_sustained(log, t, k)
    assert (got.status, got.active_span_days, got.median_monthly_commits) == (status, span, med)


def test_labels_roundtrip(tmp_path):
    labels = {"b": label_sustained(commit_log([0, 800]), 2, 1), "a": label_sustained(commit_log([0]), 1, 1)}
    write_labels(labels, tmp_path / "l.csv", {"t": 2})
    assert read_labels(tmp_path / "l.csv") == labels


def test_dense_monthly_buckets_median(rng):
    days = np.sort(rng.uniform(0, 800, size=400))
    log = commit_log(days.tolist())
    counts = monthly_commit_counts(log)
    assert counts.sum() == 400
    assert label_sustained(log, 2, 1).median_monthly_commits == float(np.median(counts))
