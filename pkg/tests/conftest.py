import warnings

import numpy as np
import pytest

from sustain.explain import DegenerateFeature
from sustain.ingest import DAY, Event, EventKind, ParticipantProfile, ProjectEventLog, build_logs

T0 = 1_400_000_000  # 2014-05-13, inside the reference creation range


def ev(actor, kind, day, pid="p", seq=0, seconds=0):
    kind = kind if isinstance(kind, EventKind) else EventKind(kind)
    return Event(pid, actor, kind, T0 + int(day * DAY) + seconds, None, seq)


def make_log(events, pid="p", **meta) -> ProjectEventLog:
    log = build_logs(events)[pid]
    if meta:
        from dataclasses import replace

        log = replace(log, **meta)
    return log


def commit_log(day_offsets, pid="p", actor="a") -> ProjectEventLog:
    evs = [ev(actor, "Commit", d, pid, seq=i) for i, d in enumerate(day_offsets)]
    return make_log(evs, pid)


@pytest.fixture
def profiles():
    return {
        "a": ParticipantProfile("a", commits_all=100, followers=10, following=3, owned_projects=4,
                                owned_projects_1yr=2, owned_projects_2yr=1, org_count=2,
                                shows_affiliation=True),
        "b": ParticipantProfile("b", commits_all=20, followers=2, following=5, starred_projects=7),
        "c": ParticipantProfile("c", commits_all=5, prs_all=3, issues_all=2),
        "n1": ParticipantProfile("n1", issues_all=9, followers=1, following=1),
    }


@pytest.fixture(scope="session")
def small_corpus():
    from sustain.synth import SynthConfig, generate

    return generate(SynthConfig(n_projects=150, seed=11))


@pytest.fixture(scope="session")
def train_stats_and_model(small_corpus):
    from sustain.explain import compute_train_stats
    from sustain.learner import TrainConfig, train

    X, y = small_corpus.matrix()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateFeature)
        stats = compute_train_stats(X)
    model = train(X, y, TrainConfig(n_trees=30, max_depth=3))
    return X, y, stats, model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# (criterion, passed, detail) lines recorded by test_acceptance.py
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
