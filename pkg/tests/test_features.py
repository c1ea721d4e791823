import math
import random
import statistics

import numpy as np
import pytest

from sustain.errors import MalformedRow, MissingProfile, ValidationError
from sustain.features import (
    COMMON,
    DEFINITIONS,
    FEATURE_NAMES,
    capacity_features,
    control_features,
    dimension_columns,
    extract_all,
    feature_matrix,
    opportunity_features,
    read_features,
    willingness_features,
    write_features,
)
from sustain.ingest import DAY, Event, EventKind, OwnerType, ParticipantProfile, ProjectEventLog, ProjectSnapshot, window_events
from sustain.roles import RoleAssignment, assign_roles

import oracles
from conftest import T0, ev, make_log


def _roles(core=(), peripheral=(), noncode=()):
    return RoleAssignment(frozenset(core), frozenset(peripheral), frozenset(noncode))


def test_schema_has_64_unique_names():
    assert len(FEATURE_NAMES) == 64 == len(set(FEATURE_NAMES))
    assert list(DEFINITIONS) == FEATURE_NAMES
    assert "#issue_n" in FEATURE_NAMES and "#cmt_n" not in FEATURE_NAMES


def test_dimensions_partition():
    dims = ["effort", "stability", "concentration", "experience", "popularity", "opportunity", "control"]
    seen = [n for d in dims for n in dimension_columns(d)]
    assert sorted(seen) == sorted(FEATURE_NAMES)
    assert dimension_columns("common") == [n for n in FEATURE_NAMES if n in COMMON]
    assert len(dimension_columns("other")) == 64 - len(COMMON)
    with pytest.raises(ValidationError):
        dimension_columns("vibes")


def test_active_days_and_dev_std():
    log = make_log([ev("a", "Commit", d, seq=i) for i, d in enumerate([1, 1.5, 2, 5])]
                   + [ev("b", "Commit", 6 + i * 0.01, seq=10 + i) for i in range(4)])
    win = window_events(log, 1)
    out = willingness_features(win, assign_roles(win), {}, 1, on_missing="zero")
    assert out["#cmt_actday"] == 4  # UTC calendar days, not 24h offsets
    two = make_log([ev("a", "Commit", i * 0.01, seq=i) for i in range(10)] + [ev("b", "Commit", 1, seq=20), ev("b", "Commit", 2, seq=21)])
    w2 = window_events(two, 1)
    assert willingness_features(w2, assign_roles(w2), {}, 1, on_missing="zero")["cmt_dev_std"] == 4.0


def test_front_end_split_at_midpoint():
    log = make_log([ev("a", "Commit", 10 + i * 0.001, seq=i) for i in range(7)])
    win = window_events(log, 3)
    out = willingness_features(win, assign_roles(win), {}, 3, on_missing="zero")
    assert (out["#cmt_front"], out["#cmt_end"]) == (7, 0)
    log = make_log([ev("a", "Commit", 0), ev("a", "Commit", 45, seq=1), ev("a", "Commit", 44.99, seq=2)])
    win = window_events(log, 3)
    out = willingness_features(win, assign_roles(win), {}, 3, on_missing="zero")
    assert (out["#cmt_front"], out["#cmt_end"]) == (2, 1)


def test_daily_counts_include_zero_days():
    # 30-day window from midnight: 30 days, two commits on day 0
    start = (T0 // DAY) * DAY
    evs = [Event("p", "a", EventKind.COMMIT, start + s, None, s) for s in (0, 1)]
    win = window_events(ProjectEventLog("p", tuple(evs)), 1)
    out = willingness_features(win, assign_roles(win), {}, 1, on_missing="zero")
    daily = [2] + [0] * 29
    assert out["#cmt_median"] == 0
    assert out["cmt_day_std"] == pytest.approx(oracles.pop_std(daily))


def test_capacity_means_and_empty_group(profiles):
    profiles = {**profiles, "x": ParticipantProfile("x", followers=80), "y": ParticipantProfile("y", followers=20)}
    out = capacity_features(_roles(core={"x", "y"}), profiles)
    assert out["#follower_c"] == 50
    assert all(out[f"{n}_p"] == 0 for n in ("#cmt_all", "#pr_all", "#issue_all", "#pro", "#follower"))


def test_missing_profile_policy():
    with pytest.raises(MissingProfile) as info:
        capacity_features(_roles(core={"ghost"}), {})
    assert "ghost" in str(info.value)
    assert capacity_features(_roles(core={"ghost"}), {}, on_missing="zero")["#cmt_all_c"] == 0


def test_opportunity_ratio():
    log = ProjectEventLog("p", (), readme_lines=40, contributing_lines=3)
    out = opportunity_features(log, ProjectSnapshot("p", open_issues=3, closed_issues=7, gfi=2))
    assert out == {"#iss_open": 3, "iss_open_ratio": 0.3, "#GFI": 2, "#line_readme": 40, "#line_contributing": 3}
    assert opportunity_features(log, ProjectSnapshot("p"))["iss_open_ratio"] == 0


def test_control_features():
    profs = {a: ParticipantProfile(a, org_count=i, shows_affiliation=i > 0) for i, a in enumerate("abcd")}
    log = ProjectEventLog("p", (), owner_type=OwnerType.ORGANIZATION)
    out = control_features(log, _roles(core="abcd"), profs, ProjectSnapshot("p", stars=9, forks=4, members=2))
    assert out["show_comp_c"] == 0.75
    assert out["#org_c"] == 1.5
    assert (out["show_comp_n"], out["#org_n"]) == (0, 0)
    assert (out["type"], out["#star"], out["#fork"], out["#member"]) == (0, 9, 4, 2)


def _naive_vector(win, profiles, snapshot, m):
    """Single pass over events with explicit per-role loops."""
    ra = assign_roles(win)
    groups = {"c": sorted(ra.core), "p": sorted(ra.peripheral), "n": sorted(ra.noncode)}
    kinds = {"#cmt": "Commit", "#pr": "PullRequest", "#issue": "IssueOpened", "#iss_comment": "IssueComment",
             "#cmt_comment": "CommitComment", "#iss_event": "IssueEvent"}
    per_actor = {}
    for e in win.events:
        per_actor.setdefault(e.actor_id, []).append(e.kind.value)
    out = {}
    fields = {"#following": "following", "#star_pro": "starred_projects", "#cmt_all": "commits_all",
              "#pr_all": "prs_all", "#issue_all": "issues_all", "#pro": "owned_projects",
              "#pro_oneyear": "owned_projects_1yr", "#pro_twoyear": "owned_projects_2yr", "#follower": "followers",
              "#org": "org_count", "show_comp": "shows_affiliation"}
    for r, members in groups.items():
        for name, kind in kinds.items():
            vals = [per_actor.get(a, []).count(kind) for a in members]
            out[f"{name}_{r}"] = sum(vals) / len(vals) if vals else 0.0
        for name, attr in fields.items():
            vals = [float(getattr(profiles[a], attr)) for a in members]
            out[f"{name}_{r}"] = sum(vals) / len(vals) if vals else 0.0
    first_day = win.created_at // DAY
    n_days = (win.created_at + m * 30 * DAY - 1) // DAY - first_day + 1
    daily = [0] * n_days
    commits = [e for e in win.events if e.kind.value == "Commit"]
    for e in commits:
        daily[e.timestamp // DAY - first_day] += 1
    out["#cmt_actday"] = sum(1 for d in daily if d)
    out["#cmt_median"] = statistics.median(daily)
    out["cmt_day_std"] = oracles.pop_std(daily)
    mid = win.created_at + m * 30 * DAY / 2
    out["#cmt_front"] = sum(1 for e in commits if e.timestamp < mid)
    out["#cmt_end"] = len(commits) - out["#cmt_front"]
    devs = groups["c"] + groups["p"]
    out["cmt_dev_std"] = oracles.pop_std([per_actor[a].count("Commit") for a in devs])
    total = snapshot.open_issues + snapshot.closed_issues
    out.update({"#iss_open": snapshot.open_issues, "iss_open_ratio": snapshot.open_issues / total if total else 0,
                "#GFI": snapshot.gfi, "#line_readme": win.readme_lines, "#line_contributing": win.contributing_lines,
                "type": int(win.owner_type), "#star": snapshot.stars, "#fork": snapshot.forks,
                "#member": snapshot.members})
    return out


def test_extract_all_matches_naive_oracle(small_corpus):
    corpus = small_corpus.corpus
    checked = 0
    for pid in corpus.ids()[:200]:
        win = window_events(corpus.logs[pid], 3)
        got = extract_all(win, assign_roles(win), small_corpus.profiles, corpus.snapshots[pid], 3)
        want = _naive_vector(win, small_corpus.profiles, corpus.snapshots[pid], 3)
        assert set(got.values) == set(FEATURE_NAMES)
        for name in FEATURE_NAMES:
            assert got.values[name] == pytest.approx(want[name], rel=1e-12, abs=1e-12), (pid, name)
        checked += 1
    assert checked == len(corpus)


def test_role_commit_identity_and_ranges(small_corpus):
    for pid in small_corpus.corpus.ids():
        win = window_events(small_corpus.corpus.logs[pid], 3)
        ra = assign_roles(win)
        v = extract_all(win, ra, small_corpus.profiles, small_corpus.corpus.snapshots[pid], 3).values
        total = v["#cmt_front"] + v["#cmt_end"]
        assert v["#cmt_c"] * len(ra.core) + v["#cmt_p"] * len(ra.peripheral) == pytest.approx(total, rel=1e-9)
        assert 0 <= v["iss_open_ratio"] <= 1
        assert all(0 <= v[f"show_comp_{r}"] <= 1 for r in "cpn")
        assert min(v.values()) >= 0


def test_order_of_same_second_events_irrelevant(small_corpus):
    pid = small_corpus.corpus.ids()[0]
    log = small_corpus.corpus.logs[pid]
    win = window_events(log, 3)
    ref = extract_all(win, assign_roles(win), small_corpus.profiles, small_corpus.corpus.snapshots[pid], 3)
    shuffled = list(log.events)
    random.Random(3).shuffle(shuffled)
    # reseat sequence numbers so ties at equal timestamps resolve differently
    reseq = [Event(e.project_id, e.actor_id, e.kind, e.timestamp, e.issue_id, 1000 - i) for i, e in enumerate(shuffled)]
    win2 = window_events(make_log(reseq, pid, readme_lines=log.readme_lines, contributing_lines=log.contributing_lines,
                                  owner_type=log.owner_type), 3)
    got = extract_all(win2, assign_roles(win2), small_corpus.profiles, small_corpus.corpus.snapshots[pid], 3)
    assert got.values == ref.values


def test_empty_groups_flagged():
    log = make_log([ev("a", "Commit", 0)])
    win = window_events(log, 1)
    fv = extract_all(win, assign_roles(win), {"a": ParticipantProfile("a")}, ProjectSnapshot("p"), 1)
    assert fv.empty_groups == {"c": False, "p": True, "n": True}
    with pytest.raises(ValidationError):
        extract_all(win, assign_roles(win), {}, ProjectSnapshot("p"), 1, on_missing="ignore")


def test_features_roundtrip(tmp_path, small_corpus):
    vecs = small_corpus.features[:5]
    write_features(vecs, tmp_path / "f.csv", {"m": 3})
    back = read_features(tmp_path / "f.csv")
    assert np.array_equal(feature_matrix(back), feature_matrix(sorted(vecs, key=lambda v: v.project_id)))
    assert [v.status for v in back] == [v.status for v in sorted(vecs, key=lambda v: v.project_id)]
    (tmp_path / "bad.csv").write_text("project_id,x\np,1\n")
    with pytest.raises(MalformedRow):
        read_features(tmp_path / "bad.csv")
    assert feature_matrix([]).shape == (0, 64)
    assert not math.isnan(feature_matrix(back).sum())
