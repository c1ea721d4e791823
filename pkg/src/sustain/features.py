"""The 64-variable early-participation feature vector."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from sustain.errors import MalformedRow, MissingProfile, ValidationError
from sustain.ingest import (
    DAY,
    MONTH_DAYS,
    EventKind,
    ParticipantProfile,
    ProjectEventLog,
    ProjectSnapshot,
    window_end,
)
from sustain.roles import DEFAULT_BOT_SUFFIXES, RoleAssignment, is_bot
from sustain.tableio import read_table, write_table

ROLE_LABEL = {"c": "core developers", "p": "peripheral developers", "n": "non-code contributors"}

_EFFORT = [
    ("#cmt", EventKind.COMMIT, "commits in the window"),
    ("#pr", EventKind.PULL_REQUEST, "pull requests opened in the window"),
    ("#issue", EventKind.ISSUE_OPENED, "issues reported in the window"),
    ("#iss_comment", EventKind.ISSUE_COMMENT, "issue comments in the window"),
    ("#cmt_comment", EventKind.COMMIT_COMMENT, "commit comments in the window"),
    ("#iss_event", EventKind.ISSUE_EVENT, "issue events in the window"),
]
_CONCENTRATION = [
    ("#following", "following", "developers followed"),
    ("#star_pro", "starred_projects", "repositories starred"),
]
_EXPERIENCE = [
    ("#cmt_all", "commits_all", "platform-wide commits"),
    ("#pr_all", "prs_all", "platform-wide pull requests"),
    ("#issue_all", "issues_all", "platform-wide reported issues"),
    ("#pro", "owned_projects", "owned repositories"),
    ("#pro_oneyear", "owned_projects_1yr", "owned repositories active for over one year"),
    ("#pro_twoyear", "owned_projects_2yr", "owned repositories active for over two years"),
]
_POPULARITY = [("#follower", "followers", "followers")]

STABILITY = ["#cmt_actday", "#cmt_median", "#cmt_front", "#cmt_end", "cmt_day_std", "cmt_dev_std"]
OPPORTUNITY = ["#iss_open", "iss_open_ratio", "#GFI", "#line_readme", "#line_contributing"]


def _role_block(role: str) -> list[str]:
    kinds = _EFFORT if role != "n" else _EFFORT[2:]
    return [f"{n}_{role}" for n, _, _ in kinds] + [f"{n}_{role}" for n, _, _ in _CONCENTRATION]


def _capacity_block(role: str) -> list[str]:
    return [f"{n}_{role}" for n, _, _ in _EXPERIENCE + _POPULARITY]


FEATURE_NAMES: list[str] = (
    _role_block("c")
    + _role_block("p")
    + _role_block("n")
    + STABILITY
    + _capacity_block("c")
    + _capacity_block("p")
    + _capacity_block("n")
    + OPPORTUNITY
    + ["show_comp_c", "#org_c", "show_comp_p", "#org_p", "show_comp_n", "#org_n"]
    + ["type", "#star", "#fork", "#member"]
)
N_FEATURES = len(FEATURE_NAMES)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}
assert N_FEATURES == 64


def _build_definitions() -> dict[str, str]:
    d = {}
    for role, who in ROLE_LABEL.items():
        for n, _, what in _EFFORT:
            d[f"{n}_{role}"] = f"Mean {what} per {who[:-1]}"
        for n, _, what in _CONCENTRATION + _EXPERIENCE + _POPULARITY:
            d[f"{n}_{role}"] = f"Mean {what} per {who[:-1]}"
        d[f"show_comp_{role}"] = f"Share of {who} listing a company or institution"
        d[f"#org_{role}"] = f"Mean organization memberships of {who}"
    d.update(
        {
            "#cmt_actday": "Distinct UTC days with at least one commit",
            "#cmt_median": "Median daily commit count over all window days",
            "#cmt_front": "Commits before the window midpoint",
            "#cmt_end": "Commits at or after the window midpoint",
            "cmt_day_std": "Population std of daily commit counts over all window days",
            "cmt_dev_std": "Population std of commit counts across committers",
            "#iss_open": "Open issues at the snapshot cutoff",
            "iss_open_ratio": "Open issues over all issues at the snapshot cutoff",
            "#GFI": "Good-first-issue labelled issues at the snapshot cutoff",
            "#line_readme": "README line count at the snapshot cutoff",
            "#line_contributing": "CONTRIBUTING line count at the snapshot cutoff",
            "type": "Owner account kind (0 organization, 1 user)",
            "#star": "Stars at the snapshot cutoff",
            "#fork": "Forks at the snapshot cutoff",
            "#member": "Members at the snapshot cutoff",
        }
    )
    return {name: d[name] for name in FEATURE_NAMES}


DEFINITIONS = _build_definitions()

DIMENSIONS: dict[str, list[str]] = {
    "effort": [f"{n}_{r}" for r in "cpn" for n, _, _ in _EFFORT if f"{n}_{r}" in FEATURE_INDEX],
    "stability": list(STABILITY),
    "concentration": [f"{n}_{r}" for r in "cpn" for n, _, _ in _CONCENTRATION],
    "experience": [f"{n}_{r}" for r in "cpn" for n, _, _ in _EXPERIENCE],
    "popularity": [f"#follower_{r}" for r in "cpn"],
    "opportunity": list(OPPORTUNITY),
    "control": ["show_comp_c", "#org_c", "show_comp_p", "#org_p", "show_comp_n", "#org_n",
                "type", "#star", "#fork", "#member"],
}
COMMON = ["#cmt_c", "#cmt_p", "#issue_c", "#issue_p", "#issue_n", "#cmt_actday", "type", "#member"]


def dimension_columns(dimension: str) -> list[str]:
    """Column subset for an ablation run, in canonical order."""
    if dimension == "all":
        names = set(FEATURE_NAMES)
    elif dimension == "common":
        names = set(COMMON)
    elif dimension == "other":
        names = set(FEATURE_NAMES) - set(COMMON)
    elif dimension in DIMENSIONS:
        names = set(DIMENSIONS[dimension])
    else:
        known = ", ".join(["all", "common", "other", *DIMENSIONS])
        raise ValidationError(f"unknown dimension {dimension!r}; expected one of {known}")
    return [n for n in FEATURE_NAMES if n in names]


@dataclass
class FeatureVector:
    project_id: str
    values: dict[str, float]
    empty_groups: dict[str, bool] = field(default_factory=dict)
    status: int | None = None

    def as_array(self) -> np.ndarray:
        return np.array([self.values[n] for n in FEATURE_NAMES], dtype=float)


def _profiles_for(
    actors: frozenset[str], profiles: Mapping[str, ParticipantProfile], on_missing: str
) -> list[ParticipantProfile]:
    out = []
    for a in sorted(actors):
        p = profiles.get(a)
        if p is None:
            if on_missing == "error":
                raise MissingProfile(a)
            p = ParticipantProfile(a)
        out.append(p)
    return out


def _mean(values: Sequence[float]) -> float:
    return float(sum(values) / len(values)) if values else 0.0


def _event_counts(window: ProjectEventLog, bot_suffixes) -> dict[tuple[str, EventKind], int]:
    counts: dict[tuple[str, EventKind], int] = {}
    for ev in window.events:
        if is_bot(ev.actor_id, bot_suffixes):
            continue
        key = (ev.actor_id, ev.kind)
        counts[key] = counts.get(key, 0) + 1
    return counts


def window_day_counts(window: ProjectEventLog, m: int, bot_suffixes=DEFAULT_BOT_SUFFIXES) -> np.ndarray:
    """Commits per UTC calendar day, over every day the window touches."""
    end = window_end(window, m)
    if end is None:
        return np.zeros(0)
    first_day = window.created_at // DAY
    last_day = (end - 1) // DAY
    days = [
        ev.timestamp // DAY - first_day
        for ev in window.events
        if ev.kind is EventKind.COMMIT and not is_bot(ev.actor_id, bot_suffixes)
    ]
    return np.bincount(np.asarray(days, dtype=np.int64), minlength=last_day - first_day + 1)


def willingness_features(
    window: ProjectEventLog,
    roles: RoleAssignment,
    profiles: Mapping[str, ParticipantProfile],
    m: int,
    *,
    on_missing: str = "error",
    bot_suffixes=DEFAULT_BOT_SUFFIXES,
) -> dict[str, float]:
    counts = _event_counts(window, bot_suffixes)
    out: dict[str, float] = {}
    for role, members in roles.groups().items():
        kinds = _EFFORT if role != "n" else _EFFORT[2:]
        ordered = sorted(members)
        for name, kind, _ in kinds:
            out[f"{name}_{role}"] = _mean([counts.get((a, kind), 0) for a in ordered])
        profs = _profiles_for(members, profiles, on_missing)
        for name, attr, _ in _CONCENTRATION:
            out[f"{name}_{role}"] = _mean([getattr(p, attr) for p in profs])

    per_day = window_day_counts(window, m, bot_suffixes)
    commit_ts = [
        ev.timestamp
        for ev in window.events
        if ev.kind is EventKind.COMMIT and not is_bot(ev.actor_id, bot_suffixes)
    ]
    mid = window.created_at + m * MONTH_DAYS * DAY // 2 if window.created_at is not None else 0
    front = sum(1 for ts in commit_ts if ts < mid)
    per_dev = [counts.get((a, EventKind.COMMIT), 0) for a in sorted(roles.core | roles.peripheral)]
    out.update(
        {
            "#cmt_actday": float(np.count_nonzero(per_day)),
            "#cmt_median": float(np.median(per_day)) if per_day.size else 0.0,
            "#cmt_front": float(front),
            "#cmt_end": float(len(commit_ts) - front),
            "cmt_day_std": float(np.std(per_day)) if per_day.size else 0.0,
            "cmt_dev_std": float(np.std(per_dev)) if per_dev else 0.0,
        }
    )
    return out


def capacity_features(
    roles: RoleAssignment,
    profiles: Mapping[str, ParticipantProfile],
    *,
    on_missing: str = "error",
) -> dict[str, float]:
    out = {}
    for role, members in roles.groups().items():
        profs = _profiles_for(members, profiles, on_missing)
        for name, attr, _ in _EXPERIENCE + _POPULARITY:
            out[f"{name}_{role}"] = _mean([getattr(p, attr) for p in profs])
    return out


def opportunity_features(log: ProjectEventLog, snapshot: ProjectSnapshot) -> dict[str, float]:
    total = snapshot.open_issues + snapshot.closed_issues
    return {
        "#iss_open": float(snapshot.open_issues),
        "iss_open_ratio": snapshot.open_issues / total if total else 0.0,
        "#GFI": float(snapshot.gfi),
        "#line_readme": float(log.readme_lines),
        "#line_contributing": float(log.contributing_lines),
    }


def control_features(
    log: ProjectEventLog,
    roles: RoleAssignment,
    profiles: Mapping[str, ParticipantProfile],
    snapshot: ProjectSnapshot,
    *,
    on_missing: str = "error",
) -> dict[str, float]:
    out = {}
    for role, members in roles.groups().items():
        profs = _profiles_for(members, profiles, on_missing)
        out[f"show_comp_{role}"] = _mean([1.0 if p.shows_affiliation else 0.0 for p in profs])
        out[f"#org_{role}"] = _mean([p.org_count for p in profs])
    out["type"] = float(int(log.owner_type))
    out["#star"] = float(snapshot.stars)
    out["#fork"] = float(snapshot.forks)
    out["#member"] = float(snapshot.members)
    return out


def extract_all(
    window: ProjectEventLog,
    roles: RoleAssignment,
    profiles: Mapping[str, ParticipantProfile],
    snapshot: ProjectSnapshot,
    m: int,
    *,
    on_missing: str = "error",
    bot_suffixes=DEFAULT_BOT_SUFFIXES,
) -> FeatureVector:
    if on_missing not in ("error", "zero"):
        raise ValidationError(f"on_missing must be 'error' or 'zero', got {on_missing!r}")
    values = {}
    values.update(
        willingness_features(window, roles, profiles, m, on_missing=on_missing, bot_suffixes=bot_suffixes)
    )
    values.update(capacity_features(roles, profiles, on_missing=on_missing))
    values.update(opportunity_features(window, snapshot))
    values.update(control_features(window, roles, profiles, snapshot, on_missing=on_missing))
    ordered = {name: values[name] for name in FEATURE_NAMES}
    empty = {role: not members for role, members in roles.groups().items()}
    return FeatureVector(window.project_id, ordered, empty)


def feature_matrix(vectors: Sequence[FeatureVector]) -> np.ndarray:
    if not vectors:
        return np.zeros((0, N_FEATURES))
    return np.vstack([v.as_array() for v in vectors])


def write_features(vectors: Sequence[FeatureVector], path: str | Path, params=None) -> None:
    header = ["project_id", *FEATURE_NAMES, "status"]
    rows = (
        [v.project_id, *(v.values[n] for n in FEATURE_NAMES), v.status]
        for v in sorted(vectors, key=lambda v: v.project_id)
    )
    write_table(path, header, rows, params)


def read_features(path: str | Path) -> list[FeatureVector]:
    header, rows = read_table(path)
    expected = ["project_id", *FEATURE_NAMES, "status"]
    if header != expected:
        raise MalformedRow(1, "features table does not have the canonical 64-column layout", path)
    out = []
    for line_no, cells in rows:
        if len(cells) != len(header):
            raise MalformedRow(line_no, f"expected {len(header)} cells, found {len(cells)}", path)
        try:
            vals = {n: float(c) for n, c in zip(FEATURE_NAMES, cells[1:-1])}
            status = int(cells[-1]) if cells[-1].strip() else None
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc), path) from None
        out.append(FeatureVector(cells[0], vals, status=status))
    return out
