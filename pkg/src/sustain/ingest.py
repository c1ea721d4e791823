"""Event/profile data model, flat-file parsing and observation windows."""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field, fields, replace
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from sustain.errors import (
    DuplicateActor,
    DuplicateEvent,
    EmptyInput,
    InvariantViolation,
    MalformedRow,
    ValidationError,
)
from sustain.tableio import read_table, write_table

DAY = 86400
MONTH_DAYS = 30


class EventKind(str, Enum):
    COMMIT = "Commit"
    PULL_REQUEST = "PullRequest"
    ISSUE_OPENED = "IssueOpened"
    ISSUE_COMMENT = "IssueComment"
    COMMIT_COMMENT = "CommitComment"
    ISSUE_EVENT = "IssueEvent"
    STAR = "Star"
    FORK = "Fork"
    MEMBER_ADDED = "MemberAdded"
    GFI_LABEL = "GfiLabel"


_KINDS = {k.value: k for k in EventKind}


class OwnerType(IntEnum):
    ORGANIZATION = 0
    USER = 1


@dataclass(frozen=True, slots=True)
class Event:
    project_id: str
    actor_id: str
    kind: EventKind
    timestamp: int
    issue_id: str | None = None
    sequence_no: int = 0

    def sort_key(self):
        return (self.timestamp, self.sequence_no, self.kind.value, self.actor_id)


@dataclass(frozen=True)
class ProjectEventLog:
    project_id: str
    events: tuple[Event, ...]
    owner_type: OwnerType = OwnerType.USER
    is_fork: bool = False
    is_deleted: bool = False
    readme_lines: int = 0
    contributing_lines: int = 0
    created_at: int | None = field(init=False, default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.events, tuple):
            object.__setattr__(self, "events", tuple(self.events))
        if self.readme_lines < 0 or self.contributing_lines < 0:
            raise InvariantViolation(f"{self.project_id}: negative documentation line count")
        first = None
        for ev in self.events:
            if ev.kind is EventKind.COMMIT:
                first = ev.timestamp
                break
        object.__setattr__(self, "created_at", first)

    def commits(self) -> list[Event]:
        return [e for e in self.events if e.kind is EventKind.COMMIT]


@dataclass(frozen=True)
class ProjectSnapshot:
    """Project state a fixed time after creation, supplied by the input files."""

    project_id: str
    open_issues: int = 0
    closed_issues: int = 0
    gfi: int = 0
    stars: int = 0
    forks: int = 0
    members: int = 0


@dataclass(frozen=True)
class ParticipantProfile:
    actor_id: str
    commits_all: int = 0
    prs_all: int = 0
    issues_all: int = 0
    owned_projects: int = 0
    owned_projects_1yr: int = 0
    owned_projects_2yr: int = 0
    followers: int = 0
    following: int = 0
    starred_projects: int = 0
    org_count: int = 0
    shows_affiliation: bool = False

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name not in ("actor_id", "shows_affiliation") and value < 0:
                raise InvariantViolation(f"{self.actor_id}: {f.name} is negative")
        if not self.owned_projects_2yr <= self.owned_projects_1yr <= self.owned_projects:
            raise InvariantViolation(
                f"{self.actor_id}: owned project counts must satisfy 2yr <= 1yr <= total"
            )


@dataclass
class Corpus:
    """Event logs plus per-project snapshots, keyed by project id."""

    logs: dict[str, ProjectEventLog]
    snapshots: dict[str, ProjectSnapshot] = field(default_factory=dict)

    def __len__(self):
        return len(self.logs)

    def ids(self) -> list[str]:
        return sorted(self.logs)

    def subset(self, ids: Iterable[str]) -> "Corpus":
        keep = set(ids)
        return Corpus(
            {k: v for k, v in self.logs.items() if k in keep},
            {k: v for k, v in self.snapshots.items() if k in keep},
        )


EVENT_COLUMNS = ["project_id", "actor_id", "kind", "timestamp", "issue_id", "sequence_no"]
PROJECT_COLUMNS = [
    "project_id",
    "owner_type",
    "is_fork",
    "is_deleted",
    "readme_lines",
    "contributing_lines",
    "open_issues_at_cutoff",
    "closed_issues_at_cutoff",
    "gfi_at_cutoff",
    "stars_at_cutoff",
    "forks_at_cutoff",
    "members_at_cutoff",
]
PROFILE_COLUMNS = [f.name for f in fields(ParticipantProfile)]

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f", ""}


def _parse_int(text: str, name: str, line_no: int, path, *, minimum: int = 0) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        try:
            as_float = float(text)
        except ValueError:
            raise MalformedRow(line_no, f"{name} is not an integer: {text!r}", path) from None
        if not as_float.is_integer():
            raise MalformedRow(line_no, f"{name} is not an integer: {text!r}", path) from None
        value = int(as_float)
    if value < minimum:
        raise MalformedRow(line_no, f"{name} must be >= {minimum}, got {value}", path)
    return value


def _parse_bool(text: str, name: str, line_no: int, path) -> bool:
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise MalformedRow(line_no, f"{name} is not a boolean: {text!r}", path)


def _parse_owner(text: str, line_no: int, path) -> OwnerType:
    low = text.strip().lower()
    if low in ("0", "organization", "org"):
        return OwnerType.ORGANIZATION
    if low in ("1", "user", ""):
        return OwnerType.USER
    raise MalformedRow(line_no, f"owner_type must be 0/1 or Organization/User, got {text!r}", path)


def _event_records(path: Path, fmt: str) -> Iterator[tuple[int, dict[str, str]]]:
    if fmt == "csv":
        header, rows = read_table(path)
        if not header:
            return
        missing = [c for c in ("project_id", "actor_id", "kind", "timestamp") if c not in header]
        if missing:
            raise MalformedRow(1, f"missing required columns {missing}", path)
        for line_no, cells in rows:
            if len(cells) != len(header):
                raise MalformedRow(
                    line_no, f"expected {len(header)} cells, found {len(cells)}", path
                )
            yield line_no, dict(zip(header, cells))
    elif fmt == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedRow(line_no, f"invalid JSON: {exc.msg}", path) from None
                if not isinstance(obj, dict):
                    raise MalformedRow(line_no, "record is not an object", path)
                yield line_no, {k: "" if v is None else str(v) for k, v in obj.items()}
    else:
        raise ValidationError(f"unknown event format {fmt!r}")


def _parse_event(rec: dict[str, str], line_no: int, path) -> Event:
    pid = rec.get("project_id", "").strip()
    actor = rec.get("actor_id", "").strip()
    if not pid:
        raise MalformedRow(line_no, "empty project_id", path)
    if not actor:
        raise MalformedRow(line_no, "empty actor_id", path)
    kind_text = rec.get("kind", "").strip()
    kind = _KINDS.get(kind_text)
    if kind is None:
        raise MalformedRow(line_no, f"unknown event kind {kind_text!r}", path)
    ts = _parse_int(rec.get("timestamp", ""), "timestamp", line_no, path)
    issue = rec.get("issue_id", "").strip() or None
    seq_text = rec.get("sequence_no", "").strip()
    seq = _parse_int(seq_text, "sequence_no", line_no, path) if seq_text else 0
    return Event(pid, actor, kind, ts, issue, seq)


def build_logs(events: Iterable[Event], *, where: str = "") -> dict[str, ProjectEventLog]:
    """Group events by project, sort them and enforce the uniqueness key."""
    grouped: dict[str, list[Event]] = {}
    for ev in events:
        grouped.setdefault(ev.project_id, []).append(ev)
    logs = {}
    for pid in sorted(grouped):
        evs = sorted(grouped[pid], key=Event.sort_key)
        seen = set()
        for ev in evs:
            key = (ev.actor_id, ev.kind, ev.timestamp, ev.sequence_no)
            if key in seen:
                raise DuplicateEvent(
                    f"{where}duplicate event {pid}/{ev.actor_id}/{ev.kind.value}"
                    f"@{ev.timestamp}#{ev.sequence_no}"
                )
            seen.add(key)
        logs[pid] = ProjectEventLog(pid, tuple(evs))
    return logs


def parse_event_log(path: str | Path, format: str = "csv") -> dict[str, ProjectEventLog]:
    path = Path(path)
    events = [_parse_event(rec, line_no, path) for line_no, rec in _event_records(path, format)]
    if not events:
        raise EmptyInput(f"{path}: no event rows")
    return build_logs(events, where=f"{path}: ")


def write_event_log(
    logs: Mapping[str, ProjectEventLog] | Iterable[ProjectEventLog],
    path: str | Path,
    format: str = "csv",
    params: Mapping[str, object] | None = None,
) -> None:
    items = logs.values() if isinstance(logs, Mapping) else logs
    ordered = sorted(items, key=lambda lg: lg.project_id)

    def rows():
        for lg in ordered:
            for e in lg.events:
                yield [e.project_id, e.actor_id, e.kind.value, e.timestamp, e.issue_id, e.sequence_no]

    if format == "csv":
        write_table(path, EVENT_COLUMNS, rows(), params)
    elif format == "jsonl":
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for r in rows():
                fh.write(json.dumps(dict(zip(EVENT_COLUMNS, r)), sort_keys=True) + "\n")
    else:
        raise ValidationError(f"unknown event format {format!r}")


def parse_projects(path: str | Path) -> tuple[dict[str, dict], dict[str, ProjectSnapshot]]:
    """Parse projects.csv into log metadata and cutoff snapshots."""
    path = Path(path)
    header, rows = read_table(path)
    if not header:
        raise EmptyInput(f"{path}: empty file")
    missing = [c for c in PROJECT_COLUMNS if c not in header]
    if missing:
        raise MalformedRow(1, f"missing required columns {missing}", path)
    meta: dict[str, dict] = {}
    snaps: dict[str, ProjectSnapshot] = {}
    for line_no, cells in rows:
        if len(cells) != len(header):
            raise MalformedRow(line_no, f"expected {len(header)} cells, found {len(cells)}", path)
        rec = dict(zip(header, cells))
        pid = rec["project_id"].strip()
        if not pid:
            raise MalformedRow(line_no, "empty project_id", path)
        if pid in meta:
            raise MalformedRow(line_no, f"duplicate project {pid!r}", path)
        meta[pid] = {
            "owner_type": _parse_owner(rec["owner_type"], line_no, path),
            "is_fork": _parse_bool(rec["is_fork"], "is_fork", line_no, path),
            "is_deleted": _parse_bool(rec["is_deleted"], "is_deleted", line_no, path),
            "readme_lines": _parse_int(rec["readme_lines"], "readme_lines", line_no, path),
            "contributing_lines": _parse_int(
                rec["contributing_lines"], "contributing_lines", line_no, path
            ),
        }
        ints = {
            c: _parse_int(rec[c], c, line_no, path)
            for c in PROJECT_COLUMNS[6:]
        }
        snaps[pid] = ProjectSnapshot(
            pid,
            open_issues=ints["open_issues_at_cutoff"],
            closed_issues=ints["closed_issues_at_cutoff"],
            gfi=ints["gfi_at_cutoff"],
            stars=ints["stars_at_cutoff"],
            forks=ints["forks_at_cutoff"],
            members=ints["members_at_cutoff"],
        )
    if not meta:
        raise EmptyInput(f"{path}: no project rows")
    return meta, snaps


def write_projects(corpus: Corpus, path: str | Path, params=None) -> None:
    def rows():
        for pid in corpus.ids():
            lg = corpus.logs[pid]
            s = corpus.snapshots.get(pid, ProjectSnapshot(pid))
            yield [
                pid,
                int(lg.owner_type),
                lg.is_fork,
                lg.is_deleted,
                lg.readme_lines,
                lg.contributing_lines,
                s.open_issues,
                s.closed_issues,
                s.gfi,
                s.stars,
                s.forks,
                s.members,
            ]

    write_table(path, PROJECT_COLUMNS, rows(), params)


def load_corpus(
    events_path: str | Path, projects_path: str | Path | None = None, format: str = "csv"
) -> Corpus:
    logs = parse_event_log(events_path, format)
    if projects_path is None:
        return Corpus(logs, {pid: ProjectSnapshot(pid) for pid in logs})
    meta, snaps = parse_projects(projects_path)
    unknown = sorted(set(logs) - set(meta))
    if unknown:
        raise ValidationError(
            f"{projects_path}: {len(unknown)} project(s) have events but no project row, "
            f"e.g. {unknown[0]!r}"
        )
    merged = {pid: replace(lg, **meta[pid]) for pid, lg in logs.items()}
    return Corpus(merged, {pid: snaps[pid] for pid in logs})


def parse_profiles(path: str | Path) -> dict[str, ParticipantProfile]:
    path = Path(path)
    header, rows = read_table(path)
    if not header:
        raise EmptyInput(f"{path}: empty file")
    if "actor_id" not in header:
        raise MalformedRow(1, "missing required column 'actor_id'", path)
    unknown = [c for c in header if c not in PROFILE_COLUMNS]
    if unknown:
        raise MalformedRow(1, f"unknown columns {unknown}", path)
    profiles: dict[str, ParticipantProfile] = {}
    for line_no, cells in rows:
        if len(cells) != len(header):
            raise MalformedRow(line_no, f"expected {len(header)} cells, found {len(cells)}", path)
        rec = dict(zip(header, cells))
        actor = rec["actor_id"].strip()
        if not actor:
            raise MalformedRow(line_no, "empty actor_id", path)
        if actor in profiles:
            raise DuplicateActor(f"{path}:{line_no}: duplicate actor {actor!r}")
        kwargs = {}
        for name in PROFILE_COLUMNS[1:]:
            text = rec.get(name, "")
            if name == "shows_affiliation":
                kwargs[name] = _parse_bool(text, name, line_no, path)
            else:
                kwargs[name] = _parse_int(text, name, line_no, path) if text.strip() else 0
        try:
            profiles[actor] = ParticipantProfile(actor, **kwargs)
        except InvariantViolation as exc:
            raise InvariantViolation(f"{path}:{line_no}: {exc}") from None
    if not profiles:
        raise EmptyInput(f"{path}: no profile rows")
    return profiles


def write_profiles(profiles: Mapping[str, ParticipantProfile], path: str | Path, params=None) -> None:
    def rows():
        for actor in sorted(profiles):
            p = profiles[actor]
            yield [getattr(p, name) for name in PROFILE_COLUMNS]

    write_table(path, PROFILE_COLUMNS, rows(), params)


def window_end(log: ProjectEventLog, m: int) -> int | None:
    if log.created_at is None:
        return None
    return log.created_at + m * MONTH_DAYS * DAY


def window_events(log: ProjectEventLog, m: int) -> ProjectEventLog:
    """Keep events in ``[created_at, created_at + m*30 days)``."""
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise ValidationError(f"window length must be a positive integer number of months, got {m!r}")
    end = window_end(log, int(m))
    if end is None:
        return replace(log, events=())
    key = lambda e: e.timestamp  # noqa: E731
    lo = bisect.bisect_left(log.events, log.created_at, key=key)
    hi = bisect.bisect_left(log.events, end, key=key)
    if lo == 0 and hi == len(log.events):
        return log
    return replace(log, events=log.events[lo:hi])
