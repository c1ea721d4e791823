"""Core / peripheral / non-code partition of a windowed project's participants."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from sustain.errors import NoParticipants
from sustain.ingest import EventKind, ProjectEventLog
from sustain.tableio import write_table

DEFAULT_BOT_SUFFIXES = ("[bot]",)
NONCODE_KINDS = frozenset(
    {EventKind.ISSUE_OPENED, EventKind.ISSUE_COMMENT, EventKind.COMMIT_COMMENT, EventKind.ISSUE_EVENT}
)


@dataclass(frozen=True)
class RoleAssignment:
    core: frozenset[str]
    peripheral: frozenset[str]
    noncode: frozenset[str]

    def role_of(self, actor: str) -> str | None:
        if actor in self.core:
            return "core"
        if actor in self.peripheral:
            return "peripheral"
        if actor in self.noncode:
            return "noncode"
        return None

    def groups(self) -> dict[str, frozenset[str]]:
        return {"c": self.core, "p": self.peripheral, "n": self.noncode}


def is_bot(actor: str, suffixes: Iterable[str] = DEFAULT_BOT_SUFFIXES) -> bool:
    return any(actor.endswith(s) for s in suffixes)


def core_prefix_length(counts: list[int], share: float = 0.8, strict: bool = False) -> int:
    """Length of the shortest prefix of descending ``counts`` covering ``share`` of the total."""
    total = sum(counts)
    need = Fraction(share).limit_denominator(10**6) * total
    running = 0
    for i, c in enumerate(counts, start=1):
        running += c
        if running > need or (not strict and running == need):
            return i
    return len(counts)


def assign_roles(
    window: ProjectEventLog,
    *,
    core_share: float = 0.8,
    strict: bool = False,
    bot_suffixes: Iterable[str] = DEFAULT_BOT_SUFFIXES,
) -> RoleAssignment:
    """Split participants by commit share.

    Committers are ranked by commit count (ties: earlier first commit, then
    actor id); the minimal top prefix reaching ``core_share`` of commits is
    the core. Actors without commits who opened, commented on, or acted on
    issues/commits are non-code contributors.
    """
    if not window.events:
        raise NoParticipants(f"{window.project_id}: window has no events")
    bot_suffixes = tuple(bot_suffixes)
    commits: dict[str, int] = {}
    first_commit: dict[str, int] = {}
    noncode_candidates = set()
    for ev in window.events:
        if is_bot(ev.actor_id, bot_suffixes):
            continue
        if ev.kind is EventKind.COMMIT:
            commits[ev.actor_id] = commits.get(ev.actor_id, 0) + 1
            first_commit.setdefault(ev.actor_id, ev.timestamp)
        elif ev.kind in NONCODE_KINDS:
            noncode_candidates.add(ev.actor_id)
    ranked = sorted(commits, key=lambda a: (-commits[a], first_commit[a], a))
    n_core = core_prefix_length([commits[a] for a in ranked], core_share, strict) if ranked else 0
    return RoleAssignment(
        core=frozenset(ranked[:n_core]),
        peripheral=frozenset(ranked[n_core:]),
        noncode=frozenset(noncode_candidates - commits.keys()),
    )


def write_roles(assignments: Mapping[str, RoleAssignment], path: str | Path, params=None) -> None:
    def rows():
        for pid in sorted(assignments):
            ra = assignments[pid]
            for role, members in (("core", ra.core), ("peripheral", ra.peripheral), ("noncode", ra.noncode)):
                for actor in sorted(members):
                    yield [pid, actor, role]

    write_table(path, ["project_id", "actor_id", "role"], rows(), params)
