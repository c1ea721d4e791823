"""Seeded synthetic corpora with planted ground truth.

Each project gets a team, an activity regime and an early-window event
stream. Features are then extracted from the generated window with the
regular pipeline functions, a status is drawn from a logistic model over the
planted variables of those extracted values, and finally a post-window
commit tail is appended so that the sustained-activity labeler reproduces
the drawn status from the events alone.

Seeding: ``SeedSequence(seed).spawn(n_projects)`` gives one child per
project (in sorted id order); each child spawns two grandchildren, the first
for the window events and profiles, the second for the label draw and the
tail. Projects are therefore independent of generation order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from sustain.corpus import YEAR_DAYS, label_sustained
from sustain.errors import InvalidConfig, InvariantViolation
from sustain.features import FEATURE_INDEX, FEATURE_NAMES, FeatureVector, extract_all
from sustain.ingest import (
    DAY,
    MONTH_DAYS,
    Corpus,
    Event,
    EventKind,
    OwnerType,
    ParticipantProfile,
    ProjectEventLog,
    ProjectSnapshot,
    window_events,
    write_event_log,
    write_profiles,
    write_projects,
)
from sustain.parallel import pmap
from sustain.roles import assign_roles
from sustain.tableio import write_json

REGIMES = ("steady", "front-loaded", "bursty")

DEFAULT_EFFECTS = {
    "#cmt_actday": 1.0,
    "#pr_c": 0.8,
    "#issue_n": 0.6,
    "#pro_oneyear_c": 0.6,
    "#star": 0.8,
    "#member": 0.6,
}

# Project-level draws that are independent of everything the label depends on.
# Profile-derived means are deliberately absent: their spread depends on team
# size, which several activity variables share.
INDEPENDENT = ["#line_readme", "#line_contributing", "type"]

_START = int(datetime(2012, 1, 1, tzinfo=timezone.utc).timestamp())
_CREATION_SPAN_DAYS = 5 * YEAR_DAYS


@dataclass(frozen=True)
class SynthConfig:
    n_projects: int = 200
    seed: int = 0
    planted_effects: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_EFFECTS))
    regime_mix: tuple[float, float, float] = (0.5, 0.3, 0.2)
    developers_mean: float = 3.0
    noncode_mean: float = 2.0
    intensity_median: float = 0.8   # window commits per day
    noise: float = 0.5
    intercept: float = 0.0
    m: int = 3
    t: int = 2
    k: int = 1

    def __post_init__(self):
        if self.n_projects < 1:
            raise InvalidConfig("n_projects must be >= 1")
        mix = np.asarray(self.regime_mix, dtype=float)
        if mix.shape != (3,) or np.any(mix < 0) or not math.isclose(mix.sum(), 1.0, abs_tol=1e-9):
            raise InvalidConfig(f"regime_mix must be three non-negative fractions summing to 1, got {self.regime_mix}")
        unknown = [v for v in self.planted_effects if v not in FEATURE_INDEX]
        if unknown:
            raise InvalidConfig(f"planted effect on unknown variable(s) {unknown}")
        if self.noise < 0 or self.developers_mean < 0 or self.noncode_mean < 0 or self.intensity_median <= 0:
            raise InvalidConfig("noise, team means and intensity must be non-negative (intensity positive)")
        if self.m < 1 or self.t < 1 or self.k < 1:
            raise InvalidConfig("m, t and k must be >= 1")
        if self.m * MONTH_DAYS >= self.t * YEAR_DAYS:
            raise InvalidConfig("window must be shorter than the sustained-activity horizon")

    def noise_variables(self) -> list[str]:
        return [v for v in INDEPENDENT if v not in self.planted_effects]


@dataclass
class SynthResult:
    config: SynthConfig
    corpus: Corpus
    profiles: dict[str, ParticipantProfile]
    features: list[FeatureVector]   # at config.m, status filled in
    labels: dict[str, int]
    logits: dict[str, float]

    def ground_truth(self) -> dict:
        cfg = self.config
        return {
            "seed": cfg.seed,
            "n_projects": cfg.n_projects,
            "m": cfg.m,
            "t": cfg.t,
            "k": cfg.k,
            "noise": cfg.noise,
            "intercept": cfg.intercept,
            "planted_effects": dict(sorted(cfg.planted_effects.items())),
            "coefficient_signs": {v: int(np.sign(s)) for v, s in sorted(cfg.planted_effects.items())},
            "noise_variables": cfg.noise_variables(),
            "transform": "standardized log1p of the extracted feature",
            "labels": dict(sorted(self.labels.items())),
        }

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.vstack([fv.as_array() for fv in self.features])
        y = np.array([fv.status for fv in self.features], dtype=int)
        return X, y


def regime_stream(regime: str, intensity: float, duration: float, seed) -> np.ndarray:
    """Sorted commit offsets in days within ``[0, duration)``.

    ``intensity`` is the mean rate per day in every regime. steady:
    homogeneous Poisson. front-loaded: rate falls linearly to a tenth of its
    starting value by the end. bursty: clustered arrivals.
    """
    if duration <= 0:
        raise InvalidConfig("duration must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if intensity <= 0:
        return np.zeros(0)
    if regime == "steady":
        n = rng.poisson(intensity * duration)
        times = rng.uniform(0, duration, n)
    elif regime == "front-loaded":
        n = rng.poisson(intensity * duration)
        # inverse CDF of density proportional to 1 - 0.9 u on [0, 1]
        q = rng.uniform(0, 1, n)
        u = (1 - np.sqrt(1 - 1.8 * 0.55 * q)) / 0.9
        times = u * duration
    elif regime == "bursty":
        n_clusters = max(1, rng.poisson(duration / 10))
        centers = rng.uniform(0, duration, n_clusters)
        sizes = rng.poisson(intensity * duration / n_clusters, n_clusters)
        times = np.concatenate([c + np.abs(rng.normal(0, 1.0, s)) for c, s in zip(centers, sizes)])
        times = times[times < duration]
    else:
        raise InvalidConfig(f"unknown regime {regime!r}; expected one of {REGIMES}")
    return np.sort(times)


def _profile(rng: np.random.Generator, actor: str) -> ParticipantProfile:
    owned = int(rng.negative_binomial(2, 0.15))
    one = int(rng.binomial(owned, 0.5))
    two = int(rng.binomial(one, 0.5))
    return ParticipantProfile(
        actor,
        commits_all=int(rng.negative_binomial(1.5, 0.004)),
        prs_all=int(rng.negative_binomial(1.2, 0.03)),
        issues_all=int(rng.negative_binomial(1.0, 0.05)),
        owned_projects=owned,
        owned_projects_1yr=one,
        owned_projects_2yr=two,
        followers=int(rng.negative_binomial(0.8, 0.03)),
        following=int(rng.negative_binomial(0.8, 0.05)),
        starred_projects=int(rng.negative_binomial(0.8, 0.01)),
        org_count=int(rng.poisson(1.0)),
        shows_affiliation=bool(rng.random() < 0.3),
    )


class _Builder:
    def __init__(self, pid: str, created: int):
        self.pid = pid
        self.created = created
        self.events: list[Event] = []

    def add(self, actor: str, kind: EventKind, offset_s: int, issue: str | None = None):
        self.events.append(Event(self.pid, actor, kind, self.created + int(offset_s), issue, len(self.events)))


def _window(cfg: SynthConfig, pid: str, rng: np.random.Generator):
    window_s = cfg.m * MONTH_DAYS * DAY
    created = _START + int(rng.integers(0, _CREATION_SPAN_DAYS)) * DAY + int(rng.integers(0, DAY))
    b = _Builder(pid, created)
    regime = REGIMES[int(rng.choice(3, p=np.asarray(cfg.regime_mix)))]
    intensity = cfg.intensity_median * math.exp(rng.normal(0, 0.6))
    offsets = (regime_stream(regime, intensity, cfg.m * MONTH_DAYS, rng) * DAY).astype(np.int64)
    offsets = np.concatenate([[0], offsets[offsets > 0]])

    devs = [f"{pid}.d{j}" for j in range(1 + rng.poisson(cfg.developers_mean))]
    noncode = [f"{pid}.n{j}" for j in range(rng.poisson(cfg.noncode_mean))]
    shares = rng.dirichlet(np.full(len(devs), 0.6))
    authors = rng.choice(len(devs), size=offsets.size, p=shares)
    authors[0] = 0
    for off, a in zip(offsets, authors):
        b.add(devs[a], EventKind.COMMIT, off)

    def some(actor, kind, mean):
        for _ in range(rng.poisson(mean)):
            b.add(actor, kind, rng.integers(0, window_s))

    pr_rate = rng.beta(2, 8)
    issue_no = 0
    n_commits = np.bincount(authors, minlength=len(devs))
    for d, c in zip(devs, n_commits):
        some(d, EventKind.PULL_REQUEST, pr_rate * c)
        some(d, EventKind.ISSUE_OPENED, 0.08 * c)
        some(d, EventKind.ISSUE_COMMENT, 0.15 * c)
        some(d, EventKind.COMMIT_COMMENT, 0.05 * c)
        some(d, EventKind.ISSUE_EVENT, 0.1 * c)
    for n in noncode:
        activity = rng.gamma(1.5, 1.0)
        b.add(n, EventKind.ISSUE_OPENED, rng.integers(0, window_s))
        some(n, EventKind.ISSUE_OPENED, activity)
        some(n, EventKind.ISSUE_COMMENT, 2 * activity)
        some(n, EventKind.COMMIT_COMMENT, 0.3 * activity)
        some(n, EventKind.ISSUE_EVENT, 0.5 * activity)
    for ev in list(b.events):
        if ev.kind is EventKind.ISSUE_OPENED:
            issue_no += 1

    popularity = math.exp(rng.normal(0, 1.0))
    n_stars = rng.poisson(3 * popularity * cfg.m)
    n_forks = rng.poisson(0.8 * popularity * cfg.m)
    n_members = 1 + rng.poisson(0.6 * len(devs))
    for j in range(n_stars):
        b.add(f"{pid}.s{j}", EventKind.STAR, rng.integers(0, window_s))
    for j in range(n_forks):
        b.add(f"{pid}.f{j}", EventKind.FORK, rng.integers(0, window_s))
    for j in range(n_members):
        b.add(devs[j % len(devs)] if j < len(devs) else f"{pid}.m{j}", EventKind.MEMBER_ADDED,
              rng.integers(0, window_s))
    closed = int(rng.binomial(issue_no, rng.beta(3, 2))) if issue_no else 0
    gfi = int(rng.binomial(issue_no - closed, 0.1)) if issue_no > closed else 0
    snapshot = ProjectSnapshot(pid, issue_no - closed, closed, gfi, n_stars, n_forks, n_members)

    profiles = {a: _profile(rng, a) for a in devs + noncode}
    owner = OwnerType.ORGANIZATION if rng.random() < 0.4 else OwnerType.USER
    readme = int(rng.negative_binomial(2, 0.03))
    contributing = int(rng.negative_binomial(1, 0.05)) if rng.random() < 0.3 else 0
    return b, devs, snapshot, profiles, owner, readme, contributing


def _tail(cfg: SynthConfig, b: _Builder, devs: list[str], status: int, rng: np.random.Generator):
    """Append post-window events so that the lifetime labels to ``status``."""
    window_s = cfg.m * MONTH_DAYS * DAY
    horizon_s = cfg.t * YEAR_DAYS * DAY
    month_s = MONTH_DAYS * DAY
    offsets: list[int] = []
    if status:
        end = horizon_s + int(rng.integers(2, 9)) * month_s
        first_bucket = window_s // month_s
        for bucket in range(first_bucket, end // month_s + 1):
            lo = max(bucket * month_s, window_s)
            hi = min((bucket + 1) * month_s, end + 1)
            if hi <= lo:
                continue
            n = cfg.k + rng.poisson(cfg.k)
            offsets.extend(rng.integers(lo, hi, n).tolist())
        offsets.append(end)
    else:
        end = int(rng.integers(window_s + 1, horizon_s - DAY))
        n = 57 + rng.poisson(20)
        offsets.extend(rng.integers(window_s, end, n).tolist())
        offsets.append(end)
    for off in offsets:
        b.add(devs[int(rng.integers(len(devs)))], EventKind.COMMIT, off)
    # lifetime popularity and process activity so reference selection can pass
    lo, hi = window_s, max(offsets) + 1
    for j in range(4):
        b.add(devs[j % len(devs)], EventKind.PULL_REQUEST, rng.integers(lo, hi))
    b.add(devs[0], EventKind.ISSUE_OPENED, rng.integers(lo, hi))
    for j in range(2):
        b.add(f"{b.pid}.ts{j}", EventKind.STAR, rng.integers(lo, hi))
    b.add(f"{b.pid}.tf0", EventKind.FORK, rng.integers(lo, hi))


def _project(cfg: SynthConfig, pid: str, ss: np.random.SeedSequence):
    window_ss, label_ss = ss.spawn(2)
    rng = np.random.default_rng(window_ss)
    b, devs, snapshot, profiles, owner, readme, contributing = _window(cfg, pid, rng)
    log = ProjectEventLog(pid, tuple(sorted(b.events, key=Event.sort_key)), owner,
                          readme_lines=readme, contributing_lines=contributing)
    win = window_events(log, cfg.m)
    fv = extract_all(win, assign_roles(win), profiles, snapshot, cfg.m)
    return b, devs, log, snapshot, profiles, fv, label_ss


def generate(config: SynthConfig | None = None) -> SynthResult:
    cfg = config or SynthConfig()
    width = len(str(cfg.n_projects - 1))
    pids = [f"p{i:0{width}d}" for i in range(cfg.n_projects)]
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_projects)
    parts = pmap(lambda i: _project(cfg, pids[i], children[i]), range(cfg.n_projects))

    X = np.vstack([p[5].as_array() for p in parts])
    logit = np.full(len(parts), cfg.intercept, dtype=float)
    for var, strength in cfg.planted_effects.items():
        col = np.log1p(np.maximum(X[:, FEATURE_INDEX[var]], 0.0))
        sd = col.std()
        if sd > 0:
            logit += strength * (col - col.mean()) / sd

    def finish(i):
        b, devs, log, snapshot, profiles, fv, label_ss = parts[i]
        rng = np.random.default_rng(label_ss)
        z = logit[i] + cfg.noise * rng.normal()
        status = int(rng.random() < 1.0 / (1.0 + math.exp(-z)))
        _tail(cfg, b, devs, status, rng)
        full = ProjectEventLog(log.project_id, tuple(sorted(b.events, key=Event.sort_key)), log.owner_type,
                               readme_lines=log.readme_lines, contributing_lines=log.contributing_lines)
        if label_sustained(full, cfg.t, cfg.k).status != status:
            raise InvariantViolation(f"{full.project_id}: generated history does not reproduce its label")
        fv.status = status
        return full, float(z), status

    done = pmap(finish, range(len(parts)))
    logs = {pids[i]: done[i][0] for i in range(len(parts))}
    profiles = {a: p for part in parts for a, p in part[4].items()}
    return SynthResult(
        config=cfg,
        corpus=Corpus(logs, {pids[i]: parts[i][3] for i in range(len(parts))}),
        profiles=profiles,
        features=[p[5] for p in parts],
        labels={pids[i]: done[i][2] for i in range(len(parts))},
        logits={pids[i]: done[i][1] for i in range(len(parts))},
    )


def write_synth(result: SynthResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    params = {k: v for k, v in asdict(result.config).items() if k != "planted_effects"}
    params["stage"] = "synth"
    paths = {
        "events": out / "events.csv",
        "projects": out / "projects.csv",
        "profiles": out / "profiles.csv",
        "ground_truth": out / "ground_truth.json",
    }
    write_event_log(result.corpus.logs, paths["events"], params=params)
    write_projects(result.corpus, paths["projects"], params=params)
    write_profiles(result.profiles, paths["profiles"], params=params)
    write_json(paths["ground_truth"], result.ground_truth())
    return paths
