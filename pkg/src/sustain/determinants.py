"""Group-based determinant analysis over local explanations.

For each variable, projects are split by the sign of their local
explanation, the variable's raw values are compared between the two groups
with a Mann-Whitney U test, and the effect is classified by the rank-biserial
style effect size r = |z| / sqrt(N).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from sustain.errors import DimensionMismatch, MalformedRow, ValidationError
from sustain.features import DEFINITIONS, FEATURE_INDEX, FEATURE_NAMES
from sustain.tableio import read_table, write_table

EFFECT_THRESHOLDS = (("large", 0.5), ("medium", 0.3), ("small", 0.1))
SMALL_GROUP = 20
EXACT_MAX = 8


@dataclass(frozen=True)
class RankTest:
    U: float
    z: float
    p: float
    method: str


def _exact_two_sided(ranks2: np.ndarray, n_a: int, u_obs: float) -> float:
    """Exact permutation p-value of U from doubled (integer) midranks.

    Counts size-``n_a`` subsets by doubled rank sum with a subset-sum table.
    """
    total = int(ranks2.sum())
    table = np.zeros((n_a + 1, total + 1), dtype=np.float64)
    table[0, 0] = 1.0
    for r in ranks2.astype(np.int64):
        table[1:, r:] += table[:-1, : total + 1 - r].copy()
    counts = table[n_a]
    sums2 = np.arange(total + 1)
    u = sums2 / 2.0 - n_a * (n_a + 1) / 2.0
    n_b = ranks2.size - n_a
    mu = n_a * n_b / 2.0
    extreme = np.abs(u - mu) >= abs(u_obs - mu) - 1e-9
    return float(min(1.0, counts[extreme].sum() / counts.sum()))


def mann_whitney_u(a, b, *, exact_max: int = EXACT_MAX) -> RankTest:
    """Two-sided Mann-Whitney U test of ``a`` against ``b``.

    U is the rank-sum statistic of ``a`` (midranks for ties). z uses the
    tie-corrected normal approximation with a continuity correction and is
    positive when ``a`` tends to be larger. When both samples have at most
    ``exact_max`` values the p-value comes from the exact permutation
    distribution instead of the normal tail.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    n_a, n_b = a.size, b.size
    if n_a < 1 or n_b < 1:
        raise ValidationError("both samples need at least one value")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    U = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2.0)
    N = n_a + n_b
    _, ties = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(ties**3 - ties))
    var = n_a * n_b / 12.0 * ((N + 1) - tie_term / (N * (N - 1))) if N > 1 else 0.0
    if var <= 0:
        return RankTest(U, 0.0, 1.0, "degenerate")
    dev = U - n_a * n_b / 2.0
    z = math.copysign(max(abs(dev) - 0.5, 0.0), dev) / math.sqrt(var)
    if n_a <= exact_max and n_b <= exact_max:
        p = _exact_two_sided(np.rint(2 * ranks).astype(np.int64), n_a, U)
        return RankTest(U, z, p, "exact")
    p = float(min(1.0, 2.0 * norm.sf(abs(z))))
    return RankTest(U, z, p, "normal")


def bonferroni_significant(p: float, n_tests: int, alpha: float = 0.05) -> bool:
    if n_tests < 1:
        raise ValidationError("n_tests must be >= 1")
    return bool(p < alpha / n_tests)


def bonferroni_threshold(n_tests: int, alpha: float = 0.05) -> float:
    return alpha / n_tests


def effect_magnitude(r: float) -> str:
    for label, cut in EFFECT_THRESHOLDS:
        if r >= cut:
            return label
    return "negligible"


def classify_effect(median_neg: float, median_pos: float, r: float, *,
                    mean_neg: float | None = None, mean_pos: float | None = None) -> tuple[str, str]:
    """(direction, magnitude) of a variable's effect.

    Direction compares group medians; with equal medians the direction is
    ``none`` and the magnitude negligible unless both means are supplied, in
    which case they break the tie.
    """
    if r < 0:
        raise ValidationError("effect size must be non-negative")
    lo, hi = median_neg, median_pos
    if lo == hi and mean_neg is not None and mean_pos is not None:
        lo, hi = mean_neg, mean_pos
    if hi > lo:
        return "up", effect_magnitude(r)
    if hi < lo:
        return "down", effect_magnitude(r)
    return "none", "negligible"


@dataclass(frozen=True)
class GroupSplit:
    negative: tuple[str, ...]
    positive: tuple[str, ...]
    excluded: int

    @property
    def empty(self) -> bool:
        return not self.negative or not self.positive


def split_groups(signed: Mapping[str, float]) -> GroupSplit:
    """Strict sign partition of per-project values; exact zeros are excluded."""
    if len(signed) < 2:
        raise ValidationError("need explanations for at least two projects")
    neg = tuple(sorted(pid for pid, v in signed.items() if v < 0))
    pos = tuple(sorted(pid for pid, v in signed.items() if v > 0))
    return GroupSplit(neg, pos, len(signed) - len(neg) - len(pos))


@dataclass
class DeterminantRecord:
    variable: str
    definition: str
    n_neg: int
    n_pos: int
    n_excluded: int
    median_neg: float
    mean_neg: float
    median_pos: float
    mean_pos: float
    U: float
    z: float
    p: float
    r: float
    direction: str
    magnitude: str
    significant: bool
    empty_group: bool
    small_group: bool
    p_method: str

    @property
    def glyph(self) -> str:
        if self.direction == "none" or self.magnitude == "negligible":
            return "-"
        arrow = "up" if self.direction == "up" else "down"
        return f"{arrow}:{self.magnitude}"


def signed_values(explanations, variable: str, by: str = "contribution") -> dict[str, float]:
    if by == "contribution":
        return {e.project_id: e.contributions[variable] for e in explanations}
    if by == "coefficient":
        return {e.project_id: e.coefficients[variable] for e in explanations}
    raise ValidationError(f"split basis must be 'contribution' or 'coefficient', got {by!r}")


def build_determinant_table(
    values: Mapping[str, np.ndarray] | Sequence,
    explanations: Sequence,
    *,
    by: str = "contribution",
    alpha: float = 0.05,
    variables: Sequence[str] = FEATURE_NAMES,
    mean_tiebreak: bool = False,
) -> list[DeterminantRecord]:
    """One record per variable.

    ``values`` maps project id to its raw feature row (or is a sequence of
    FeatureVector). The Bonferroni family size is the number of variables
    whose two groups are both non-empty.
    """
    rows = _rows_by_id(values)
    missing = [e.project_id for e in explanations if e.project_id not in rows]
    if missing:
        raise ValidationError(f"no feature row for explained project {missing[0]!r}")
    prelim = []
    for var in variables:
        split = split_groups(signed_values(explanations, var, by))
        col = FEATURE_INDEX[var]
        neg = np.array([rows[pid][col] for pid in split.negative])
        pos = np.array([rows[pid][col] for pid in split.positive])
        test = None if split.empty else mann_whitney_u(pos, neg)
        prelim.append((var, split, neg, pos, test))
    n_tests = max(1, sum(1 for *_, t in prelim if t is not None))
    out = []
    for var, split, neg, pos, test in prelim:
        stats = [float(np.median(x)) if x.size else float("nan") for x in (neg, pos)]
        means = [float(np.mean(x)) if x.size else float("nan") for x in (neg, pos)]
        if test is None:
            U = z = p = r = float("nan")
            direction, magnitude, sig, method = "none", "negligible", False, "skipped"
        else:
            N = len(split.negative) + len(split.positive)
            U, z, p, method = test.U, test.z, test.p, test.method
            r = abs(z) / math.sqrt(N)
            kwargs = {"mean_neg": means[0], "mean_pos": means[1]} if mean_tiebreak else {}
            direction, magnitude = classify_effect(stats[0], stats[1], r, **kwargs)
            sig = bonferroni_significant(p, n_tests, alpha)
        out.append(
            DeterminantRecord(
                variable=var,
                definition=DEFINITIONS.get(var, ""),
                n_neg=len(split.negative),
                n_pos=len(split.positive),
                n_excluded=split.excluded,
                median_neg=stats[0],
                mean_neg=means[0],
                median_pos=stats[1],
                mean_pos=means[1],
                U=U,
                z=z,
                p=p,
                r=r,
                direction=direction,
                magnitude=magnitude,
                significant=sig,
                empty_group=split.empty,
                small_group=min(len(split.negative), len(split.positive)) < SMALL_GROUP,
                p_method=method,
            )
        )
    return out


def build_stratified_tables(values, explanations, **kwargs) -> dict[str, list[DeterminantRecord]]:
    """Separate tables for organization-owned and user-owned projects."""
    rows = _rows_by_id(values)
    col = FEATURE_INDEX["type"]
    out = {}
    for label, code in (("organization", 0.0), ("user", 1.0)):
        sub = [e for e in explanations if rows[e.project_id][col] == code]
        if len(sub) >= 2:
            out[label] = build_determinant_table(rows, sub, **kwargs)
    return out


def _rows_by_id(values) -> dict[str, np.ndarray]:
    if isinstance(values, Mapping):
        rows = {k: np.asarray(v, dtype=float) for k, v in values.items()}
    else:
        rows = {fv.project_id: fv.as_array() for fv in values}
    for pid, row in rows.items():
        if row.shape != (len(FEATURE_NAMES),):
            raise DimensionMismatch(f"feature row for {pid!r} has shape {row.shape}")
    return rows


DETERMINANT_COLUMNS = [
    "variable", "definition", "median_neg", "mean_neg", "median_pos", "mean_pos", "r",
    "effect", "significant", "n_neg", "n_pos", "n_excluded", "U", "z", "p", "p_method",
    "empty_group", "small_group",
]


def write_determinants(records: Sequence[DeterminantRecord], path: str | Path, params=None) -> None:
    def rows():
        for rec in records:
            d = asdict(rec)
            d["effect"] = rec.glyph
            yield [d[c] for c in DETERMINANT_COLUMNS]

    write_table(path, DETERMINANT_COLUMNS, rows(), params)


def read_determinants(path: str | Path) -> list[dict]:
    """Rows of a determinants table as dicts, numeric columns converted."""
    header, rows = read_table(path)
    if header != DETERMINANT_COLUMNS:
        raise MalformedRow(1, "not a determinants table", path)
    text = {"variable", "definition", "effect", "p_method"}
    flags = {"significant", "empty_group", "small_group"}
    out = []
    for line_no, cells in rows:
        if len(cells) != len(header):
            raise MalformedRow(line_no, f"expected {len(header)} cells, found {len(cells)}", path)
        rec = {}
        try:
            for name, cell in zip(header, cells):
                if name in text:
                    rec[name] = cell
                elif name in flags:
                    rec[name] = cell == "1"
                else:
                    rec[name] = float(cell)
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc), path) from None
        out.append(rec)
    return out
