"""Evaluation-grid and determinant summaries, as tables and PNG figures."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from sustain.determinants import EFFECT_THRESHOLDS, bonferroni_threshold  # noqa: E402
from sustain.errors import MalformedRow  # noqa: E402
from sustain.tableio import read_table, write_json, write_table  # noqa: E402

EVAL_COLUMNS = ["m", "t", "k", "dimension", "model", "auc", "precision", "recall",
                "folds", "n", "n_pos", "note"]
_PNG_META = {"Software": None}


def write_eval(rows: Sequence[dict], path, params=None) -> None:
    write_table(path, EVAL_COLUMNS, ([r.get(c) for c in EVAL_COLUMNS] for r in rows), params)


def read_eval(path) -> list[dict]:
    header, rows = read_table(path)
    if header != EVAL_COLUMNS:
        raise MalformedRow(1, "not an evaluation table", path)
    out = []
    for line_no, cells in rows:
        if len(cells) != len(header):
            raise MalformedRow(line_no, f"expected {len(header)} cells, found {len(cells)}", path)
        rec = dict(zip(header, cells))
        try:
            for c in ("m", "folds", "n", "n_pos"):
                rec[c] = int(float(rec[c]))
            for c in ("t", "k", "auc", "precision", "recall"):
                rec[c] = float(rec[c]) if rec[c] else math.nan
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc), path) from None
        out.append(rec)
    return out


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_grid(rows: Sequence[dict], path, metric: str = "auc") -> Path:
    """Heatmap of one metric: rows are m, columns are (t, k)."""
    ms = sorted({r["m"] for r in rows})
    tks = sorted({(r["t"], r["k"]) for r in rows})
    grid = np.full((len(ms), len(tks)), np.nan)
    for r in rows:
        grid[ms.index(r["m"]), tks.index((r["t"], r["k"]))] = r[metric]
    fig, ax = plt.subplots(figsize=(1.2 * len(tks) + 2, 0.8 * len(ms) + 1.5))
    im = ax.imshow(grid, vmin=0.0, vmax=1.0, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(tks)), [f"t={t:g}\nk={k:g}" for t, k in tks])
    ax.set_yticks(range(len(ms)), [f"m={m}" for m in ms])
    for i in range(len(ms)):
        for j in range(len(tks)):
            v = grid[i, j]
            ax.text(j, i, "n/a" if np.isnan(v) else f"{v:.2f}", ha="center", va="center",
                    color="white" if np.isnan(v) or v < 0.6 else "black", fontsize=8)
    fig.colorbar(im, ax=ax, label=metric.upper())
    ax.set_title(f"Cross-validated {metric.upper()}")
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_effects(records: Sequence[dict], path) -> Path:
    """Horizontal bars of |r| per variable, coloured by direction; hatched if not significant."""
    recs = [r for r in records if not math.isnan(r["r"])]
    recs.sort(key=lambda r: r["r"])
    fig, ax = plt.subplots(figsize=(7, max(3.0, 0.16 * len(recs) + 1)))
    colors = {"up": "tab:green", "down": "tab:red"}
    for i, r in enumerate(recs):
        direction = r["effect"].split(":")[0] if ":" in r["effect"] else "none"
        ax.barh(i, r["r"], color=colors.get(direction, "tab:gray"),
                hatch=None if r["significant"] else "//", edgecolor="black", linewidth=0.3)
    for _, cut in EFFECT_THRESHOLDS:
        ax.axvline(cut, color="black", linestyle=":", linewidth=0.8)
    ax.set_yticks(range(len(recs)), [r["variable"] for r in recs], fontsize=6)
    ax.set_xlabel("effect size r")
    ax.set_title("Determinants (green up, red down, hatched not significant)")
    fig.tight_layout()
    return _save(fig, Path(path))


def build_report(eval_rows: Sequence[dict], det_records: Sequence[dict], out_dir, params=None) -> dict:
    """Write the grid table, figures and a JSON summary into ``out_dir``."""
    out = Path(out_dir)
    paths: dict[str, str] = {}
    if eval_rows:
        ordered = sorted(eval_rows, key=lambda r: (r["m"], r["t"], r["k"], r["dimension"]))
        write_eval(ordered, out / "report_grid.csv", params)
        paths["grid"] = str(out / "report_grid.csv")
        for metric in ("auc", "precision", "recall"):
            paths[f"grid_{metric}_png"] = str(plot_grid(ordered, out / f"grid_{metric}.png", metric))
    n_tests = sum(1 for r in det_records if not r["empty_group"])
    summary = {
        "grid_cells": len(eval_rows),
        "determinants": len(det_records),
        "n_tests": n_tests,
        "bonferroni_threshold": bonferroni_threshold(max(n_tests, 1)),
        "significant": sorted(r["variable"] for r in det_records if r["significant"]),
        "effect_thresholds": {label: cut for label, cut in EFFECT_THRESHOLDS},
    }
    if det_records:
        paths["effects_png"] = str(plot_effects(det_records, out / "effect_sizes.png"))
    summary["files"] = {k: Path(v).name for k, v in sorted(paths.items())}
    write_json(out / "report.json", summary)
    return summary
