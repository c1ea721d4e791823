"""Command-line entry point: one subcommand per pipeline stage.

Stages communicate only through files. Unless a path flag is given, every
stage reads and writes fixed file names inside ``--out``, so a run is::

    sustain synth --out run && sustain select --out run && sustain label --out run
    sustain featurize --out run && sustain train --out run && sustain evaluate --out run

Exit status is 0 on success, 1 for invalid input or configuration and 2
when a file cannot be read or written.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from sustain import __version__
from sustain.config import PipelineConfig, build_config, read_config_file
from sustain.corpus import (
    SelectionThresholds,
    compute_percentile_thresholds,
    lifetime_metrics,
    read_labels,
    select_projects,
    write_labels,
)
from sustain.determinants import build_determinant_table, build_stratified_tables, read_determinants, write_determinants
from sustain.errors import SustainError, ValidationError
from sustain.explain import DegenerateFeature, compute_train_stats, explain_corpus, read_explanations, write_explanations
from sustain.features import FEATURE_NAMES, feature_matrix, read_features, write_features
from sustain.ingest import Corpus, load_corpus, parse_profiles
from sustain.learner import BoostedEnsemble, kfold_cv, train
from sustain.learner.validation import ablation_run
from sustain.pipeline import evaluate_grid, featurize_corpus, label_corpus
from sustain.report import build_report, read_eval, write_eval
from sustain.synth import SynthConfig, generate, write_synth
from sustain.tableio import read_table, write_json, write_table

STAGES = ("synth", "select", "label", "featurize", "train", "evaluate", "explain", "analyze", "report")

FILES = {
    "events": "events.csv",
    "projects": "projects.csv",
    "profiles": "profiles.csv",
    "selected": "selected.csv",
    "labels": "labels.csv",
    "features": "features.csv",
    "model": "model.json",
    "eval": "eval.csv",
    "explanations": "explanations.csv",
    "determinants": "determinants.csv",
}


def _params(cfg: PipelineConfig, stage: str, **extra) -> dict:
    p = {"stage": stage, "seed": cfg.seed}
    p.update(extra)
    return p


def _corpus(cfg: PipelineConfig) -> Corpus:
    corpus = load_corpus(cfg.path("events", FILES["events"]), cfg.path("projects", FILES["projects"]),
                         cfg.event_format)
    selected = cfg.out / FILES["selected"]
    if selected.exists():
        _, rows = read_table(selected)
        corpus = corpus.subset(cells[0] for _, cells in rows)
    return corpus


def _labelled(cfg: PipelineConfig):
    vectors = read_features(cfg.path("features", FILES["features"]))
    missing = [v.project_id for v in vectors if v.status is None]
    if missing:
        raise ValidationError(f"features table has no status for {len(missing)} project(s), e.g. {missing[0]!r}; run label first")
    X = feature_matrix(vectors)
    y = np.array([v.status for v in vectors], dtype=int)
    return vectors, X, y


def run_synth(cfg: PipelineConfig) -> None:
    sc = SynthConfig(seed=cfg.seed, m=cfg.single("m"), t=int(cfg.single("t")), k=int(cfg.single("k")),
                     **cfg.synth)
    paths = write_synth(generate(sc), cfg.out)
    print(f"wrote {sc.n_projects} synthetic projects to {paths['events'].parent}")


def run_select(cfg: PipelineConfig) -> None:
    corpus = load_corpus(cfg.path("events", FILES["events"]), cfg.path("projects", FILES["projects"]),
                         cfg.event_format)
    if cfg.selection == "percentile":
        th = compute_percentile_thresholds(corpus, cfg.percentile)
    else:
        th = SelectionThresholds.reference()
    kept = select_projects(corpus, th)
    params = _params(cfg, "select", selection=cfg.selection, **asdict(th))
    header = ["project_id", "commits", "prs", "issues", "forks", "stars", "span_days"]
    rows = ([pid, *asdict(lifetime_metrics(kept.logs[pid])).values()] for pid in kept.ids())
    write_table(cfg.out / FILES["selected"], header, rows, params)
    write_json(cfg.out / "thresholds.json", {"selection": cfg.selection, **asdict(th)})
    print(f"selected {len(kept)} of {len(corpus)} projects")


def run_label(cfg: PipelineConfig) -> None:
    t, k = cfg.single("t"), cfg.single("k")
    labels = label_corpus(_corpus(cfg), t, k)
    write_labels(labels, cfg.path("labels", FILES["labels"]), _params(cfg, "label", t=t, k=k))
    n_pos = sum(lb.status for lb in labels.values())
    print(f"labelled {len(labels)} projects, {n_pos} sustained")


def run_featurize(cfg: PipelineConfig) -> None:
    m = cfg.single("m")
    corpus = _corpus(cfg)
    profiles = parse_profiles(cfg.path("profiles", FILES["profiles"]))
    labels_path = cfg.path("labels", FILES["labels"])
    labels = read_labels(labels_path) if labels_path.exists() else None
    vectors = featurize_corpus(corpus, profiles, m, labels, on_missing=cfg.on_missing)
    write_features(vectors, cfg.path("features", FILES["features"]),
                   _params(cfg, "featurize", m=m, on_missing=cfg.on_missing))
    print(f"extracted {len(FEATURE_NAMES)} features for {len(vectors)} projects")


def run_train(cfg: PipelineConfig) -> None:
    _, X, y = _labelled(cfg)
    model = train(X, y, cfg.train, FEATURE_NAMES)
    model.save(cfg.path("model", FILES["model"]))
    print(f"trained {len(model.trees)} trees on {y.size} projects")


def run_evaluate(cfg: PipelineConfig) -> None:
    grid = any(len(getattr(cfg, n)) > 1 for n in ("m", "t", "k"))
    if grid:
        corpus = _corpus(cfg)
        profiles = parse_profiles(cfg.path("profiles", FILES["profiles"]))
        cells = evaluate_grid(corpus, profiles, cfg.m, cfg.t, cfg.k, cfg.train, folds=cfg.folds,
                              seed=cfg.seed, dimension=cfg.dimension, on_missing=cfg.on_missing)
        rows = [c.row() for c in cells]
        reports = [c.report.to_dict() if c.report else c.row() for c in cells]
    else:
        _, X, y = _labelled(cfg)
        params = {"m": cfg.m[0], "t": cfg.t[0], "k": cfg.k[0]}
        main = ablation_run(X, y, cfg.dimension, cfg.train, cfg.folds, cfg.seed, params=params)
        base = kfold_cv(X, y, folds=cfg.folds, seed=cfg.seed, model="logreg", params=params)
        rows = [{**main.row(), "note": ""}, {**base.row(), "note": "baseline"}]
        reports = [main.to_dict(), base.to_dict()]
    params = _params(cfg, "evaluate", folds=cfg.folds, dimension=cfg.dimension,
                     m=list(cfg.m), t=list(cfg.t), k=list(cfg.k), **asdict(cfg.train))
    write_eval(rows, cfg.out / FILES["eval"], params)
    write_json(cfg.out / "eval.json", {"reports": reports})
    for r in rows:
        print(f"m={r['m']} t={r['t']:g} k={r['k']:g} {r['model']}/{r['dimension']}: "
              f"auc={r['auc']:.3f} precision={r['precision']:.3f} recall={r['recall']:.3f}"
              + (f" ({r['note']})" if r["note"] else ""))


def run_explain(cfg: PipelineConfig) -> None:
    vectors, X, _ = _labelled(cfg)
    model = BoostedEnsemble.load(cfg.path("model", FILES["model"]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateFeature)
        stats = compute_train_stats(X, FEATURE_NAMES)
    expls = explain_corpus(model, X, [v.project_id for v in vectors], stats, cfg.explain)
    params = _params(cfg, "explain", **asdict(cfg.explain))
    write_explanations(expls, cfg.path("explanations", FILES["explanations"]), params)
    print(f"explained {len(expls)} projects")


def run_analyze(cfg: PipelineConfig) -> None:
    vectors, _, _ = _labelled(cfg)
    expls = read_explanations(cfg.path("explanations", FILES["explanations"]), cfg.explain.n_samples)
    params = _params(cfg, "analyze", by=cfg.by)
    records = build_determinant_table(vectors, expls, by=cfg.by)
    write_determinants(records, cfg.out / FILES["determinants"], params)
    for owner, recs in build_stratified_tables(vectors, expls, by=cfg.by).items():
        write_determinants(recs, cfg.out / f"determinants_{owner}.csv", {**params, "owner": owner})
    sig = [r.variable for r in records if r.significant]
    print(f"{len(records)} variables analysed, {len(sig)} significant")


def run_report(cfg: PipelineConfig) -> None:
    eval_path = cfg.out / FILES["eval"]
    det_path = cfg.out / FILES["determinants"]
    if not eval_path.exists() and not det_path.exists():
        raise FileNotFoundError(2, "nothing to report; expected an evaluation or determinants table",
                                str(eval_path))
    rows = read_eval(eval_path) if eval_path.exists() else []
    records = read_determinants(det_path) if det_path.exists() else []
    summary = build_report(rows, records, cfg.out, _params(cfg, "report"))
    print(f"report: {summary['grid_cells']} grid cells, {len(summary['significant'])} significant "
          f"determinants, Bonferroni threshold {summary['bonferroni_threshold']:.4e} "
          f"for {summary['n_tests']} tests")


RUNNERS = {name: globals()[f"run_{name}"] for name in STAGES}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sustain", description="Sustained-activity prediction pipeline.")
    parser.add_argument("--version", action="version", version=f"sustain {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file; flags override its keys")
    common.add_argument("--out", help="working directory for artifacts")
    for name in ("events", "projects", "profiles", "features", "labels", "model", "explanations"):
        common.add_argument(f"--{name}", help=f"{name} file (default: <out>/{FILES.get(name, name)})")
    common.add_argument("--event-format", dest="event_format", choices=("csv", "jsonl"))
    common.add_argument("--m", help="window length in months; comma list for an evaluation grid")
    common.add_argument("--t", help="sustained-activity horizon in years; comma list allowed")
    common.add_argument("--k", help="minimum median monthly commits; comma list allowed")
    common.add_argument("--seed", type=int)
    common.add_argument("--folds", type=int)
    common.add_argument("--dimension")
    common.add_argument("--n-samples", dest="n_samples", type=int)
    common.add_argument("--n-projects", dest="n_projects", type=int)
    common.add_argument("--selection", choices=("reference", "percentile"))
    common.add_argument("--on-missing", dest="on_missing", choices=("error", "zero"))
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=RUNNERS[name].__doc__)
    return parser


def _describe(exc: BaseException) -> str:
    if isinstance(exc, OSError) and exc.filename:
        return f"{exc.filename}: {exc.strerror or exc}"
    return str(exc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = args.stage
    try:
        values = read_config_file(args.config) if args.config else {}
        flags = {k: v for k, v in vars(args).items() if k not in ("config", "stage") and v is not None}
        values.update(flags)
        cfg = build_config(values)
        cfg.out.mkdir(parents=True, exist_ok=True)
        RUNNERS[stage](cfg)
    except (SustainError, ValueError) as exc:
        print(f"sustain {stage}: error: {_describe(exc)}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"sustain {stage}: I/O error: {_describe(exc)}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
