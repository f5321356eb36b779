#!/usr/bin/env python
"""
stepleak command line.

    stepleak synth    --config demo.yaml --out runs/demo
    stepleak infer    --config demo.yaml --out runs/demo --jobs 4
    stepleak link     --config demo.yaml --out runs/demo
    stepleak report   --config demo.yaml --out runs/demo
    stepleak validate --config demo.yaml

Exit status is 0 on success, 1 when a run fails and 2 for an invalid configuration; on
failure one JSON error record is written to stderr. Set STEPLEAK_LOG to change the log level.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .attrinf import run_task, transfer_attack
from .config_experiment import DataSource, ExperimentConfig, load_experiment, validate_config
from .core import Cohort, attribute_correlation, load_cohort, write_exclusion_report
from .errors import ConfigError, StepleakError
from .evaluation import TaskResult, pca_project, roc_curve, write_pca_csv, write_roc_csv
from .features import extract_features, feature_matrix, matrix_length, write_feature_matrix
from .linkage import run_link
from .synth import generate, write_synthetic

logger = logging.getLogger(__name__)

DEFAULT_OUT = "stepleak-out"
SUMMARY_COLUMNS = [
    "id", "task", "attribute", "config", "classifier", "aggregation",
    "n_folds", "mean_auc", "std_auc", "results_file",
]


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

def _dump(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"


def write_manifest(directory: Path, config: ExperimentConfig) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "manifest.json"
    manifest = {
        "tool": "stepleak",
        "version": __version__,
        "config_hash": config.config_hash,
        "seed": config.seed,
        "config": config.raw,
    }
    path.write_text(_dump(manifest))
    return path


def results_path(out: Path, task: str, config: ExperimentConfig) -> Path:
    return out / "results" / f"{task}-{config.config_hash[:8]}-seed{config.seed}.json"


def write_results(path: Path, task: str, config: ExperimentConfig, result: TaskResult) -> Path:
    """Write a results file; an existing file is only accepted if it is byte-identical."""
    text = _dump(
        {
            "task": task,
            "version": __version__,
            "config_hash": config.config_hash,
            "seed": config.seed,
            "records": result.records,
            "flags": result.flags,
        }
    )
    if path.exists():
        if path.read_text() != text:
            raise StepleakError(f"{path} exists with different content; choose another --out")
        logger.info(f"Results {path} unchanged")
        return path
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info(f"✓ Wrote {len(result.records)} result records to {path}")
    return path


def write_scores(out: Path, result: TaskResult) -> None:
    scores_dir = out / "scores"
    scores_dir.mkdir(parents=True, exist_ok=True)
    for record_id, frame in result.scores.items():
        frame.to_csv(scores_dir / f"{record_id}.csv", index=False)


def load_data(config: ExperimentConfig, out: Path, jobs: int = 1) -> Cohort:
    source = config.source
    if isinstance(source, DataSource):
        cohort = load_cohort(
            source.steps, source.attributes, source.age_threshold, source.max_steps
        )
        if cohort.exclusions:
            write_exclusion_report(cohort, out / "exclusions.json")
            logger.warning(f"{len(cohort.exclusions)} users excluded, see {out}/exclusions.json")
        return cohort
    return generate(source, jobs=jobs).cohort


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(config: ExperimentConfig, out: Path, jobs: int) -> int:
    if isinstance(config.source, DataSource):
        raise ConfigError(["synth: the synth subcommand needs a `synth` section"])
    synthetic = generate(config.source, jobs=jobs)
    synth_dir = out / "synth"
    paths = write_synthetic(synthetic, synth_dir)
    write_manifest(synth_dir, config)
    logger.info(f"✓ Wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_features(config: ExperimentConfig, out: Path, jobs: int) -> int:
    if not config.features:
        raise ConfigError(["features: list at least one preset or feature config to extract"])
    cohort = load_data(config, out, jobs)
    features_dir = out / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    for feature_config in config.features:
        vectors = [
            v
            for record in cohort
            for v in extract_features(record, feature_config, cohort.stats.max_steps)
        ]
        write_feature_matrix(vectors, features_dir / f"{feature_config.label}.csv")
    write_manifest(features_dir, config)
    return 0


def cmd_infer(config: ExperimentConfig, out: Path, jobs: int) -> int:
    if config.infer is None:
        raise ConfigError(["infer: the infer subcommand needs an `infer` section"])
    cohort = load_data(config, out, jobs)
    result = TaskResult()
    for task in config.infer.tasks():
        task_result = run_task(task, cohort, jobs=jobs)
        result.records.extend(task_result.records)
        result.scores.update(task_result.scores)
        result.flags.extend(task_result.flags)
    template = config.infer.task
    for source, target in config.infer.transfer:
        result.records.append(
            transfer_attack(
                cohort,
                source,
                target,
                template.features[0],
                template.classifiers[0],
                fraction=template.fraction,
                seed=template.seed,
            )
        )
    write_results(results_path(out, "infer", config), "infer", config, result)
    write_scores(out, result)
    write_manifest(out / "results", config)
    return 0


def cmd_link(config: ExperimentConfig, out: Path, jobs: int) -> int:
    if config.link is None:
        raise ConfigError(["link: the link subcommand needs a `link` section"])
    cohort = load_data(config, out, jobs)
    result = run_link(config.link, cohort, jobs=jobs)
    write_results(results_path(out, "link", config), "link", config, result)
    write_scores(out, result)
    write_manifest(out / "results", config)
    return 0


def summary_rows(results_files: list[Path]) -> list[dict]:
    rows = []
    for path in results_files:
        payload = json.loads(path.read_text())
        for record in payload.get("records", []):
            fold_aucs = record.get("fold_aucs")
            rows.append(
                {
                    "id": record.get("id"),
                    "task": record.get("task"),
                    "attribute": record.get("attribute", record.get("target")),
                    "config": record.get("config"),
                    "classifier": record.get("classifier"),
                    "aggregation": record.get("aggregation"),
                    "n_folds": len(fold_aucs) if fold_aucs is not None else None,
                    "mean_auc": record.get("mean_auc", record.get("target_auc")),
                    "std_auc": record.get("std_auc"),
                    "results_file": path.name,
                }
            )
    return rows


def _write_rocs(out: Path, report_dir: Path, rows: list[dict]) -> int:
    roc_dir = report_dir / "roc"
    roc_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for row in rows:
        scores_file = out / "scores" / f"{row['id']}.csv"
        if not scores_file.exists():
            continue
        frame = pd.read_csv(scores_file)
        if frame["label"].nunique() < 2:
            logger.warning(f"No ROC for {row['id']}: pooled scores have one class")
            continue
        write_roc_csv(roc_curve(frame["score"], frame["label"]), roc_dir / scores_file.name)
        written += 1
    return written


def _write_correlation(cohort: Cohort, report_dir: Path) -> None:
    if len(cohort) < 2:
        logger.warning(f"Skipped attribute correlation: {len(cohort)} user(s)")
        return
    attribute_correlation(cohort).matrix.to_csv(report_dir / "correlation.csv")


def _write_pca(config: ExperimentConfig, cohort: Cohort, report_dir: Path) -> None:
    feature_config = config.report.pca_features
    max_steps = cohort.stats.max_steps
    user_ids, rows = [], []
    length = matrix_length(feature_config)
    for record in cohort:
        vectors = extract_features(record, feature_config, max_steps)
        if not vectors:
            continue
        # one point per user: the mean of its day or action vectors
        rows.append(feature_matrix(vectors, length).mean(axis=0))
        user_ids.append(record.user_id)
    if length is None and rows:
        width = max(r.size for r in rows)
        rows = [np.pad(r, (0, width - r.size)) for r in rows]
    try:
        projection = pca_project(np.vstack(rows) if rows else np.zeros((0, 0)), seed=config.seed)
    except ValueError as e:
        logger.warning(f"Skipped PCA on {feature_config.label}: {e}")
        return
    position = {u: i for i, u in enumerate(user_ids)}
    for attribute in config.report.pca_attributes:
        labelled, y = cohort.labels(attribute)
        keep = [(position[u], c) for u, c in zip(labelled, y.tolist()) if u in position]
        if not keep:
            continue
        index = [i for i, _ in keep]
        write_pca_csv(
            [user_ids[i] for i in index],
            projection.coords[index],
            [c for _, c in keep],
            report_dir / f"pca_{attribute}.csv",
        )
    logger.info(
        f"✓ PCA of {feature_config.label}: explained variance "
        f"{', '.join(f'{v:.3g}' for v in projection.explained_variance)}"
    )


def cmd_report(config: ExperimentConfig, out: Path, jobs: int) -> int:
    results_files = sorted((out / "results").glob("*.json"))
    results_files = [p for p in results_files if p.name != "manifest.json"]
    if not results_files:
        raise StepleakError(f"no results files under {out / 'results'}; run infer or link first")
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    rows = summary_rows(results_files)
    pd.DataFrame(rows, columns=SUMMARY_COLUMNS).to_csv(report_dir / "summary.csv", index=False)
    n_roc = _write_rocs(out, report_dir, rows)
    cohort = load_data(config, out, jobs)
    _write_correlation(cohort, report_dir)
    _write_pca(config, cohort, report_dir)
    write_manifest(report_dir, config)
    logger.info(
        f"✓ Report: {len(rows)} records from {len(results_files)} results files, "
        f"{n_roc} ROC curves"
    )
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "infer": cmd_infer,
    "link": cmd_link,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Experiment config (YAML)")
    common.add_argument("--seed", type=int, default=None, help="Override the config's seed")
    common.add_argument("--out", default=None, help=f"Output directory (default: {DEFAULT_OUT})")
    common.add_argument("--jobs", type=int, default=1, help="Parallel workers")

    parser = argparse.ArgumentParser(
        prog="stepleak", description="Privacy-risk audit of step-count data"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "Generate a synthetic cohort"),
        ("features", "Write feature matrices"),
        ("infer", "Run attribute inference"),
        ("link", "Run the linkability attacks"),
        ("report", "Summarize results into tables, ROC and PCA CSVs"),
        ("validate", "Check a config file and list every problem"),
    ):
        subparsers.add_parser(name, parents=[common], help=help_text)
    return parser


def configure_logging() -> None:
    name = os.environ.get("STEPLEAK_LOG", "INFO").upper()
    level = logging.getLevelName(name)
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if not isinstance(level, int):
        logger.warning(f"Unknown STEPLEAK_LOG level {name!r}, using INFO")


def error_record(error: Exception) -> dict:
    return {
        "error": type(error).__name__,
        "message": str(error),
        "diagnostics": getattr(error, "diagnostics", []),
    }


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        if args.command == "validate":
            diagnostics = validate_config(args.config)
            if diagnostics:
                raise ConfigError(diagnostics)
            print("ok")
            return 0
        config = load_experiment(args.config, seed=args.seed, output_dir=args.out)
        out = Path(config.output_dir or DEFAULT_OUT)
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, config)
        status = COMMANDS[args.command](config, out, args.jobs)
        logger.info(f"✓ {args.command} finished, artifacts in {out}")
        return status
    except ConfigError as e:
        for diagnostic in e.diagnostics:
            logger.error(diagnostic)
        print(json.dumps(error_record(e)), file=sys.stderr)
        return 2
    except (StepleakError, OSError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(json.dumps(error_record(e)), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
