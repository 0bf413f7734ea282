"""Command-line entry point.

Subcommands: generate, train, evaluate, score. Every command is a pure
function of (config file, input files, seed); wall-clock timing only
ever lands in the run log and on stdout, never in artifacts or reports,
so fixed-seed reruns are byte-identical.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .artifact import ModelArtifact, load_artifact, save_artifact
from .config import (
    config_hash,
    experiment_config,
    load_dataset,
    load_run_config,
    resolve_preprocess,
)
from .errors import ArtifactError, ConfigError, DataError
from .experiment import run_cv
from .iforest import anomaly_scores, build_forest, candidate_set
from .preprocess import fit_pipeline, transform
from .selftrain import confidence, self_train
from .svm import decision_values, grid_search, inverse_frequency_weights, KernelParams
from .tabular import UNKNOWN, label_mask_split, apply_label_mask, load_csv


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route usage problems to exit code 1
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fraudsieve", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run-config YAML path")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the config output_dir")
        p.add_argument("--quiet", action="store_true")

    common(sub.add_parser("generate", help="write a synthetic dataset CSV"))
    common(sub.add_parser("train", help="fit the two-phase model, write an artifact"))
    common(sub.add_parser("evaluate", help="run the cross-validated comparison"))
    p_score = sub.add_parser("score", help="score a CSV with a trained artifact")
    p_score.add_argument("--artifact", required=True, help="model artifact path")
    p_score.add_argument("--input", required=True, help="CSV to score")
    p_score.add_argument("--out", default=None, help="output directory")
    p_score.add_argument("--quiet", action="store_true")
    return parser


def _load(args):
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return cfg, out_dir


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def cmd_generate(args) -> int:
    from .synth import write_csv

    cfg, out_dir = _load(args)
    if cfg.synthetic is None:
        raise ConfigError("generate needs a data.synthetic section")
    path = out_dir / "synthetic.csv"
    write_csv(path, cfg.synthetic, cfg.seed)
    _say(args, f"wrote {cfg.synthetic.n} rows "
               f"({round(cfg.synthetic.fraud_rate * cfg.synthetic.n)} fraud) to {path}")
    return 0


def _active_hyperparameters(cfg) -> list[str]:
    lines = [f"seed: {cfg.seed}"]
    lines.append(f"iforest.n_trees: {cfg.iforest.n_trees}")
    lines.append(f"iforest.subsample_size: {cfg.iforest.subsample_size}")
    lines.append(f"iforest.alpha: {cfg.iforest.threshold.alpha}")
    lines.append(f"iforest.contamination: {cfg.iforest.threshold.contamination}")
    if cfg.svm.use_grid:
        lines.append(f"svm.grid.C: {list(cfg.svm.grid_c)}")
        lines.append(f"svm.grid.gamma: {list(cfg.svm.grid_gamma)}")
        lines.append(f"svm.grid_folds: {cfg.svm.grid_folds}")
    else:
        lines.append(f"svm.params.C: {cfg.svm.c}")
        lines.append(f"svm.params.gamma: {cfg.svm.gamma}")
    lines.append(f"svm.tol: {cfg.svm.tol}")
    lines.append(f"svm.max_passes: {cfg.svm.max_passes}")
    st = cfg.selftrain
    lines.append(f"selftrain.theta_base: {st.theta_base}")
    lines.append(f"selftrain.beta: {st.beta}")
    lines.append(f"selftrain.n_target: {st.n_target if st.n_target is not None else 'auto (0.5 * labeled)'}")
    lines.append(f"selftrain.max_iterations: {st.max_iterations}")
    lines.append(f"selftrain.delta_f1_tol: {st.delta_f1_tol}")
    lines.append(f"selftrain.min_batch: {st.min_batch}")
    lines.append(f"selftrain.validation_fraction: {st.validation_fraction}")
    lines.append(f"train.labeled_fraction: {cfg.train_labeled_fraction}")
    return lines


def cmd_train(args) -> int:
    cfg, out_dir = _load(args)
    table, labels = load_dataset(cfg)
    pp_cfg = resolve_preprocess(cfg, table)

    # Natural unknowns in the data define the unlabeled pool; a fully
    # labeled dataset is masked down to train.labeled_fraction instead.
    if labels.observed_mask.all():
        labeled_idx, _ = label_mask_split(labels, cfg.train_labeled_fraction, cfg.seed)
        masked, _hidden = apply_label_mask(labels, labeled_idx)
    else:
        masked = labels
    labeled_idx = masked.observed_indices()
    unlabeled_idx = masked.unknown_indices()

    pp_model = fit_pipeline(table, masked, pp_cfg)
    X = transform(pp_model, table)
    forest = build_forest(
        X,
        n_trees=cfg.iforest.n_trees,
        subsample_size=cfg.iforest.subsample_size,
        seed=cfg.seed,
    )

    if len(unlabeled_idx) > 0:
        du_scores = anomaly_scores(forest, X[unlabeled_idx])
        with open(out_dir / "phase1_scores.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "score"])
            for i, s in zip(unlabeled_idx, du_scores):
                writer.writerow([int(i), repr(float(s))])
        cand_rel = candidate_set(du_scores, cfg.iforest.threshold)
        X_cand = X[unlabeled_idx][cand_rel]
    else:
        X_cand = np.empty((0, X.shape[1]))

    y_labeled = masked.values[labeled_idx]
    if cfg.svm.use_grid:
        params = grid_search(
            X[labeled_idx],
            y_labeled,
            c_grid=cfg.svm.grid_c,
            gamma_grid=cfg.svm.grid_gamma,
            k=cfg.svm.grid_folds,
            seed=cfg.seed,
            tol=cfg.svm.tol,
            max_passes=cfg.svm.max_passes,
        )
    else:
        w_legit, w_fraud = inverse_frequency_weights(y_labeled)
        params = KernelParams(cfg.svm.gamma, cfg.svm.c, w_fraud, w_legit)

    model, history = self_train(
        X[labeled_idx],
        y_labeled,
        X_cand,
        params,
        cfg=cfg.selftrain,
        seed=cfg.seed,
        tol=cfg.svm.tol,
        max_passes=cfg.svm.max_passes,
    )
    history.to_csv(out_dir / "selftrain_history.csv")

    artifact = ModelArtifact(
        preprocess=pp_model,
        forest=forest,
        svm=model,
        threshold=cfg.iforest.threshold,
        meta={
            "seed": cfg.seed,
            "config_hash": config_hash(args.config),
            "package_version": __version__,
            "grid_searched": cfg.svm.use_grid,
            "chosen_C": params.C,
            "chosen_gamma": params.gamma,
        },
    )
    artifact_path = out_dir / "model.fsart"
    save_artifact(artifact_path, artifact)

    # Wall-clock detail is confined to the run log so artifacts and
    # reports stay byte-identical across reruns.
    with open(out_dir / "run_log.txt", "w", encoding="utf-8") as fh:
        fh.write(f"started: {datetime.now(timezone.utc).isoformat()}\n")
        fh.write(f"config: {args.config} (sha256 {config_hash(args.config)})\n")
        fh.write(f"rows: {table.row_count} labeled: {len(labeled_idx)} "
                 f"unlabeled: {len(unlabeled_idx)} candidates: {len(X_cand)}\n")
        fh.write(f"features_out: {pp_model.output_dim}\n")
        fh.write(f"chosen C: {params.C} gamma: {params.gamma}\n")
        for line in _active_hyperparameters(cfg):
            fh.write(line + "\n")
    _say(
        args,
        f"trained on {table.row_count} rows ({len(labeled_idx)} labeled); "
        f"{len(history)} self-training records; artifact at {artifact_path}",
    )
    return 0


def cmd_evaluate(args) -> int:
    cfg, out_dir = _load(args)
    table, labels = load_dataset(cfg)
    if not labels.observed_mask.all():
        raise DataError("evaluate needs fully observed labels for held-out scoring")
    pp_cfg = resolve_preprocess(cfg, table)
    for fraction in cfg.eval_fractions:
        exp = experiment_config(cfg, pp_cfg, fraction)
        report = run_cv(table, labels, exp)
        stem = f"report_lf{fraction:g}"
        report.to_csv(out_dir / f"{stem}.csv")
        text = report.to_text()
        (out_dir / f"{stem}.txt").write_text(text, encoding="utf-8")
        _say(args, text)
    return 0


def cmd_score(args) -> int:
    artifact = load_artifact(args.artifact)
    out_dir = Path(args.out) if args.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)

    schema = dict(zip(artifact.preprocess.schema_names, artifact.preprocess.schema_kinds))
    with open(args.input, "r", encoding="utf-8", newline="") as fh:
        raw_rows = list(csv.reader(fh))
    if not raw_rows:
        raise DataError(f"{args.input}: file is empty, expected a header row")
    header = raw_rows[0]
    extra = [c for c in header if c not in schema]
    if extra:
        # tolerate exactly the training label column; anything else is a mismatch
        full_schema = dict(schema)
        for c in extra:
            full_schema[c] = "categorical"
        if len(extra) > 1:
            raise DataError(f"{args.input}: unexpected columns {extra}")
        table = load_csv(args.input, {c: full_schema[c] for c in header})
        table = table.drop_column(extra[0])
        feature_header = [c for c in header if c != extra[0]]
        if tuple(feature_header) != artifact.preprocess.schema_names:
            raise DataError(f"{args.input}: column order does not match the artifact schema")
    else:
        table = load_csv(args.input, {c: schema[c] for c in header})
        if table.column_names != artifact.preprocess.schema_names:
            raise DataError(f"{args.input}: column order does not match the artifact schema")

    start = time.perf_counter()
    X = transform(artifact.preprocess, table)
    if table.row_count:
        scores = anomaly_scores(artifact.forest, X)
        f = decision_values(artifact.svm, X)
        pred = (f > 0.0).astype(np.int8)
        conf = confidence(f)
    else:
        scores = f = conf = np.empty(0)
        pred = np.empty(0, dtype=np.int8)
    elapsed = time.perf_counter() - start

    out_path = out_dir / "scored.csv"
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header + ["anomaly_score", "decision_value", "predicted_label", "confidence"])
        for row, s, d, p, c in zip(raw_rows[1:], scores, f, pred, conf):
            writer.writerow(row + [repr(float(s)), repr(float(d)), int(p), repr(float(c))])
    if not args.quiet:
        rate = table.row_count / elapsed if elapsed > 0 else float("inf")
        print(f"scored {table.row_count} rows in {elapsed:.3f}s ({rate:,.0f} rows/s) -> {out_path}")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "score": cmd_score,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
