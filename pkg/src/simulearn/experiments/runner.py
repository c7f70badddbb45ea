"""Experiment orchestration: training runs, the lambda sweep, evaluation
exports, and interpretability exports.

Every run is a pure function of (config, mode, seed), so runs can execute
in parallel worker processes; the summary writer is the single aggregation
point and always orders rows by (mode, seed).  Output files carry no
timestamps, which keeps re-runs byte-identical.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ..data import GroupedDataset, load_image_dir, stack_features, stack_labels, synth_generate
from ..errors import TrainingDivergence
from ..groups import GroupLayout
from ..interpret import grad_cam, layer_correlation, top_activating_aux, write_heatmap_png, write_overlay_png
from ..metrics import evaluate_predictions, roc_curve
from ..model import build_cnn_spec, extend_multi_group, init_params, model_forward
from ..training import TrainConfig, train
from .config import DirectoryConfig, ExperimentConfig, ModeSpec
from .plotting import Series, emit_plot


@dataclass
class RunResult:
    mode_label: str
    lam: float | None
    seed: int
    best_epoch: int
    val_dacc: float
    test_dacc: float
    test_accuracy: float
    test_macro_auc: float
    inter_group_error_rate: float
    final_train_loss: float
    run_dir: str


def build_dataset(config: ExperimentConfig, seed: int) -> GroupedDataset:
    """Materialize the configured dataset for one run.

    Synthetic data follows ``dataset_seed`` when set (one fixed dataset for
    every run) and the run seed otherwise; the stratified ``reduce``
    subsample always follows the run seed.
    """
    if isinstance(config.dataset, DirectoryConfig):
        ds = load_image_dir(
            config.dataset.path,
            image_size=config.dataset.image_size,
            grayscale=config.dataset.grayscale,
            seed=config.dataset.split_seed,
            require_aux=any(m.kind == "sl" for m in config.modes),
        )
    else:
        data_seed = config.dataset_seed if config.dataset_seed is not None else seed
        ds = synth_generate(config.dataset, data_seed)
    if config.reduce < 1.0:
        ds = reduce_target_train(ds, config.reduce, seed)
    return ds


def reduce_target_train(ds: GroupedDataset, fraction: float, seed: int) -> GroupedDataset:
    """Keep a stratified fraction of the target training set (>= 1 per class)."""
    rng = np.random.default_rng([seed, 202])
    kept = []
    for c in range(ds.layout.k):
        members = [s for s in ds.target_train if s.class_index == c]
        keep = max(1, int(math.floor(fraction * len(members))))
        order = rng.permutation(len(members))[:keep]
        kept.extend(members[i] for i in sorted(order))
    return GroupedDataset(ds.layout, kept, ds.target_val, ds.target_test, ds.aux_pool)


def _resolve_mode(config: ExperimentConfig, mode: ModeSpec) -> ModeSpec:
    """Pin the effective lambda into sl modes so labels carry it."""
    if mode.kind == "sl" and mode.lam is None:
        return ModeSpec("sl", lam=config.train.lam)
    return mode


def _train_config(config: ExperimentConfig, mode: ModeSpec, seed: int) -> TrainConfig:
    lam = mode.lam if mode.lam is not None else config.train.lam
    return TrainConfig(
        learning_rate=config.train.learning_rate,
        epochs=config.train.epochs,
        batch_size=config.train.batch_size,
        optimizer=config.train.optimizer,
        lam=lam,
        alpha=config.train.alpha,
        beta=config.train.beta,
        mode="simultaneous" if mode.kind == "sl" else mode.kind,
        dropout_rate=mode.dropout,
        seed=seed,
    )


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _report_rows(report) -> list[tuple]:
    return [
        ("accuracy", report.accuracy),
        ("dacc", report.dacc),
        ("macro_auc", report.macro_auc),
        ("inter_group_error_rate", report.inter_group_error_rate),
    ] + [(f"auc_class{c}", v) for c, v in sorted(report.per_class_auc.items())]


def _write_report(report, out_dir: Path, k: int) -> None:
    """Serialize an evaluation report as CSV plus readable text."""
    _write_csv(out_dir / "report.csv", ["metric", "value"], _report_rows(report))
    _write_csv(
        out_dir / "confusion.csv",
        [""] + [f"pred_{c}" for c in range(k)],
        [[f"true_{c}"] + list(report.confusion[c]) for c in range(k)],
    )
    lines = [f"{name}: {_fmt_cell(value)}" for name, value in _report_rows(report)]
    if report.skipped_auc_classes:
        lines.append(f"auc_skipped_classes: {list(report.skipped_auc_classes)}")
    lines.append("confusion (rows true, columns predicted):")
    for c in range(k):
        lines.append("  " + " ".join(f"{v:5d}" for v in report.confusion[c]))
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])
    return path


def execute_run(config: ExperimentConfig, mode: ModeSpec, seed: int, out_dir: Path) -> RunResult:
    """Train and evaluate one (mode, seed) arm; write its artifacts."""
    out_dir = Path(out_dir)
    run_id = f"{mode.label}_seed{seed}"
    run_dir = out_dir / "runs" / run_id
    run_dir.mkdir(parents=True, exist_ok=True)

    dataset = build_dataset(config, seed)
    joint = mode.kind == "sl"
    spec = build_cnn_spec(
        dataset.layout.k,
        conv_filters=config.model.conv_filters,
        kernel_size=config.model.kernel_size,
        conv_stride=config.model.conv_stride,
        n1=config.model.n1,
        n2=config.model.n2,
        dropout_rate=mode.dropout,
    )
    input_shape = dataset.target_train[0].features.shape
    params = init_params(spec, input_shape, np.random.default_rng([seed, 100]))
    if joint:
        spec, params = extend_multi_group(
            spec, params, dataset.layout.m, np.random.default_rng([seed, 101])
        )

    train_cfg = _train_config(config, mode, seed)
    result = train(spec, params, dataset, train_cfg)

    _write_csv(
        out_dir / f"history_{run_id}.csv",
        ["epoch", "train_loss", "val_dacc"],
        [(e.epoch, e.train_loss, e.val_dacc) for e in result.history],
    )
    meta = {"mode": mode.label, "seed": seed, "lam": train_cfg.lam if joint else None}
    save_checkpoint(
        run_dir / "final.ckpt", spec, result.params,
        optimizer_state=result.optimizer_state, epoch=train_cfg.epochs, meta=meta,
    )
    save_checkpoint(
        run_dir / "best.ckpt", spec, result.best_params,
        epoch=result.best_epoch + 1, meta=meta,
    )

    eval_layout = dataset.layout if joint else GroupLayout(k=dataset.layout.k, m=0)
    test_x = stack_features(dataset.target_test)
    test_y = stack_labels(eval_layout, dataset.target_test)
    probs, _ = model_forward(spec, result.best_params, test_x)
    report = evaluate_predictions(probs, test_y, eval_layout)

    _write_report(report, run_dir, eval_layout.k)
    true_class = np.argmax(test_y, axis=1)
    for c in range(eval_layout.k):
        positives = true_class == c
        if positives.all() or not positives.any():
            continue
        fpr, tpr, thr = roc_curve(probs[:, c], positives)
        _write_csv(
            run_dir / f"roc_class{c}.csv",
            ["fpr", "tpr", "threshold"],
            list(zip(fpr, tpr, thr)),
        )

    val_dacc = result.history[result.best_epoch - result.history[0].epoch].val_dacc
    return RunResult(
        mode_label=mode.label,
        lam=train_cfg.lam if joint else None,
        seed=seed,
        best_epoch=result.best_epoch,
        val_dacc=val_dacc,
        test_dacc=report.dacc,
        test_accuracy=report.accuracy,
        test_macro_auc=report.macro_auc,
        inter_group_error_rate=report.inter_group_error_rate,
        final_train_loss=result.history[-1].train_loss,
        run_dir=str(run_dir),
    )


def _run_job(args) -> RunResult:
    config, mode, seed, out_dir = args
    return execute_run(config, mode, seed, Path(out_dir))


def _execute_all(
    config: ExperimentConfig, arms: Sequence[ModeSpec], out_dir: Path
) -> tuple[list[RunResult], TrainingDivergence | None]:
    """Run every (mode, seed) pair, in order or on a worker pool.

    Returns the completed results plus the first divergence error, if any;
    completed rows are preserved either way.
    """
    jobs = [(config, mode, seed, str(out_dir)) for mode in arms for seed in config.seeds]
    results: list[RunResult] = []
    error: TrainingDivergence | None = None
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_job, job) for job in jobs]
            for future in futures:
                try:
                    results.append(future.result())
                except TrainingDivergence as exc:
                    error = error or exc
    else:
        for job in jobs:
            try:
                results.append(_run_job(job))
            except TrainingDivergence as exc:
                error = exc
                break
    order = {(mode.label, seed): i for i, (mode, seed) in enumerate(
        (m, s) for m in arms for s in config.seeds
    )}
    results.sort(key=lambda r: order[(r.mode_label, r.seed)])
    return results, error


SUMMARY_HEADER = [
    "mode", "lam", "seed", "best_epoch", "val_dacc", "test_dacc",
    "test_accuracy", "test_macro_auc", "inter_group_error_rate", "final_train_loss",
]


def _summary_rows(results: list[RunResult], arms: Sequence[ModeSpec]) -> list[list]:
    rows = [
        [r.mode_label, r.lam, r.seed, r.best_epoch, r.val_dacc, r.test_dacc,
         r.test_accuracy, r.test_macro_auc, r.inter_group_error_rate, r.final_train_loss]
        for r in results
    ]
    for mode in arms:
        group = [r for r in results if r.mode_label == mode.label]
        if not group:
            continue
        for stat, fn in (("mean", np.mean), ("std", _sample_std)):
            rows.append([
                mode.label,
                group[0].lam,
                stat,
                "",
                float(fn([r.val_dacc for r in group])),
                float(fn([r.test_dacc for r in group])),
                float(fn([r.test_accuracy for r in group])),
                float(fn([r.test_macro_auc for r in group])),
                float(fn([r.inter_group_error_rate for r in group])),
                float(fn([r.final_train_loss for r in group])),
            ])
    return rows


def _sample_std(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def run_experiment(config: ExperimentConfig, out_dir: str | Path) -> Path:
    """Train and evaluate every configured (mode, seed); write summary.csv.

    On divergence the completed rows are still written and the error is
    re-raised so callers can exit non-zero.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arms = [_resolve_mode(config, mode) for mode in config.modes]
    results, error = _execute_all(config, arms, out_dir)
    _write_csv(out_dir / "summary.csv", SUMMARY_HEADER, _summary_rows(results, arms))
    if error is not None:
        (out_dir / "error.txt").write_text(f"{error}\n")
        raise error
    return out_dir


def lambda_sweep(config: ExperimentConfig, out_dir: str | Path) -> Path:
    """Train one joint model per (lambda, seed) plus the baseline reference.

    Writes ``sweep.csv`` (lam, mean/std validation dacc), ``sweep_runs.csv``
    (per-run rows), ``sweep_summary.csv`` (best lambda and the baseline
    reference), and ``sweep.svg``.
    """
    if not config.sweep_lambdas:
        raise ValueError("config has an empty [sweep] lambdas list")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arms = [ModeSpec("baseline")] + [ModeSpec("sl", lam=lam) for lam in config.sweep_lambdas]
    results, error = _execute_all(config, arms, out_dir)

    by_arm: dict[str, list[RunResult]] = {}
    for r in results:
        by_arm.setdefault(r.mode_label, []).append(r)

    lam_rows = []
    for lam in config.sweep_lambdas:
        group = by_arm.get(ModeSpec("sl", lam=lam).label, [])
        if not group:
            continue
        lam_rows.append(
            (lam, float(np.mean([r.val_dacc for r in group])),
             _sample_std([r.val_dacc for r in group]))
        )
    _write_csv(out_dir / "sweep.csv", ["lam", "mean_val_dacc", "std_val_dacc"], lam_rows)
    _write_csv(
        out_dir / "sweep_runs.csv",
        ["kind", "lam", "seed", "val_dacc", "test_dacc", "test_accuracy"],
        [
            ("baseline" if r.lam is None else "sl", r.lam, r.seed,
             r.val_dacc, r.test_dacc, r.test_accuracy)
            for r in results
        ],
    )

    baseline_runs = by_arm.get("baseline", [])
    baseline_mean = float(np.mean([r.val_dacc for r in baseline_runs])) if baseline_runs else float("nan")
    baseline_std = _sample_std([r.val_dacc for r in baseline_runs]) if baseline_runs else float("nan")
    summary_rows = []
    if lam_rows:
        best_lam, best_mean, _ = max(lam_rows, key=lambda row: (row[1], row[0]))
        summary_rows.append(("best_lambda", best_lam))
        summary_rows.append(("best_mean_val_dacc", best_mean))
    summary_rows.append(("baseline_mean_val_dacc", baseline_mean))
    summary_rows.append(("baseline_std_val_dacc", baseline_std))
    _write_csv(out_dir / "sweep_summary.csv", ["key", "value"], summary_rows)

    if lam_rows:
        emit_plot(
            [Series("joint training", tuple(r[0] for r in lam_rows), tuple(r[1] for r in lam_rows))],
            out_dir / "sweep.svg",
            title="Validation delimited accuracy vs lambda",
            xlabel="lambda",
            ylabel="validation dacc",
            baseline=baseline_mean if math.isfinite(baseline_mean) else None,
        )
    if error is not None:
        (out_dir / "error.txt").write_text(f"{error}\n")
        raise error
    return out_dir


def evaluate_checkpoint(
    checkpoint_path: str | Path, config: ExperimentConfig, out_dir: str | Path
) -> Path:
    """Re-evaluate a saved checkpoint on the configured test split."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = load_checkpoint(checkpoint_path)
    seed = int(ckpt.meta.get("seed", config.seeds[0])) if ckpt.meta else config.seeds[0]
    dataset = build_dataset(config, seed)
    layout = (
        dataset.layout if ckpt.spec.aux_outputs else GroupLayout(k=dataset.layout.k, m=0)
    )
    test_x = stack_features(dataset.target_test)
    test_y = stack_labels(layout, dataset.target_test)
    probs, _ = model_forward(ckpt.spec, ckpt.params, test_x)
    report = evaluate_predictions(probs, test_y, layout)
    _write_report(report, out_dir, layout.k)
    true_class = np.argmax(test_y, axis=1)
    for c in range(layout.k):
        positives = true_class == c
        if positives.all() or not positives.any():
            continue
        fpr, tpr, thr = roc_curve(probs[:, c], positives)
        _write_csv(
            out_dir / f"roc_class{c}.csv", ["fpr", "tpr", "threshold"], list(zip(fpr, tpr, thr))
        )
    return out_dir


def interpret_export(
    checkpoint_paths: Sequence[str | Path],
    config: ExperimentConfig,
    out_dir: str | Path,
) -> Path:
    """Write layer-correlation and auxiliary-activation reports.

    Produces a side-by-side ``layer_corr.csv`` across all supplied
    checkpoints; for checkpoints with an auxiliary head it adds the
    top-activating-class table and class activation maps for the hottest
    instances.  Checkpoints without one are noted and skipped for those.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    notices: list[str] = []
    loaded: list[tuple[str, Checkpoint]] = []
    for path in checkpoint_paths:
        ckpt = load_checkpoint(path)
        label = ckpt.meta.get("mode") if ckpt.meta else None
        label = label or Path(path).stem
        if ckpt.meta and "seed" in ckpt.meta:
            label = f"{label}_seed{ckpt.meta['seed']}"
        loaded.append((label, ckpt))

    corr_columns: dict[str, dict[str, float]] = {}
    all_layers: list[str] = []
    for label, ckpt in loaded:
        seed = int(ckpt.meta.get("seed", config.seeds[0])) if ckpt.meta else config.seeds[0]
        dataset = build_dataset(config, seed)
        layers = config.interpret.layers or ckpt.spec.conv_layer_names
        report = layer_correlation(
            ckpt.spec, ckpt.params, dataset.target_test, dataset.layout, layers
        )
        corr_columns[label] = report.mean_abs
        for layer in report.layers:
            if layer not in all_layers:
                all_layers.append(layer)

        if ckpt.spec.aux_outputs == 0:
            notices.append(f"{label}: no auxiliary head, activation exports skipped")
            continue
        if not dataset.aux_pool:
            notices.append(f"{label}: no auxiliary pool in dataset, activation exports skipped")
            continue
        ranked = top_activating_aux(
            ckpt.spec, ckpt.params, dataset.aux_pool, dataset.layout,
            top_classes=config.interpret.top_classes,
            top_instances=config.interpret.top_instances,
        )
        _write_csv(
            out_dir / f"aux_activation_{label}.csv",
            ["rank", "class_index", "mean_target_mass", "instances", "truncated"],
            [
                (rank, entry.class_index, entry.mean_score, len(entry.instances), entry.truncated)
                for rank, entry in enumerate(ranked, start=1)
            ],
        )
        target_indices = list(range(dataset.layout.k))
        for rank, entry in enumerate(ranked, start=1):
            for inst_rank, (pos, _score) in enumerate(entry.instances, start=1):
                sample = dataset.aux_pool[pos]
                heatmap = grad_cam(
                    ckpt.spec, ckpt.params, sample.features, target_indices, source_id=pos
                )
                stem = f"gradcam_{label}_rank{rank}_class{entry.class_index}_inst{inst_rank}"
                write_heatmap_png(heatmap, out_dir / f"{stem}.png")
                write_overlay_png(sample.features, heatmap, out_dir / f"{stem}_overlay.png")

    _write_csv(
        out_dir / "layer_corr.csv",
        ["layer"] + [label for label, _ in loaded],
        [
            [layer] + [corr_columns[label].get(layer) for label, _ in loaded]
            for layer in all_layers
        ],
    )
    if notices:
        (out_dir / "notices.txt").write_text("\n".join(notices) + "\n")
    return out_dir
