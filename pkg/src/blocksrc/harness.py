"""Cross-validation harness: stratified folds, metrics, experiment runner.

A run trains per-block dictionaries on each fold's training split, classifies
the held-out samples block by block, fuses the block decisions, pools the
predictions over folds, and persists a report (JSON, a CSV summary row, and
an SVG ROC plot). Everything is deterministic given (config, seed); worker
threads only parallelize per-block work whose results are reassembled by
block index.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .blocks import RoiSample, assemble_block_dictionaries, decompose_roi
from .config import ExperimentConfig
from .dictlearn import DiscriminativeDictionary, lcksvd_train
from .ensemble import (
    EnsembleDecision,
    block_decisions_batch,
    ensemble_decision,
    roc_auc,
    write_roc_csv,
    write_roc_svg,
)
from .labels import BENIGN, MALIGNANT, as_label_array, class_name
from .mias import load_roi_cache
from .pgm import image_from_array, write_pgm
from .solvers import Dictionary
from .synth import synth_dataset


def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Assign each sample to one of ``k`` folds, stratified by class.

    Per class the samples are shuffled by a seeded generator and dealt
    round-robin; the dealing pointer carries over between classes so total
    fold sizes also differ by at most one.
    """
    labels = as_label_array(labels)
    n = labels.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    fold = np.empty(n, dtype=int)
    pointer = 0
    for cid in (BENIGN, MALIGNANT):
        idx = np.flatnonzero(labels == cid)
        if idx.size == 0:
            raise ValueError(f"class '{class_name(cid)}' has no samples")
        perm = rng.permutation(idx)
        fold[perm] = (pointer + np.arange(idx.size)) % k
        pointer = (pointer + idx.size) % k
    return fold


def compute_metrics(predictions, truths, scores=None) -> dict:
    """Confusion counts plus TPR/TNR/ACC (and AUC from the scores) as
    percentages; malignant is the positive class. Rates whose denominator is
    zero come back as None."""
    predictions = as_label_array(predictions)
    truths = as_label_array(truths)
    if predictions.size == 0 or predictions.shape != truths.shape:
        raise ValueError("predictions and truths must be non-empty and equally long")
    tp = int(np.sum((predictions == MALIGNANT) & (truths == MALIGNANT)))
    tn = int(np.sum((predictions == BENIGN) & (truths == BENIGN)))
    fp = int(np.sum((predictions == MALIGNANT) & (truths == BENIGN)))
    fn = int(np.sum((predictions == BENIGN) & (truths == MALIGNANT)))
    total = predictions.size
    out = {
        "tp": tp,
        "tn": tn,
        "fp": fp,
        "fn": fn,
        "tpr": 100.0 * tp / (tp + fn) if tp + fn else None,
        "tnr": 100.0 * tn / (tn + fp) if tn + fp else None,
        "acc": 100.0 * (tp + tn) / total,
        "auc": None,
        "roc": None,
    }
    if scores is not None and tp + fn > 0 and tn + fp > 0:
        points, auc = roc_auc(np.asarray(scores, dtype=float), truths)
        out["auc"] = 100.0 * auc
        out["roc"] = [[float(v) for v in row] for row in points]
    return out


@dataclass
class EvalReport:
    """Per-fold and pooled evaluation results for one configuration."""

    config: dict
    block_size: int
    seed: int
    n_samples: int
    folds: list
    incomplete_folds: list
    confusion: dict
    metrics: dict
    roc: list

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "block_size": self.block_size,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "folds": self.folds,
            "incomplete_folds": self.incomplete_folds,
            "confusion": self.confusion,
            "metrics": self.metrics,
            "roc": self.roc,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def summary_row(self) -> dict:
        return {
            "decision": self.config["decision"],
            "k_folds": self.config["k_folds"],
            "block_size": self.block_size,
            "dl_mode": self.config["dl_mode"],
            "tpr": self.metrics.get("tpr"),
            "tnr": self.metrics.get("tnr"),
            "acc": self.metrics.get("acc"),
            "auc": self.metrics.get("auc"),
        }


SUMMARY_COLUMNS = ("decision", "k_folds", "block_size", "dl_mode", "tpr", "tnr", "acc", "auc")


def write_summary_csv(path, rows: list[dict]) -> None:
    lines = [",".join(SUMMARY_COLUMNS)]
    for row in rows:
        cells = []
        for col in SUMMARY_COLUMNS:
            v = row.get(col)
            cells.append("" if v is None else (f"{v:.4f}" if isinstance(v, float) else str(v)))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(cfg: ExperimentConfig) -> list[RoiSample]:
    """Synthetic draw (seeded by the config) or a ROI cache from disk.

    The synthetic generator's block geometry comes from the first configured
    block size, so one config maps to one dataset no matter which block size
    a particular run analyzes.
    """
    if cfg.synthetic:
        return synth_dataset(cfg.synth_spec(), cfg.seed)
    if not cfg.data_dir:
        raise ValueError("config needs data_dir (or synthetic = true)")
    samples = load_roi_cache(cfg.data_dir)
    if not samples:
        raise ValueError(f"ROI cache {cfg.data_dir} is empty")
    if samples[0].size != cfg.roi_size:
        raise ValueError(
            f"cache ROI size {samples[0].size} does not match config roi_size {cfg.roi_size}"
        )
    return samples


def _map_blocks(fn, nbl: int, workers: int) -> list:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(nbl)))
    return [fn(j) for j in range(nbl)]


def train_block_models(
    samples: list[RoiSample], cfg: ExperimentConfig, block_size: int
) -> list[DiscriminativeDictionary]:
    """One model per block position: raw training-block dictionaries for
    dl_mode "none", label-consistent learned dictionaries otherwise."""
    raw = assemble_block_dictionaries(samples, block_size, block_size)
    if cfg.dl_mode == "none":
        return [
            DiscriminativeDictionary(D=d, A=None, W=None, mode="none")
            for d in raw
        ]
    labels = [s.label for s in samples]
    grids = [decompose_roi(s, block_size, block_size) for s in samples]
    params = cfg.train_params()

    def train_one(j: int) -> DiscriminativeDictionary:
        yj = np.stack([g.vectors[j] for g in grids], axis=1)
        return lcksvd_train(yj, labels, params, cfg.dl_mode)

    return _map_blocks(train_one, len(raw), cfg.workers)


def classify_samples(
    dictionaries: list[Dictionary],
    samples: list[RoiSample],
    cfg: ExperimentConfig,
    block_size: int,
) -> list[EnsembleDecision]:
    """Code every sample's blocks against the per-position dictionaries and
    fuse the block decisions."""
    grids = [decompose_roi(s, block_size, block_size) for s in samples]
    nbl = len(dictionaries)
    if grids and grids[0].nbl != nbl:
        raise ValueError(f"sample has {grids[0].nbl} blocks, model has {nbl}")

    def decide_block(j: int):
        yj = np.stack([g.vectors[j] for g in grids], axis=1)
        if cfg.eps_abs > 0:
            eps = np.full(yj.shape[1], cfg.eps_abs)
        else:
            eps = cfg.eps_rel * np.linalg.norm(yj, axis=0)
        return block_decisions_batch(
            dictionaries[j], yj, eps, block_index=j, invert_lls=cfg.invert_lls
        )

    per_block = _map_blocks(decide_block, nbl, cfg.workers)
    fused = []
    for i in range(len(samples)):
        decisions = [per_block[j][i] for j in range(nbl)]
        fused.append(ensemble_decision(decisions, tau=cfg.tau))
    return fused


def decision_outputs(dec: EnsembleDecision, cfg: ExperimentConfig) -> tuple[int, float]:
    """(prediction, decision score) under the configured rule."""
    if cfg.decision == "bbmap":
        return dec.label_bbmap, dec.vote_score
    return dec.label_bbll, dec.ells - dec.tau


def run_experiment(
    cfg: ExperimentConfig,
    block_size: int | None = None,
    samples: list[RoiSample] | None = None,
    persist: bool = True,
) -> EvalReport:
    """Full stratified cross-validation for one block size.

    Per fold: assemble (and optionally learn) the block dictionaries on the
    training split, classify the held-out samples, and record predictions.
    Predictions are pooled across folds before the ROC sweep; a fold that
    fails is recorded with a structured diagnostic and excluded from pooling.
    """
    if block_size is None:
        if len(cfg.block_sizes) != 1:
            raise ValueError("block_size required when the config lists several")
        block_size = cfg.block_sizes[0]
    if cfg.roi_size % block_size != 0:
        raise ValueError(f"block size {block_size} does not divide roi_size {cfg.roi_size}")
    if samples is None:
        samples = load_dataset(cfg)

    labels = as_label_array([s.label for s in samples])
    folds = stratified_folds(labels, cfg.k_folds, cfg.seed)

    fold_entries = []
    incomplete = []
    pooled_pred: list[int] = []
    pooled_truth: list[int] = []
    pooled_scores: list[float] = []
    for f in range(cfg.k_folds):
        test_idx = np.flatnonzero(folds == f)
        train_idx = np.flatnonzero(folds != f)
        stage = "setup"
        try:
            stage = "train"
            train_set = [samples[i] for i in train_idx]
            models = train_block_models(train_set, cfg, block_size)
            stage = "classify"
            test_set = [samples[i] for i in test_idx]
            fused = classify_samples([m.D for m in models], test_set, cfg, block_size)
            stage = "fuse"
            preds = []
            scores = []
            for dec in fused:
                p, s = decision_outputs(dec, cfg)
                preds.append(int(p))
                scores.append(float(s))
        except Exception as err:  # fold aborts with a structured diagnostic
            incomplete.append(f)
            fold_entries.append(
                {
                    "fold": f,
                    "error": {"stage": stage, "type": type(err).__name__, "message": str(err)},
                }
            )
            continue
        truth = [int(labels[i]) for i in test_idx]
        fold_metrics = compute_metrics(preds, truth) if preds else None
        if fold_metrics:
            fold_metrics.pop("roc", None)
        fold_entries.append(
            {
                "fold": f,
                "test_indices": [int(i) for i in test_idx],
                "truth": truth,
                "predictions": preds,
                "scores": scores,
                "metrics": fold_metrics,
            }
        )
        pooled_pred.extend(preds)
        pooled_truth.extend(truth)
        pooled_scores.extend(scores)

    if not pooled_pred:
        raise RuntimeError("every fold failed; nothing to report")
    pooled = compute_metrics(pooled_pred, pooled_truth, pooled_scores)
    roc = pooled.pop("roc") or []
    confusion = {k: pooled[k] for k in ("tp", "tn", "fp", "fn")}
    metrics = {k: pooled[k] for k in ("tpr", "tnr", "acc", "auc")}
    report = EvalReport(
        config=cfg.echo(),
        block_size=block_size,
        seed=cfg.seed,
        n_samples=len(samples),
        folds=fold_entries,
        incomplete_folds=incomplete,
        confusion=confusion,
        metrics=metrics,
        roc=roc,
    )
    if persist:
        persist_report(report, cfg.output_dir)
    return report


def report_stem(report: EvalReport) -> str:
    c = report.config
    return f"{c['decision']}_{c['dl_mode']}_k{c['k_folds']}_b{report.block_size}"


def persist_report(report: EvalReport, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    stem = report_stem(report)
    with open(os.path.join(out_dir, stem + ".json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    write_summary_csv(os.path.join(out_dir, stem + ".csv"), [report.summary_row()])
    if report.roc:
        points = np.asarray(report.roc, dtype=float)
        write_roc_csv(os.path.join(out_dir, stem + "_roc.csv"), points)
        write_roc_svg(os.path.join(out_dir, stem + "_roc.svg"), points, title=stem)


GRID_DECISIONS = ("bbmap", "bbll")
GRID_FOLDS = (10, 20, 30)
GRID_BLOCKS = (64, 32, 16, 8)
GRID_MODES = ("none", "lcksvd1", "lcksvd2")


def run_grid(cfg: ExperimentConfig, persist: bool = True) -> list[EvalReport]:
    """Run the full decision x folds x block-size x learning-mode grid and
    write one summary CSV over all cells."""
    reports = []
    rows = []
    for decision in GRID_DECISIONS:
        for k in GRID_FOLDS:
            for mode in GRID_MODES:
                sub = replace(cfg, decision=decision, k_folds=k, dl_mode=mode)
                samples = load_dataset(sub)
                for block in GRID_BLOCKS:
                    if cfg.roi_size % block != 0:
                        continue
                    rep = run_experiment(sub, block_size=block, samples=samples, persist=persist)
                    reports.append(rep)
                    rows.append(rep.summary_row())
    if persist:
        os.makedirs(cfg.output_dir, exist_ok=True)
        write_summary_csv(os.path.join(cfg.output_dir, "grid_summary.csv"), rows)
    return reports


def export_dictionary_mosaic(D: Dictionary, block_w: int, block_h: int, path) -> np.ndarray:
    """Tile the atoms of one block dictionary into a PGM mosaic.

    Atoms are de-vectorized row-major, min-max scaled to [0, 255] each
    (constant atoms map to mid-gray 128), and laid out in a near-square grid
    with 1-pixel white separators.
    """
    if D.dim != block_w * block_h:
        raise ValueError(f"atom length {D.dim} does not match block {block_w}x{block_h}")
    n = D.n_atoms
    cols = int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    canvas = np.full((rows * block_h + rows - 1, cols * block_w + cols - 1), 255, dtype=np.uint16)
    for a in range(n):
        tile = D.atoms[:, a].reshape(block_h, block_w)
        lo, hi = float(tile.min()), float(tile.max())
        if hi - lo < 1e-12:
            scaled = np.full((block_h, block_w), 128, dtype=np.uint16)
        else:
            scaled = np.round((tile - lo) / (hi - lo) * 255).astype(np.uint16)
        r, c = divmod(a, cols)
        r0 = r * (block_h + 1)
        c0 = c * (block_w + 1)
        canvas[r0 : r0 + block_h, c0 : c0 + block_w] = scaled
    write_pgm(path, image_from_array(canvas, maxval=255))
    return canvas
