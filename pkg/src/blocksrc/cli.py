"""Command line interface.

Subcommands: prepare-rois, train, evaluate, cv, grid, synth, mosaic. Flags
override config-file keys; exit code 0 on success, nonzero with a structured
JSON diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import load_config
from .harness import (
    classify_samples,
    compute_metrics,
    decision_outputs,
    export_dictionary_mosaic,
    load_dataset,
    run_experiment,
    run_grid,
    train_block_models,
    write_summary_csv,
)
from .mias import build_roi_cache
from .model_io import load_model, save_model
from .synth import SynthSpec, synth_dataset, write_synth_cache


def _config_overrides(args) -> dict:
    keys = (
        "roi_size",
        "k_folds",
        "dl_mode",
        "decision",
        "dict_size",
        "sparsity",
        "alpha",
        "beta",
        "iterations",
        "eps_rel",
        "eps_abs",
        "tau",
        "seed",
        "workers",
        "data_dir",
        "output_dir",
        "synthetic",
    )
    over = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "block_sizes", None):
        over["block_sizes"] = tuple(args.block_sizes)
    if getattr(args, "invert_lls", False):
        over["invert_lls"] = True
    return over


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="plain-text key = value config file")
    p.add_argument("--roi-size", dest="roi_size", type=int)
    p.add_argument("--block-sizes", dest="block_sizes", type=int, nargs="+")
    p.add_argument("--k-folds", dest="k_folds", type=int)
    p.add_argument("--dl-mode", dest="dl_mode", choices=("none", "lcksvd1", "lcksvd2"))
    p.add_argument("--decision", choices=("bbmap", "bbll"))
    p.add_argument("--dict-size", dest="dict_size", type=int)
    p.add_argument("--sparsity", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--eps-rel", dest="eps_rel", type=float)
    p.add_argument("--eps-abs", dest="eps_abs", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--synthetic", action="store_const", const=True, default=None)
    p.add_argument("--invert-lls", dest="invert_lls", action="store_true")


def _cmd_prepare_rois(args) -> int:
    manifest = build_roi_cache(
        data_dir=args.data_dir,
        readings_path=args.readings,
        roi_size=args.roi_size,
        out_dir=args.out,
        y_origin=args.y_origin,
        strict=not args.lenient,
    )
    labels = [e["label"] for e in manifest["samples"]]
    print(
        f"wrote {len(labels)} ROIs to {args.out} "
        f"({labels.count('benign')} benign, {labels.count('malignant')} malignant)"
    )
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config, _config_overrides(args))
    block = cfg.block_sizes[0]
    samples = load_dataset(cfg)
    models = train_block_models(samples, cfg, block)
    meta = {"block_w": block, "block_h": block, "roi_size": cfg.roi_size, "dl_mode": cfg.dl_mode}
    os.makedirs(os.path.dirname(os.path.abspath(args.model)), exist_ok=True)
    save_model(args.model, models, cfg.train_params(), meta)
    print(f"trained {len(models)} block dictionaries -> {args.model}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config, _config_overrides(args))
    models, _, meta = load_model(args.model)
    block = int(meta.get("block_w", cfg.block_sizes[0]))
    samples = load_dataset(cfg)
    fused = classify_samples([m.D for m in models], samples, cfg, block)
    preds, scores = [], []
    for dec in fused:
        p, s = decision_outputs(dec, cfg)
        preds.append(p)
        scores.append(s)
    truth = [s.label for s in samples]
    metrics = compute_metrics(preds, truth, scores)
    metrics.pop("roc", None)
    os.makedirs(cfg.output_dir, exist_ok=True)
    out = os.path.join(cfg.output_dir, "evaluation.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(metrics, sort_keys=True))
    return 0


def _cmd_cv(args) -> int:
    cfg = load_config(args.config, _config_overrides(args))
    rows = []
    for block in cfg.block_sizes:
        report = run_experiment(cfg, block_size=block)
        rows.append(report.summary_row())
        m = report.metrics
        print(
            f"block {block}: acc={m['acc']:.2f}% auc="
            + (f"{m['auc']:.2f}%" if m["auc"] is not None else "n/a")
        )
    write_summary_csv(os.path.join(cfg.output_dir, "cv_summary.csv"), rows)
    return 0


def _cmd_grid(args) -> int:
    cfg = load_config(args.config, _config_overrides(args))
    reports = run_grid(cfg)
    print(f"grid complete: {len(reports)} configurations -> {cfg.output_dir}")
    return 0


def _cmd_synth(args) -> int:
    spec_kwargs = {}
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh.read().splitlines(), start=1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                if "=" not in body:
                    raise ValueError(f"synth spec line {lineno}: expected key = value")
                key, raw = (p.strip() for p in body.split("=", 1))
                if key == "noise_sigma":
                    spec_kwargs[key] = float(raw)
                else:
                    spec_kwargs[key] = int(raw)
    spec = SynthSpec(**spec_kwargs)
    samples = synth_dataset(spec, args.seed)
    write_synth_cache(samples, args.out)
    print(f"wrote {len(samples)} synthetic ROIs to {args.out}")
    return 0


def _cmd_mosaic(args) -> int:
    models, _, meta = load_model(args.model)
    if not 0 <= args.block < len(models):
        raise ValueError(f"block index {args.block} out of range [0, {len(models)})")
    bw = int(meta.get("block_w", int(np.sqrt(models[args.block].D.dim))))
    bh = int(meta.get("block_h", bw))
    export_dictionary_mosaic(models[args.block].D, bw, bh, args.out)
    print(f"wrote mosaic of block {args.block} ({models[args.block].D.n_atoms} atoms) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blocksrc",
        description="Block-based ensembles of sparse classifiers with dictionary learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-rois", help="extract lesion ROIs from MIAS scans")
    p.add_argument("--data-dir", required=True, help="directory holding <ref_id>.pgm scans")
    p.add_argument("--readings", required=True, help="radiological readings file")
    p.add_argument("--roi-size", dest="roi_size", type=int, default=64)
    p.add_argument("--out", required=True, help="ROI cache output directory")
    p.add_argument("--y-origin", dest="y_origin", choices=("top", "bottom"), default="bottom")
    p.add_argument("--lenient", action="store_true", help="skip malformed reading lines")
    p.set_defaults(func=_cmd_prepare_rois)

    p = sub.add_parser("train", help="train block dictionaries on the whole dataset")
    _add_config_flags(p)
    p.add_argument("--model", required=True, help="model archive output path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="classify a dataset with a trained model")
    _add_config_flags(p)
    p.add_argument("--model", required=True, help="model archive path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("cv", help="stratified cross-validation (full pipeline)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("grid", help="run the full decision/fold/block/mode grid")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("synth", help="generate a synthetic ROI cache")
    p.add_argument("--spec", help="key = value synthetic spec file")
    p.add_argument("--seed", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("mosaic", help="render one block dictionary as a PGM mosaic")
    p.add_argument("--model", required=True)
    p.add_argument("--block", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mosaic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:
        diag = {"error": type(err).__name__, "message": str(err), "command": args.command}
        print(json.dumps(diag, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
