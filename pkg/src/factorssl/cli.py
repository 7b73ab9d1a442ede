"""Command-line entry points.

Commands: gendata, pretrain, finetune, evaluate, gradcheck, sweep.
Exit codes: 0 success, 1 failed check (gradient check failure, training
divergence), 2 usage/configuration/data errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .checkpoint import atomic_write_text
from .config import RunConfig, from_dict, load_config
from .errors import FactorsslError, TrainingError
from .train import clean_features, finetune_linear
from .workflows import (
    evaluate_model,
    format_report,
    gradcheck_report,
    load_dataset_dir,
    load_pretrain_checkpoint,
    ratio_sweep_report,
    run_pretrain,
    sensitivity_sweep,
    write_dataset_dir,
)


def _load_cfg(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return RunConfig()


def _write_report(report, out_path):
    if out_path:
        os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
        atomic_write_text(out_path, json.dumps(report, indent=2, sort_keys=True) + "\n")


def cmd_gendata(args):
    cfg = _load_cfg(args)
    if args.seed is not None:
        cfg.data.synthetic.seed = args.seed
    splits = write_dataset_dir(args.out, cfg)
    print(
        "wrote %s: train/val/test = %d/%d/%d samples"
        % (args.out, splits["train"].n_samples, splits["val"].n_samples, splits["test"].n_samples)
    )
    return 0


def cmd_pretrain(args):
    cfg = _load_cfg(args)
    seed = args.seed if args.seed is not None else cfg.seeds.master
    splits, _ = load_dataset_dir(args.data)
    result = run_pretrain(
        cfg, splits, args.out, seed, resume_dir=args.resume, stop_epoch=args.stop_epoch
    )
    if result.diverged:
        print("training diverged: %s" % result.divergence_error, file=sys.stderr)
        print("last good checkpoint (epoch %d) saved to %s" % (result.epoch, args.out))
        return 1
    print("pretrained to epoch %d (%d steps); checkpoint in %s" % (result.epoch, result.step, args.out))
    return 0


def _merged_eval_config(ckpt_cfg: RunConfig, args) -> RunConfig:
    """Checkpoint config defines the model; --config may override the
    evaluation/finetune knobs only."""
    if not getattr(args, "config", None):
        return ckpt_cfg
    override = load_config(args.config)
    merged = from_dict(ckpt_cfg.to_dict())
    merged.eval = override.eval
    merged.schedule.finetune = override.schedule.finetune
    merged.optimizer.finetune_weight_decay = override.optimizer.finetune_weight_decay
    return merged


def cmd_finetune(args):
    model, _, ckpt_cfg, _ = load_pretrain_checkpoint(args.ckpt)
    cfg = _merged_eval_config(ckpt_cfg, args)
    splits, manifest = load_dataset_dir(args.data)
    n_classes = manifest["n_classes"]
    seed = args.seed if args.seed is not None else cfg.seeds.master
    train, val = splits["train"], splits["val"]
    specs = cfg.pipeline.specs(train.modality_ids)
    include_private = cfg.loss.private_enabled
    train_feats = clean_features(model, train, specs, include_private)
    clf, info = finetune_linear(
        train_feats, np.asarray(train.labels), n_classes, cfg, seed, label_ratio=args.label_ratio
    )
    report = dict(info)
    if val.n_samples > 0 and val.labels is not None:
        val_feats = clean_features(model, val, specs, include_private)
        report["val_accuracy"] = float(np.mean(clf.predict(val_feats) == np.asarray(val.labels)))
    if args.out:
        from .checkpoint import save_checkpoint

        save_checkpoint(
            os.path.join(args.out, "classifier"),
            {"head/weights": clf.weights, "head/bias": clf.bias},
            {"kind": "classifier", "n_classes": n_classes, "label_ratio": args.label_ratio},
        )
        _write_report(report, os.path.join(args.out, "finetune_report.json"))
    print(format_report(report, title="finetune report"))
    return 0


def cmd_evaluate(args):
    model, _, ckpt_cfg, _ = load_pretrain_checkpoint(args.ckpt)
    cfg = _merged_eval_config(ckpt_cfg, args)
    splits, manifest = load_dataset_dir(args.data)
    n_classes = manifest["n_classes"]
    seed = args.seed if args.seed is not None else cfg.seeds.master
    report = evaluate_model(model, cfg, splits, n_classes, args.label_ratio, seed)
    if args.ratio_sweep:
        report["label_ratio_sweep"] = ratio_sweep_report(model, cfg, splits, n_classes, seed)
    if args.out:
        _write_report(report, os.path.join(args.out, "report.json"))
    print(format_report(report))
    if args.ratio_sweep:
        for ratio, stats in sorted(report["label_ratio_sweep"].items(), reverse=True):
            print(
                "  ratio %-5s accuracy %.4f ± %.4f  f1 %.4f ± %.4f"
                % (ratio, stats["accuracy_mean"], stats["accuracy_std"],
                   stats["macro_f1_mean"], stats["macro_f1_std"])
            )
    return 0


def cmd_gradcheck(args):
    rows = gradcheck_report(
        seed=args.seed,
        eps=args.eps,
        n_modalities=args.modalities,
        inject_fault=args.inject_fault,
    )
    width = max(len(r["loss"]) for r in rows)
    all_ok = True
    for r in rows:
        status = "ok" if r["ok"] else "FAIL"
        print("  %-*s  max_rel_err %.3e  %s" % (width, r["loss"], r["max_rel_err"], status))
        all_ok = all_ok and r["ok"]
    return 0 if all_ok else 1


def cmd_sweep(args):
    cfg = _load_cfg(args)
    seed = args.seed if args.seed is not None else cfg.seeds.master
    if args.data:
        splits, manifest = load_dataset_dir(args.data)
        n_classes = manifest["n_classes"]
    else:
        from .synthetic import generate, split as split_ds

        dataset = generate(cfg.data.synthetic)
        splits = split_ds(dataset, cfg.data.split_ratios, seed=cfg.data.synthetic.seed + 1)
        n_classes = cfg.data.synthetic.n_classes
    report = sensitivity_sweep(cfg, splits, n_classes, seed)
    if args.out:
        _write_report(report, os.path.join(args.out, "sweep_report.json"))
    print("loss-weight sensitivity sweep (baseline accuracy %.4f)" % report["baseline"]["accuracy"])
    for cell in report["grid"]:
        print("  %-9s = %-4g  accuracy %.4f" % (cell["param"], cell["value"], cell["accuracy"]))
    print("  spread: %.4f (min %.4f, max %.4f)"
          % (report["accuracy_spread"], report["accuracy_min"], report["accuracy_max"]))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="factorssl",
        description="Factorized contrastive pretraining for multimodal time series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gendata", help="generate a synthetic dataset directory")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=None, help="override the generator seed")
    p.set_defaults(func=cmd_gendata)

    p = sub.add_parser("pretrain", help="self-supervised pretraining")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--data", required=True, help="dataset directory from gendata")
    p.add_argument("--out", required=True, help="output directory (checkpoint + metrics)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--stop-epoch", type=int, default=None, help="pause after this epoch")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="train a linear probe on frozen features")
    p.add_argument("--config", help="override eval/finetune sections")
    p.add_argument("--ckpt", required=True, help="pretraining checkpoint directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="where to store the classifier and report")
    p.add_argument("--label-ratio", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="full downstream evaluation report")
    p.add_argument("--config", help="override eval/finetune sections")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="directory for report.json")
    p.add_argument("--label-ratio", type=float, default=1.0)
    p.add_argument("--ratio-sweep", action="store_true",
                   help="run the label-ratio x seeds protocol")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all loss gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--modalities", type=int, default=2)
    p.add_argument("--inject-fault", action="store_true",
                   help="self-test: corrupt one gradient and expect failure")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="loss-weight sensitivity grid")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--data", help="dataset directory (generated in memory if omitted)")
    p.add_argument("--out", help="directory for sweep_report.json")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingError as exc:
        print("training error: %s" % exc, file=sys.stderr)
        return 1
    except FactorsslError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
