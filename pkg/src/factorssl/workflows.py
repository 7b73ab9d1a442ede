"""End-to-end workflows shared by the CLI and the test suite.

Covers the dataset-directory format (split CSVs + manifest), checkpoint
round trips for whole training runs, the evaluation report, the loss-weight
sensitivity sweep, and the gradient-check harness.
"""

from __future__ import annotations

import json
import os
from collections import OrderedDict

import numpy as np

from . import autodiff as ad
from .batching import build_sequences, sample_batch
from .checkpoint import (
    atomic_write_text,
    canonical_json,
    load_checkpoint,
    save_checkpoint,
)
from .config import RunConfig, from_dict
from .errors import ConfigurationError, IngestionError, UsageError
from .losses import (
    holistic_embeddings,
    orthogonality_loss,
    private_loss,
    shared_loss,
    temporal_contrastive_loss,
    temporal_loss,
    total_loss,
)
from .metrics import (
    accuracy_macro_f1,
    ari,
    confusion_counts,
    correlated_accuracy,
    kmeans,
    knn_classify,
    nmi,
)
from .model import FactorizedModel
from .pipeline import CsvSchema, export_csv, ingest_csv
from .synthetic import generate, split
from .train import (
    batch_views,
    clean_features,
    finetune_linear,
    modality_shapes,
    per_modality_features,
    pretrain,
)

DATASET_MANIFEST = "manifest.json"
SPLIT_NAMES = ("train", "val", "test")


# -- dataset directory ------------------------------------------------------


def dataset_schema(synth_cfg) -> CsvSchema:
    mods = ["mod%d" % j for j in range(synth_cfg.n_modalities)]
    return CsvSchema(
        window_len=synth_cfg.window_len,
        sample_rate_hz=synth_cfg.sample_rate_hz,
        modality_channels={
            mod: ["%s_c%d" % (mod, c) for c in range(synth_cfg.n_channels)] for mod in mods
        },
    )


def write_dataset_dir(out_dir, cfg: RunConfig):
    """Generate, split, and persist the synthetic dataset. Byte-deterministic."""
    synth = cfg.data.synthetic
    dataset = generate(synth)
    splits = split(dataset, cfg.data.split_ratios, seed=synth.seed + 1)
    schema = dataset_schema(synth)
    os.makedirs(out_dir, exist_ok=True)
    for name in SPLIT_NAMES:
        export_csv(splits[name], os.path.join(out_dir, "%s.csv" % name), schema)
    manifest = {
        "schema": {
            "window_len": schema.window_len,
            "sample_rate_hz": schema.sample_rate_hz,
            "modality_channels": schema.modality_channels,
            "timestamp_column": schema.timestamp_column,
            "label_column": schema.label_column,
        },
        "n_classes": synth.n_classes,
        "sequence_length": synth.sequence_length,
        "info_mode": synth.info_mode,
        "generator": cfg.data.synthetic.__dict__.copy(),
    }
    atomic_write_text(os.path.join(out_dir, DATASET_MANIFEST), canonical_json(manifest) + "\n")
    return splits


def load_dataset_dir(data_dir):
    """Read the split CSVs back; returns (splits dict, manifest dict)."""
    manifest_path = os.path.join(data_dir, DATASET_MANIFEST)
    if not os.path.exists(manifest_path):
        raise IngestionError("no dataset manifest at %s" % manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    s = manifest["schema"]
    schema = CsvSchema(
        window_len=s["window_len"],
        sample_rate_hz=s["sample_rate_hz"],
        modality_channels=s["modality_channels"],
        timestamp_column=s["timestamp_column"],
        label_column=s["label_column"],
    )
    splits = {}
    seq_len = manifest.get("sequence_length")
    for name in SPLIT_NAMES:
        path = os.path.join(data_dir, "%s.csv" % name)
        if not os.path.exists(path):
            raise IngestionError("missing split file %s" % path)
        ds = ingest_csv(path, schema)
        if seq_len and ds.n_samples % seq_len == 0:
            # restore sequence boundaries lost by the flat CSV layout
            ds.segments = [seq_len] * (ds.n_samples // seq_len)
        splits[name] = ds
    return splits, manifest


# -- checkpoint round trips --------------------------------------------------


def save_pretrain_checkpoint(ckpt_dir, result, cfg: RunConfig, shapes):
    arrays = OrderedDict()
    for name, p in result.model.params.items():
        arrays["param/%s" % name] = p.data
    for name in result.model.params:
        arrays["adam_m/%s" % name] = result.opt.m[name]
    for name in result.model.params:
        arrays["adam_v/%s" % name] = result.opt.v[name]
    meta = {
        "kind": "pretrain",
        "config": cfg.to_dict(),
        "modality_shapes": {mod: list(shape) for mod, shape in shapes.items()},
        "epoch": result.epoch,
        "step": result.step,
        "rng": result.rng_state,
        "diverged": result.diverged,
    }
    save_checkpoint(ckpt_dir, arrays, meta)


def load_pretrain_checkpoint(ckpt_dir):
    """Returns (model, resume_state, cfg, meta)."""
    arrays, meta = load_checkpoint(ckpt_dir)
    if meta.get("kind") != "pretrain":
        raise UsageError("%s is not a pretraining checkpoint" % ckpt_dir)
    cfg = from_dict(meta["config"])
    shapes = {mod: tuple(s) for mod, s in meta["modality_shapes"].items()}
    model = FactorizedModel(shapes, cfg.encoder, seed=0)
    params = {}
    m = {}
    v = {}
    for name, arr in arrays.items():
        if name.startswith("param/"):
            params[name[len("param/") :]] = arr
        elif name.startswith("adam_m/"):
            m[name[len("adam_m/") :]] = arr
        elif name.startswith("adam_v/"):
            v[name[len("adam_v/") :]] = arr
    model.load_state_arrays(params)
    resume = {
        "params": params,
        "m": m,
        "v": v,
        "step": meta["step"],
        "epoch": meta["epoch"],
        "rng": meta["rng"],
    }
    return model, resume, cfg, meta


def run_pretrain(cfg: RunConfig, splits, out_dir, seed, resume_dir=None, stop_epoch=None):
    """Pretrain on the train split (labels stripped), with a KNN probe when
    labels exist, and persist checkpoint + metrics under out_dir."""
    from .checkpoint import JsonlWriter

    train = splits["train"]
    specs = cfg.pipeline.specs(train.modality_ids)
    shapes = modality_shapes(train, specs)

    probe_fn = None
    if (
        cfg.eval.eval_every > 0
        and train.labels is not None
        and splits.get("val") is not None
        and splits["val"].labels is not None
        and splits["val"].n_samples > 0
    ):
        probe_fn = make_knn_probe(cfg, train, splits["val"])

    resume = None
    if resume_dir is not None:
        _, resume, ckpt_cfg, _ = load_pretrain_checkpoint(resume_dir)
        cfg = ckpt_cfg

    os.makedirs(out_dir, exist_ok=True)
    metrics = JsonlWriter(os.path.join(out_dir, "metrics.jsonl"), append=resume is not None)
    result = pretrain(
        train.without_labels(),
        cfg,
        seed,
        probe_fn=probe_fn,
        metrics_fn=metrics,
        resume=resume,
        stop_epoch=stop_epoch,
    )
    save_pretrain_checkpoint(os.path.join(out_dir, "checkpoint"), result, cfg, shapes)
    atomic_write_text(
        os.path.join(out_dir, "config.json"),
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n",
    )
    return result


def make_knn_probe(cfg: RunConfig, train, val):
    """KNN convergence probe: fit on train-split features, score on val."""
    specs = cfg.pipeline.specs(train.modality_ids)
    include_private = cfg.loss.private_enabled
    train_labels = np.asarray(train.labels)
    val_labels = np.asarray(val.labels)
    k = cfg.eval.knn_k

    def probe(model):
        tf = clean_features(model, train, specs, include_private)
        vf = clean_features(model, val, specs, include_private)
        pred = knn_classify(tf, train_labels, vf, k=k)
        return float(np.mean(pred == val_labels))

    return probe


# -- evaluation --------------------------------------------------------------


def evaluate_model(model, cfg: RunConfig, splits, n_classes, label_ratio, seed):
    """Linear probe + KNN + clustering report on the test split."""
    train, test = splits["train"], splits["test"]
    if train.labels is None or test.labels is None:
        raise UsageError("evaluation needs labeled train and test splits")
    specs = cfg.pipeline.specs(train.modality_ids)
    include_private = cfg.loss.private_enabled

    seed_seq = np.random.SeedSequence(seed)
    finetune_seed, kmeans_seed = seed_seq.spawn(2)

    train_feats = clean_features(model, train, specs, include_private)
    test_feats = clean_features(model, test, specs, include_private)
    train_labels = np.asarray(train.labels)
    test_labels = np.asarray(test.labels)

    clf, fit_info = finetune_linear(
        train_feats, train_labels, n_classes, cfg, finetune_seed, label_ratio=label_ratio
    )
    predictions = clf.predict(test_feats)
    confusion = confusion_counts(test_labels, predictions, n_classes)
    accuracy, macro_f1 = accuracy_macro_f1(confusion)

    knn_pred = knn_classify(train_feats, train_labels, test_feats, k=cfg.eval.knn_k)
    knn_accuracy = float(np.mean(knn_pred == test_labels))

    source = cfg.eval.cluster_embeddings
    if source == "concat" and not include_private:
        source = "shared"
    per_mod = per_modality_features(model, test, specs, source=source)
    km_children = kmeans_seed.spawn(len(per_mod))
    ari_scores, nmi_scores, per_modality = [], [], {}
    for i, (mod, feats) in enumerate(sorted(per_mod.items())):
        assign = kmeans(
            feats,
            k=n_classes,
            seed=km_children[i],
            max_iter=cfg.eval.kmeans_max_iter,
            restarts=cfg.eval.kmeans_restarts,
        )
        a = ari(test_labels, assign.labels)
        n = nmi(test_labels, assign.labels)
        ari_scores.append(a)
        nmi_scores.append(n)
        per_modality[mod] = {"ari": a, "nmi": n, "inertia": assign.inertia}

    return {
        "accuracy": accuracy,
        "macro_f1": macro_f1,
        "knn_accuracy": knn_accuracy,
        "ari": float(np.mean(ari_scores)),
        "ari_std": float(np.std(ari_scores)),
        "nmi": float(np.mean(nmi_scores)),
        "nmi_std": float(np.std(nmi_scores)),
        "correlated_accuracy": correlated_accuracy(test_labels, predictions, n_classes),
        "label_ratio": label_ratio,
        "n_classes": n_classes,
        "n_train_labeled": fit_info["n_train"],
        "per_modality_clustering": per_modality,
    }


def ratio_sweep_report(model, cfg: RunConfig, splits, n_classes, seed):
    """Label-efficiency protocol: each ratio x protocol_seeds runs, mean/std."""
    train, test = splits["train"], splits["test"]
    specs = cfg.pipeline.specs(train.modality_ids)
    include_private = cfg.loss.private_enabled
    train_feats = clean_features(model, train, specs, include_private)
    test_feats = clean_features(model, test, specs, include_private)
    train_labels = np.asarray(train.labels)
    test_labels = np.asarray(test.labels)

    children = np.random.SeedSequence(seed).spawn(cfg.eval.protocol_seeds)
    out = {}
    for ratio in cfg.eval.label_ratios:
        accs, f1s = [], []
        for child in children:
            clf, _ = finetune_linear(
                train_feats, train_labels, n_classes, cfg, child, label_ratio=ratio
            )
            predictions = clf.predict(test_feats)
            confusion = confusion_counts(test_labels, predictions, n_classes)
            acc, f1 = accuracy_macro_f1(confusion)
            accs.append(acc)
            f1s.append(f1)
        out["%g" % ratio] = {
            "accuracy_mean": float(np.mean(accs)),
            "accuracy_std": float(np.std(accs)),
            "macro_f1_mean": float(np.mean(f1s)),
            "macro_f1_std": float(np.std(f1s)),
            "runs": len(accs),
        }
    return out


def format_report(report, title="evaluation report"):
    """Aligned plain-text rendering of a flat-ish report dict."""
    lines = [title]
    flat = {k: v for k, v in report.items() if isinstance(v, (int, float, str))}
    width = max(len(k) for k in flat) if flat else 0
    for key in sorted(flat):
        value = flat[key]
        if isinstance(value, float):
            lines.append("  %-*s  %.6f" % (width, key, value))
        else:
            lines.append("  %-*s  %s" % (width, key, value))
    return "\n".join(lines)


# -- sensitivity sweep --------------------------------------------------------

SWEEP_GRID = {
    "lambda_p": [0.5, 1.0, 2.0],
    "lambda_o": [1.0, 3.0, 5.0],
    "lambda_t": [0.5, 1.0, 2.0],
    "margin": [0.5, 1.0, 2.0],
}


def _probe_accuracy(cfg, splits, n_classes, seed):
    result = pretrain(splits["train"].without_labels(), cfg, seed)
    specs = cfg.pipeline.specs(splits["train"].modality_ids)
    include_private = cfg.loss.private_enabled
    train_feats = clean_features(result.model, splits["train"], specs, include_private)
    val_feats = clean_features(result.model, splits["val"], specs, include_private)
    clf, _ = finetune_linear(
        train_feats, np.asarray(splits["train"].labels), n_classes, cfg, seed
    )
    pred = clf.predict(val_feats)
    return float(np.mean(pred == np.asarray(splits["val"].labels)))


def sensitivity_sweep(cfg: RunConfig, splits, n_classes, seed, grid=None):
    """One-at-a-time loss-weight sensitivity grid; reports accuracy spread."""
    grid = grid or SWEEP_GRID
    baseline_acc = _probe_accuracy(cfg, splits, n_classes, seed)
    defaults = {
        "lambda_p": cfg.loss.lambda_p,
        "lambda_o": cfg.loss.lambda_o,
        "lambda_t": cfg.loss.lambda_t,
        "margin": cfg.loss.margin,
    }
    cells = []
    for param, values in grid.items():
        for value in values:
            if value == defaults[param]:
                acc = baseline_acc
            else:
                variant = cfg.copy()
                setattr(variant.loss, param, value)
                acc = _probe_accuracy(variant, splits, n_classes, seed)
            cells.append({"param": param, "value": value, "accuracy": acc})
    accs = [c["accuracy"] for c in cells] + [baseline_acc]
    return {
        "baseline": {"defaults": defaults, "accuracy": baseline_acc},
        "grid": cells,
        "accuracy_min": float(min(accs)),
        "accuracy_max": float(max(accs)),
        "accuracy_spread": float(max(accs) - min(accs)),
    }


# -- gradient-check harness ---------------------------------------------------


def _faulty_identity(t):
    """Identity forward with a deliberately wrong backward (x1.1)."""

    def bw(g, a=t):
        if a.requires_grad:
            a._accumulate(g * 1.1)

    return ad._node(t.data.copy(), (t,), bw)


def gradcheck_fixture(seed, n_modalities=2, n_batch_sequences=2, length=4):
    """Tiny random model + batch for composed-loss gradient checks."""
    if n_modalities < 2:
        raise UsageError("gradient check needs >= 2 modalities (got %d)" % n_modalities)
    from .model import EncoderConfig

    rng = np.random.default_rng(seed)
    shapes = {"mod%d" % j: (1, 2, 3) for j in range(n_modalities)}
    enc = EncoderConfig(interval_hidden=2, embed_dim=3, proj_hidden=6, proj_dim=3)
    model = FactorizedModel(shapes, enc, seed=rng.integers(2**31))
    b = n_batch_sequences * length
    views = {}
    for mod, (c, i, s) in shapes.items():
        views[mod] = tuple(
            rng.standard_normal((b, c, i, s)) + 1j * rng.standard_normal((b, c, i, s))
            for _ in range(2)
        )
    seq_of = np.repeat(np.arange(n_batch_sequences), length)
    return model, views, seq_of, length


GRADCHECK_LOSSES = ("shared", "private", "orthogonality", "temporal", "temporal_contrastive", "total")


def gradcheck_report(seed, eps=1e-5, n_modalities=2, loss_cfg=None, inject_fault=False,
                     n_batch_sequences=2, length=4, kink_gap=1e-4):
    """Max relative gradient error of every loss composed with encode+project.

    Instances whose forward pass comes within `kink_gap` of a relu/abs kink
    are deterministically reseeded (central differences cannot verify a
    subgradient at a kink). The check uses a moderate temperature: the
    gradient code is temperature-generic, and at very small tau the cubic
    term of the finite-difference oracle itself exceeds the tolerance.
    """
    from .losses import LossConfig

    loss_cfg = loss_cfg or LossConfig(tau=0.2)

    def forward(model, views, seq_of, name):
        shared, private = model.embed_views(views)
        shared_v0 = {m: pair[0] for m, pair in shared.items()}
        private_v0 = {m: pair[0] for m, pair in private.items()}
        if name == "shared":
            out = shared_loss(shared_v0, seq_of, loss_cfg.tau)
        elif name == "private":
            out = private_loss(private, loss_cfg.tau)
        elif name == "orthogonality":
            out = orthogonality_loss(shared_v0, private_v0)
        elif name == "temporal":
            out = temporal_loss(holistic_embeddings(shared, private), seq_of, length, loss_cfg.margin)
        elif name == "temporal_contrastive":
            out = temporal_contrastive_loss(holistic_embeddings(shared, private), seq_of, loss_cfg.tau)
        else:
            out, _ = total_loss(shared, private, seq_of, length, loss_cfg)
        return _faulty_identity(out) if inject_fault else out

    current = seed
    for _ in range(200):
        model, views, seq_of, length = gradcheck_fixture(
            current, n_modalities, n_batch_sequences=n_batch_sequences, length=length
        )
        with ad.watch_kinks() as watch:
            for name in GRADCHECK_LOSSES:
                forward(model, views, seq_of, name)
        if watch.min_gap > kink_gap:
            break
        current = current + 7919  # deterministic reseed away from the kink
    rows = []
    for name in GRADCHECK_LOSSES:
        err = ad.grad_check(
            lambda name=name: forward(model, views, seq_of, name), model.parameters(), eps=eps
        )
        rows.append({"loss": name, "max_rel_err": err, "ok": err < 1e-6, "seed": current})
    return rows
