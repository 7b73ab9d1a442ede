"""Pretraining loop, linear-probe finetuning, and the optimizer underneath.

Pretraining: AdamW with decoupled weight decay under a per-epoch cosine
schedule; every epoch shuffles the fixed sequences, builds two augmented
views per sample, and takes one step per batch. The loop never sees
labels — probes are injected as opaque callables. Finetuning trains a
softmax linear layer on frozen concatenated embeddings with Adam under a
step schedule.
"""

from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .batching import build_sequences, epoch_batches
from .errors import ConfigurationError, TrainingError, UsageError
from .losses import total_loss
from .model import FactorizedModel
from .pipeline import stft
from .augment import make_two_views


@dataclass
class AdamState:
    """First/second moments per parameter plus the shared step count."""

    m: OrderedDict
    v: OrderedDict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, named_params, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        return cls(
            m=OrderedDict((n, np.zeros_like(p.data)) for n, p in named_params.items()),
            v=OrderedDict((n, np.zeros_like(p.data)) for n, p in named_params.items()),
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            weight_decay=weight_decay,
        )


def adamw_step(named_params, state: AdamState, lr):
    """One decoupled-weight-decay Adam update over all parameters."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in named_params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient in %r at step %d" % (name, t))
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        update = (state.m[name] / bc1) / (np.sqrt(state.v[name] / bc2) + state.eps)
        p.data = p.data - lr * update - lr * state.weight_decay * p.data


def cosine_lr(epoch, max_lr, min_lr, total_epochs):
    """Half-cosine from max_lr (epoch 0) down to min_lr (epoch = total)."""
    if not 0 <= epoch <= total_epochs:
        raise ConfigurationError("epoch %d outside [0, %d]" % (epoch, total_epochs))
    import math

    return min_lr + 0.5 * (max_lr - min_lr) * (1.0 + math.cos(math.pi * epoch / total_epochs))


def step_lr(epoch, start_lr, decay_factor, period_epochs):
    return start_lr * decay_factor ** (epoch // period_epochs)


def modality_shapes(dataset, specs):
    """Spectrogram dims (C, I, S) per modality implied by the pipeline config."""
    shapes = {}
    for mod in dataset.modality_ids:
        win = dataset.modalities[mod][0]
        interval_len, overlap = specs[mod]
        sample = stft(win, interval_len, overlap)
        shapes[mod] = sample.shape
    return shapes


def batch_views(dataset, batch, specs, policy, rng):
    """Two augmented spectrogram stacks per modality for one batch."""
    per_mod = {mod: ([], []) for mod in dataset.modality_ids}
    for ref in batch.flat_refs:
        windows = {mod: dataset.modalities[mod][ref] for mod in dataset.modality_ids}
        v0, v1, _ = make_two_views(windows, specs, policy, rng)
        for mod in per_mod:
            per_mod[mod][0].append(v0[mod].spectrum)
            per_mod[mod][1].append(v1[mod].spectrum)
    return {mod: (np.stack(pair[0]), np.stack(pair[1])) for mod, pair in per_mod.items()}


def clean_features(model, dataset, specs, include_private=True):
    """Frozen sample features: concatenated per-modality projected embeddings
    of the un-augmented spectrograms. [N, F] float array."""
    blocks = []
    for mod in dataset.modality_ids:
        interval_len, overlap = specs[mod]
        spectra = np.stack(
            [stft(w, interval_len, overlap).spectrum for w in dataset.modalities[mod]]
        )
        _, shared, private = model.encode_project(mod, spectra)
        blocks.append(shared.data)
        if include_private:
            blocks.append(private.data)
    return np.concatenate(blocks, axis=1)


def per_modality_features(model, dataset, specs, source="concat"):
    """Per-modality embedding matrices for clustering (source: concat/shared/private)."""
    out = {}
    for mod in dataset.modality_ids:
        interval_len, overlap = specs[mod]
        spectra = np.stack(
            [stft(w, interval_len, overlap).spectrum for w in dataset.modalities[mod]]
        )
        _, shared, private = model.encode_project(mod, spectra)
        if source == "shared":
            out[mod] = shared.data
        elif source == "private":
            out[mod] = private.data
        else:
            out[mod] = np.concatenate([shared.data, private.data], axis=1)
    return out


@dataclass
class PretrainResult:
    model: FactorizedModel
    opt: AdamState
    epoch: int
    step: int
    rng_state: dict
    diverged: bool = False
    divergence_error: str = ""
    history: list = field(default_factory=list)


def _snapshot(model, opt, epoch, shuffle_rng, aug_rng):
    return {
        "params": {n: p.data.copy() for n, p in model.params.items()},
        "m": {n: a.copy() for n, a in opt.m.items()},
        "v": {n: a.copy() for n, a in opt.v.items()},
        "step": opt.step,
        "epoch": epoch,
        "shuffle": shuffle_rng.bit_generator.state,
        "augment": aug_rng.bit_generator.state,
    }


def _restore(model, opt, snap, shuffle_rng, aug_rng):
    for n, p in model.params.items():
        p.data = snap["params"][n].copy()
    for n in opt.m:
        opt.m[n] = snap["m"][n].copy()
        opt.v[n] = snap["v"][n].copy()
    opt.step = snap["step"]
    shuffle_rng.bit_generator.state = snap["shuffle"]
    aug_rng.bit_generator.state = snap["augment"]


def pretrain(dataset, cfg, seed, probe_fn=None, metrics_fn=None, resume=None, stop_epoch=None):
    """Self-supervised pretraining; fully reproducible from (dataset, cfg, seed).

    `dataset` needs no labels. `probe_fn(model) -> float` is called every
    eval_every epochs when provided. `resume` is a state dict from a saved
    checkpoint; training continues bit-identically to where an
    uninterrupted run would be. On divergence the last epoch-boundary state
    is restored and the result is flagged instead of raised, so the caller
    can still persist the last good checkpoint.
    """
    cfg.validate()
    if len(dataset.modality_ids) < 2:
        raise UsageError("pretraining needs >= 2 modalities for the cross-modal task")
    specs = cfg.pipeline.specs(dataset.modality_ids)
    shapes = modality_shapes(dataset, specs)
    policy = cfg.augmentation.policy()
    index = build_sequences(dataset.n_samples, cfg.data.sequence_length, segments=dataset.segments)
    if index.n_sequences < 2:
        raise UsageError("pretraining needs >= 2 sequences")

    seed_seq = np.random.SeedSequence(seed)
    init_child, shuffle_child, aug_child = seed_seq.spawn(3)
    model = FactorizedModel(shapes, cfg.encoder, seed=init_child)
    opt = AdamState.for_params(
        model.params,
        beta1=cfg.optimizer.beta1,
        beta2=cfg.optimizer.beta2,
        eps=cfg.optimizer.eps,
        weight_decay=cfg.optimizer.weight_decay,
    )
    shuffle_rng = np.random.default_rng(shuffle_child)
    aug_rng = np.random.default_rng(aug_child)
    start_epoch = 0

    if resume is not None:
        model.load_state_arrays(resume["params"])
        for n in opt.m:
            opt.m[n] = resume["m"][n].astype(np.float64)
            opt.v[n] = resume["v"][n].astype(np.float64)
        opt.step = int(resume["step"])
        start_epoch = int(resume["epoch"])
        shuffle_rng.bit_generator.state = resume["rng"]["shuffle"]
        aug_rng.bit_generator.state = resume["rng"]["augment"]

    total_epochs = cfg.schedule.pretrain.total_epochs
    end_epoch = total_epochs if stop_epoch is None else min(stop_epoch, total_epochs)
    batch_seqs = min(cfg.data.batch_sequences, index.n_sequences)

    result = PretrainResult(
        model=model,
        opt=opt,
        epoch=start_epoch,
        step=opt.step,
        rng_state={
            "shuffle": shuffle_rng.bit_generator.state,
            "augment": aug_rng.bit_generator.state,
        },
    )
    last_good = _snapshot(model, opt, start_epoch, shuffle_rng, aug_rng)

    for epoch in range(start_epoch, end_epoch):
        lr = cfg.schedule.pretrain.lr_at(epoch)
        try:
            for batch in epoch_batches(index, batch_seqs, shuffle_rng):
                views = batch_views(dataset, batch, specs, policy, aug_rng)
                shared, private = model.embed_views(views)
                loss, breakdown = total_loss(
                    shared, private, batch.seq_of, index.length, cfg.loss
                )
                if not np.isfinite(breakdown.total):
                    raise TrainingError(
                        "non-finite loss %r at epoch %d" % (breakdown.total, epoch)
                    )
                model.zero_grad()
                loss.backward()
                adamw_step(model.params, opt, lr)
                record = {"epoch": epoch, "step": opt.step, "lr": lr}
                record.update(breakdown.as_dict())
                if metrics_fn is not None:
                    metrics_fn(record)
        except TrainingError as exc:
            _restore(model, opt, last_good, shuffle_rng, aug_rng)
            result.diverged = True
            result.divergence_error = str(exc)
            result.epoch = last_good["epoch"]
            result.step = opt.step
            result.rng_state = {
                "shuffle": shuffle_rng.bit_generator.state,
                "augment": aug_rng.bit_generator.state,
            }
            return result

        last_good = _snapshot(model, opt, epoch + 1, shuffle_rng, aug_rng)
        if probe_fn is not None and cfg.eval.eval_every > 0 and (epoch + 1) % cfg.eval.eval_every == 0:
            acc = float(probe_fn(model))
            result.history.append({"epoch": epoch + 1, "probe_knn_accuracy": acc})
            if metrics_fn is not None:
                metrics_fn({"epoch": epoch + 1, "probe_knn_accuracy": acc})

    result.epoch = end_epoch
    result.step = opt.step
    result.rng_state = {
        "shuffle": shuffle_rng.bit_generator.state,
        "augment": aug_rng.bit_generator.state,
    }
    return result


def stratified_label_subsample(labels, ratio, rng):
    """Per-class subsample of round(ratio * count) indices.

    A class whose share rounds to zero is dropped from training with a
    warning (it stays in evaluation).
    """
    labels = np.asarray(labels)
    if not 0 < ratio <= 1:
        raise ConfigurationError("label ratio must be in (0, 1], got %r" % ratio)
    chosen = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        n_keep = int(round(ratio * len(idx)))
        if n_keep == 0:
            warnings.warn(
                "class %d has no labels at ratio %g; dropped from training" % (cls, ratio)
            )
            continue
        chosen.extend(rng.choice(idx, size=n_keep, replace=False).tolist())
    return np.array(sorted(chosen), dtype=np.int64)


@dataclass
class LinearClassifier:
    weights: np.ndarray  # [F, n_classes]
    bias: np.ndarray  # [n_classes]

    def predict(self, feats):
        return np.argmax(feats @ self.weights + self.bias, axis=1)


def _softmax_ce(logits, onehot):
    lse = ad.logsumexp(logits, axis=1)
    picked = (logits * onehot).sum(axis=1)
    return (lse - picked).mean()


def finetune_linear(features, labels, n_classes, cfg, seed, label_ratio=1.0):
    """Train a softmax linear layer on frozen features.

    Adam under the step schedule (Table-6 style defaults: decay 0.2 every
    50 of 200 epochs), full-batch. Subsampling is stratified by class with
    its own seeded rng. Returns (LinearClassifier, info dict).
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    keep = stratified_label_subsample(labels, label_ratio, rng)
    x = features[keep]
    y = labels[keep]

    w = ad.Tensor(np.zeros((features.shape[1], n_classes)), requires_grad=True, name="head.w")
    b = ad.Tensor(np.zeros(n_classes), requires_grad=True, name="head.b")
    named = OrderedDict([("head.w", w), ("head.b", b)])
    opt = AdamState.for_params(named, weight_decay=cfg.optimizer.finetune_weight_decay)
    onehot = np.zeros((len(y), n_classes))
    onehot[np.arange(len(y)), y] = 1.0
    xt = ad.Tensor(x)

    sched = cfg.schedule.finetune
    final_loss = None
    for epoch in range(sched.total_epochs):
        lr = sched.lr_at(epoch)
        logits = xt @ w + b
        loss = _softmax_ce(logits, onehot)
        w.zero_grad()
        b.zero_grad()
        loss.backward()
        adamw_step(named, opt, lr)
        final_loss = float(loss.data)

    clf = LinearClassifier(weights=w.data.copy(), bias=b.data.copy())
    train_acc = float(np.mean(clf.predict(x) == y))
    return clf, {
        "n_train": int(len(y)),
        "label_ratio": label_ratio,
        "final_loss": final_loss,
        "train_accuracy": train_acc,
    }
