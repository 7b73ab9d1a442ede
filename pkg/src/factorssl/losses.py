"""The four pretraining losses and their weighted combination.

All losses operate on L2-normalized projected embeddings, so every inner
product is a cosine similarity. Reductions are means, keeping the loss
weights batch-size independent. Conventions (who is a negative for whom,
which view anchors, diagonal skipping in the sequence-distance
aggregation) are documented per function and mirrored by brute-force
oracles in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, UsageError

_NEG_INF = -1e30


@dataclass
class LossConfig:
    tau: float = 0.07
    lambda_p: float = 1.0
    lambda_o: float = 3.0
    lambda_t: float = 1.0
    margin: float = 1.0
    no_private: bool = False
    no_orth: bool = False
    no_temp: bool = False
    temporal_contrastive: bool = False
    temporal_plugin_only: bool = False

    def validate(self):
        if self.tau <= 0:
            raise ConfigurationError("tau must be positive, got %r" % self.tau)
        if self.margin < 0:
            raise ConfigurationError("margin must be nonnegative, got %r" % self.margin)
        if self.temporal_contrastive and self.no_temp:
            raise ConfigurationError("temporal_contrastive and no_temp are mutually exclusive")
        if self.temporal_plugin_only and (
            self.no_temp or self.temporal_contrastive or self.no_private or self.no_orth
        ):
            raise ConfigurationError("temporal_plugin_only cannot be combined with other variant flags")

    # no_private removes the private space entirely, which also removes
    # everything the orthogonality term would touch.
    @property
    def private_enabled(self):
        return not (self.no_private or self.temporal_plugin_only)

    @property
    def orth_enabled(self):
        return not (self.no_orth or self.no_private or self.temporal_plugin_only)

    @property
    def temporal_enabled(self):
        return not self.no_temp


@dataclass
class LossBreakdown:
    shared: float
    private: float
    orthogonal: float
    temporal: float
    total: float
    weights: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "loss_shared": self.shared,
            "loss_private": self.private,
            "loss_orthogonal": self.orthogonal,
            "loss_temporal": self.temporal,
            "loss_total": self.total,
        }


def _masked_logsumexp_rows(sim: Tensor, allowed: np.ndarray) -> Tensor:
    """Row-wise logsumexp over entries where allowed == 1.

    Masking is additive (-1e30 on excluded entries): the forward value is
    identical and the softmax gradient at excluded entries is exactly 0, at
    the cost of one add instead of two multiplies.
    """
    return ad.logsumexp(sim + np.where(allowed > 0, 0.0, _NEG_INF), axis=1)


def _check_multi_sequence(seq_of):
    if len(np.unique(seq_of)) < 2:
        raise UsageError("need at least 2 sequences in the batch")


def shared_loss(shared_v0, seq_of, tau) -> Tensor:
    """Cross-modal InfoNCE over the shared space (view 0 anchors).

    For each ordered modality pair (j, j') and anchor sample i, the
    positive is the same sample's modality-j' embedding; negatives are the
    modality-j' embeddings of samples from *other* sequences. The positive
    term appears in the denominator.
    """
    mods = sorted(shared_v0)
    if len(mods) < 2:
        raise UsageError("shared loss needs at least 2 modalities")
    seq_of = np.asarray(seq_of)
    _check_multi_sequence(seq_of)
    b = seq_of.shape[0]
    eye = np.eye(b)
    other_seq = (seq_of[:, None] != seq_of[None, :]).astype(np.float64)
    allowed = np.minimum(other_seq + eye, 1.0)

    terms = []
    inv_tau = 1.0 / tau
    for j in mods:
        for j2 in mods:
            if j2 == j:
                continue
            sim = (shared_v0[j] @ shared_v0[j2].T) * inv_tau
            pos = (sim * eye).sum(axis=1)
            terms.append(_masked_logsumexp_rows(sim, allowed) - pos)
    return ad.concat(terms).mean()


def private_loss(private, tau) -> Tensor:
    """Transformation-consistency NT-Xent over the private space.

    private: modality -> [Tensor_v0, Tensor_v1], each [B, K_proj]. For an
    anchor (i, view a), the positive is (i, other view); negatives are the
    other B-1 same-view embeddings and the B-1 non-matching other-view
    embeddings (2B-1 denominator terms including the positive). Anchors
    from both views and all modalities are averaged.
    """
    mods = sorted(private)
    b = private[mods[0]][0].data.shape[0]
    if b < 2:
        raise UsageError("private loss needs at least 2 samples per batch")
    eye = np.eye(b)
    same_view_allowed = 1.0 - eye
    cross_allowed = np.ones((b, b))
    allowed = np.concatenate([same_view_allowed, cross_allowed], axis=1)

    inv_tau = 1.0 / tau
    terms = []
    for mod in mods:
        for a in (0, 1):
            za, zb = private[mod][a], private[mod][1 - a]
            sim_same = (za @ za.T) * inv_tau
            sim_cross = (za @ zb.T) * inv_tau
            pos = (sim_cross * eye).sum(axis=1)
            lse = _masked_logsumexp_rows(ad.concat([sim_same, sim_cross], axis=1), allowed)
            terms.append(lse - pos)
    return ad.concat(terms).mean()


def orthogonality_loss(shared_v0, private_v0) -> Tensor:
    """Mean absolute cosine between shared/private of each modality and
    between private spaces of modality pairs.

    The absolute value makes genuine orthogonality (not anti-alignment)
    the minimizer.
    """
    mods = sorted(shared_v0)
    acc = None
    for j in mods:
        dot = (shared_v0[j] * private_v0[j]).sum(axis=1).abs()
        acc = dot if acc is None else acc + dot
    for a in range(len(mods)):
        for b_idx in range(a + 1, len(mods)):
            dot = (private_v0[mods[a]] * private_v0[mods[b_idx]]).sum(axis=1).abs()
            acc = acc + dot
    return acc.mean()


def sequence_mean_distances(z: Tensor, seq_of, length):
    """Pairwise Euclidean distances plus their sequence-level means.

    Intra-sequence means skip the zero diagonal (divisor L*(L-1));
    inter-sequence means divide by L^2. Returns (D [B, B], D_bar [S, S]).
    """
    if length < 2:
        raise UsageError("sequence-mean distances need L >= 2")
    seq_of = np.asarray(seq_of)
    seq_ids = np.unique(seq_of)
    membership = (seq_ids[:, None] == seq_of[None, :]).astype(np.float64)
    dists = ad.pairwise_distances(z)
    raw = membership @ dists @ membership.T
    n_seq = len(seq_ids)
    scale = np.full((n_seq, n_seq), 1.0 / length**2)
    np.fill_diagonal(scale, 1.0 / (length * (length - 1)))
    return dists, raw * scale


def temporal_loss_from_dbar(d_bar: Tensor, margin) -> Tensor:
    """Hinge on intra vs inter sequence mean distances, over ordered pairs."""
    n_seq = d_bar.data.shape[0]
    if n_seq < 2:
        raise UsageError("temporal loss needs at least 2 sequences")
    eye = np.eye(n_seq)
    intra = (d_bar * eye).sum(axis=1)
    hinge = (intra.reshape(n_seq, 1) - d_bar + margin).relu() * (1.0 - eye)
    return hinge.sum() * (1.0 / (n_seq * (n_seq - 1)))


def temporal_loss(z_per_mod, seq_of, length, margin) -> Tensor:
    """Temporal structural constraint on holistic [shared; private] vectors,
    computed per modality and averaged."""
    mods = sorted(z_per_mod)
    total = None
    for mod in mods:
        _, d_bar = sequence_mean_distances(z_per_mod[mod], seq_of, length)
        term = temporal_loss_from_dbar(d_bar, margin)
        total = term if total is None else total + term
    return total * (1.0 / len(mods))


def temporal_contrastive_loss(z_per_mod, seq_of, tau) -> Tensor:
    """Ablation variant: NT-Xent with intra-sequence pairs as positives and
    samples from other sequences as negatives, averaged over modalities."""
    seq_of = np.asarray(seq_of)
    _check_multi_sequence(seq_of)
    b = seq_of.shape[0]
    same_seq = (seq_of[:, None] == seq_of[None, :]).astype(np.float64)
    pos_mask = same_seq - np.eye(b)
    if pos_mask.sum() == 0:
        raise UsageError("temporal contrastive loss needs L >= 2")
    neg_mask = 1.0 - same_seq

    inv_tau = 1.0 / tau
    mods = sorted(z_per_mod)
    total = None
    for mod in mods:
        z = z_per_mod[mod]
        sim = (z @ z.T) * inv_tau
        neg_lse = _masked_logsumexp_rows(sim, neg_mask).reshape(b, 1)
        # log(exp(sim) + exp(neg_lse)) elementwise, with the usual shift
        shift = np.maximum(sim.data, neg_lse.data)
        denom = (((sim - shift).exp() + (neg_lse - shift).exp()).log() + shift)
        per_pair = (denom - sim) * pos_mask
        term = per_pair.sum() * (1.0 / pos_mask.sum())
        total = term if total is None else total + term
    return total * (1.0 / len(mods))


def holistic_embeddings(shared, private):
    """Concatenate [h_shared; h_private] per modality (view 0)."""
    return {mod: ad.concat([shared[mod][0], private[mod][0]], axis=1) for mod in shared}


def total_loss(shared, private, seq_of, length, cfg: LossConfig):
    """Weighted combination per the configured variant.

    shared/private: modality -> [Tensor_v0, Tensor_v1]. Returns
    (total Tensor, LossBreakdown). Disabled terms are reported as 0 and
    excluded from the sum; temporal_plugin_only computes
    shared + lambda_t * temporal.
    """
    cfg.validate()
    shared_v0 = {mod: pair[0] for mod, pair in shared.items()}
    private_v0 = {mod: pair[0] for mod, pair in private.items()}

    l_shared = shared_loss(shared_v0, seq_of, cfg.tau)
    total = l_shared

    l_private = None
    if cfg.private_enabled:
        l_private = private_loss(private, cfg.tau)
        total = total + cfg.lambda_p * l_private

    l_orth = None
    if cfg.orth_enabled:
        l_orth = orthogonality_loss(shared_v0, private_v0)
        total = total + cfg.lambda_o * l_orth

    l_temporal = None
    if cfg.temporal_enabled:
        z_per_mod = holistic_embeddings(shared, private)
        if cfg.temporal_contrastive:
            l_temporal = temporal_contrastive_loss(z_per_mod, seq_of, cfg.tau)
        else:
            l_temporal = temporal_loss(z_per_mod, seq_of, length, cfg.margin)
        total = total + cfg.lambda_t * l_temporal

    breakdown = LossBreakdown(
        shared=float(l_shared.data),
        private=0.0 if l_private is None else float(l_private.data),
        orthogonal=0.0 if l_orth is None else float(l_orth.data),
        temporal=0.0 if l_temporal is None else float(l_temporal.data),
        total=float(total.data),
        weights={
            "tau": cfg.tau,
            "lambda_p": cfg.lambda_p,
            "lambda_o": cfg.lambda_o,
            "lambda_t": cfg.lambda_t,
            "margin": cfg.margin,
        },
    )
    return total, breakdown
