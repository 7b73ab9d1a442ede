"""Independent brute-force implementations used as test oracles.

Everything here is deliberately written as plain loops straight from the
loss definitions, sharing no code with the vectorized package paths.
"""

import numpy as np


def shared_loss_oracle(shared_v0, seq_of, tau):
    mods = sorted(shared_v0)
    b = len(seq_of)
    terms = []
    for j in mods:
        for j2 in mods:
            if j2 == j:
                continue
            for i in range(b):
                pos = np.dot(shared_v0[j][i], shared_v0[j2][i]) / tau
                denom = np.exp(pos)
                for i2 in range(b):
                    if seq_of[i2] != seq_of[i]:
                        denom += np.exp(np.dot(shared_v0[j][i], shared_v0[j2][i2]) / tau)
                terms.append(np.log(denom) - pos)
    return float(np.mean(terms))


def private_loss_oracle(private, tau):
    mods = sorted(private)
    b = private[mods[0]][0].shape[0]
    terms = []
    for mod in mods:
        for a in (0, 1):
            za = private[mod][a]
            zb = private[mod][1 - a]
            for i in range(b):
                pos = np.dot(za[i], zb[i]) / tau
                denom = np.exp(pos)
                for i2 in range(b):
                    if i2 != i:
                        denom += np.exp(np.dot(za[i], za[i2]) / tau)
                        denom += np.exp(np.dot(za[i], zb[i2]) / tau)
                terms.append(np.log(denom) - pos)
    return float(np.mean(terms))


def orthogonality_loss_oracle(shared_v0, private_v0):
    mods = sorted(shared_v0)
    b = shared_v0[mods[0]].shape[0]
    per_sample = []
    for i in range(b):
        acc = 0.0
        for j in mods:
            acc += abs(np.dot(shared_v0[j][i], private_v0[j][i]))
        for a in range(len(mods)):
            for b_idx in range(a + 1, len(mods)):
                acc += abs(np.dot(private_v0[mods[a]][i], private_v0[mods[b_idx]][i]))
        per_sample.append(acc)
    return float(np.mean(per_sample))


def dbar_oracle(z, seq_of, length):
    seq_ids = sorted(set(int(s) for s in seq_of))
    n_seq = len(seq_ids)
    d = np.zeros((len(z), len(z)))
    for i in range(len(z)):
        for i2 in range(len(z)):
            d[i, i2] = np.sqrt(np.sum((z[i] - z[i2]) ** 2))
    dbar = np.zeros((n_seq, n_seq))
    for si, s in enumerate(seq_ids):
        for ti, t in enumerate(seq_ids):
            members_s = [i for i in range(len(z)) if seq_of[i] == s]
            members_t = [i for i in range(len(z)) if seq_of[i] == t]
            if s == t:
                acc = sum(
                    d[i, i2] for i in members_s for i2 in members_t if i != i2
                )
                dbar[si, ti] = acc / (length * (length - 1))
            else:
                acc = sum(d[i, i2] for i in members_s for i2 in members_t)
                dbar[si, ti] = acc / length**2
    return d, dbar


def temporal_loss_oracle(z_per_mod, seq_of, length, margin):
    mods = sorted(z_per_mod)
    vals = []
    for mod in mods:
        _, dbar = dbar_oracle(z_per_mod[mod], seq_of, length)
        n_seq = dbar.shape[0]
        terms = []
        for s in range(n_seq):
            for t in range(n_seq):
                if s != t:
                    terms.append(max(dbar[s, s] - dbar[s, t] + margin, 0.0))
        vals.append(np.mean(terms))
    return float(np.mean(vals))


def temporal_contrastive_oracle(z_per_mod, seq_of, tau):
    mods = sorted(z_per_mod)
    b = len(seq_of)
    vals = []
    for mod in mods:
        z = z_per_mod[mod]
        terms = []
        for i in range(b):
            for p in range(b):
                if p == i or seq_of[p] != seq_of[i]:
                    continue
                pos = np.dot(z[i], z[p]) / tau
                denom = np.exp(pos)
                for i2 in range(b):
                    if seq_of[i2] != seq_of[i]:
                        denom += np.exp(np.dot(z[i], z[i2]) / tau)
                terms.append(np.log(denom) - pos)
        vals.append(np.mean(terms))
    return float(np.mean(vals))


def knn_oracle(train_feats, train_labels, test_feats, k):
    """O(n^2) nearest-neighbor vote with the package's tie rule."""
    preds = []
    for x in test_feats:
        dists = [float(np.sqrt(np.sum((x - t) ** 2))) for t in train_feats]
        order = sorted(range(len(dists)), key=lambda i: (dists[i], i))[:k]
        votes, sums = {}, {}
        for i in order:
            lab = int(train_labels[i])
            votes[lab] = votes.get(lab, 0) + 1
            sums[lab] = sums.get(lab, 0.0) + dists[i]
        best = max(votes.values())
        tied = sorted([lab for lab, v in votes.items() if v == best],
                      key=lambda lab: (sums[lab], lab))
        preds.append(tied[0])
    return np.array(preds)


def random_embedding_batch(rng, n_mods=2, n_seq=3, length=4, dim=5, unit=True):
    """Random normalized embeddings in the layout the losses consume."""
    b = n_seq * length
    seq_of = np.repeat(np.arange(n_seq), length)
    shared = {}
    private = {}
    for j in range(n_mods):
        pairs_s, pairs_p = [], []
        for _ in range(2):
            s = rng.standard_normal((b, dim))
            p = rng.standard_normal((b, dim))
            if unit:
                s = s / np.linalg.norm(s, axis=1, keepdims=True)
                p = p / np.linalg.norm(p, axis=1, keepdims=True)
            pairs_s.append(s)
            pairs_p.append(p)
        shared["mod%d" % j] = pairs_s
        private["mod%d" % j] = pairs_p
    return shared, private, seq_of
