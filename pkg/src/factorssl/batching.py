"""Temporal sequences fixed at initialization, and batch assembly over them.

Sequences are consecutive non-overlapping runs of `length` samples in
source order, never spanning a run boundary; membership does not change
afterwards. Batches draw whole sequences without replacement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass
class SequenceIndex:
    """Immutable sample-index groups, each exactly `length` long."""

    sequences: list
    length: int

    @property
    def n_sequences(self):
        return len(self.sequences)


@dataclass
class SequenceBatch:
    """B_seq sequences of L sample indices plus (optionally) their views.

    `views[modality]` is a pair of complex arrays [B, C, I, S], one per
    augmented view, aligned with the flattened sample_refs order.
    """

    sample_refs: np.ndarray  # [B_seq, L]
    seq_of: np.ndarray  # [B_seq * L], group id per flat slot
    sequence_ids: list
    views: dict = field(default_factory=dict)

    @property
    def n_sequences(self):
        return self.sample_refs.shape[0]

    @property
    def length(self):
        return self.sample_refs.shape[1]

    @property
    def flat_refs(self):
        return self.sample_refs.reshape(-1)


def build_sequences(n_samples: int, length: int, segments=None) -> SequenceIndex:
    """Partition the timeline into runs of `length` consecutive samples.

    Trailing remainders (per segment) are dropped. `segments` lists the
    contiguous-run lengths of the source data; None means one run.
    """
    if length < 1:
        raise ConfigurationError("sequence length must be positive, got %r" % length)
    if n_samples < length:
        raise ConfigurationError(
            "need at least %d samples to form one sequence, got %d" % (length, n_samples)
        )
    if segments is None:
        segments = [n_samples]
    elif sum(segments) != n_samples:
        raise ConfigurationError("segments sum to %d, expected %d" % (sum(segments), n_samples))

    sequences = []
    offset = 0
    for seg in segments:
        for s in range(seg // length):
            start = offset + s * length
            sequences.append(list(range(start, start + length)))
        offset += seg
    if not sequences:
        raise ConfigurationError("no segment is long enough for a sequence of %d" % length)
    return SequenceIndex(sequences=sequences, length=length)


def _make_batch(index: SequenceIndex, chosen):
    refs = np.array([index.sequences[s] for s in chosen], dtype=np.int64)
    seq_of = np.repeat(np.arange(len(chosen)), index.length)
    return SequenceBatch(sample_refs=refs, seq_of=seq_of, sequence_ids=list(chosen))


def sample_batch(index: SequenceIndex, n_batch_sequences: int, rng) -> SequenceBatch:
    """Draw `n_batch_sequences` distinct sequences uniformly without replacement."""
    if n_batch_sequences < 1 or n_batch_sequences > index.n_sequences:
        raise ConfigurationError(
            "batch of %d sequences requested from an index of %d"
            % (n_batch_sequences, index.n_sequences)
        )
    chosen = rng.choice(index.n_sequences, size=n_batch_sequences, replace=False)
    return _make_batch(index, [int(c) for c in chosen])


def epoch_batches(index: SequenceIndex, n_batch_sequences: int, rng):
    """Shuffle all sequences and chunk them so each appears exactly once.

    A trailing chunk of a single sequence is merged into the previous batch
    (losses need at least two sequences per batch).
    """
    if n_batch_sequences < 2:
        raise ConfigurationError("batch_sequences must be >= 2")
    order = [int(s) for s in rng.permutation(index.n_sequences)]
    chunks = [order[i : i + n_batch_sequences] for i in range(0, len(order), n_batch_sequences)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2].extend(chunks.pop())
    return [_make_batch(index, chunk) for chunk in chunks]
