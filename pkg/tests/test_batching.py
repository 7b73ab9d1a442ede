import numpy as np
import pytest

from factorssl.batching import build_sequences, epoch_batches, sample_batch
from factorssl.errors import ConfigurationError


def test_build_floor_partition():
    idx = build_sequences(10, 4)
    assert idx.sequences == [[0, 1, 2, 3], [4, 5, 6, 7]]


def test_build_exact_fit():
    idx = build_sequences(4, 4)
    assert idx.sequences == [[0, 1, 2, 3]]


def test_build_too_few_samples():
    with pytest.raises(ConfigurationError):
        build_sequences(3, 4)


def test_build_respects_segment_boundaries():
    idx = build_sequences(10, 2, segments=[5, 5])
    # sample 4 (tail of segment 0) is dropped; no sequence spans index 4/5
    assert [0, 1] in idx.sequences and [2, 3] in idx.sequences
    assert [5, 6] in idx.sequences and [7, 8] in idx.sequences
    for seq in idx.sequences:
        assert not (4 in seq)
        assert not (seq[0] < 5 <= seq[-1])


def test_sample_batch_table6_default_shape():
    idx = build_sequences(64 * 4, 4)
    batch = sample_batch(idx, 64, np.random.default_rng(0))
    assert batch.sample_refs.shape == (64, 4)
    assert batch.flat_refs.shape == (256,)  # 64 sequences x 4 = batch of 256


def test_sample_batch_distinct_and_whole_sequences():
    idx = build_sequences(40, 4)
    batch = sample_batch(idx, 5, np.random.default_rng(1))
    assert len(set(batch.sequence_ids)) == 5
    for row, sid in zip(batch.sample_refs, batch.sequence_ids):
        assert list(row) == idx.sequences[sid]


def test_sample_batch_deterministic():
    idx = build_sequences(40, 4)
    a = sample_batch(idx, 5, np.random.default_rng(7))
    b = sample_batch(idx, 5, np.random.default_rng(7))
    np.testing.assert_array_equal(a.sample_refs, b.sample_refs)


def test_sample_batch_whole_dataset_is_shuffle():
    idx = build_sequences(40, 4)
    batch = sample_batch(idx, 10, np.random.default_rng(3))
    assert sorted(batch.sequence_ids) == list(range(10))


def test_sample_batch_too_large():
    idx = build_sequences(8, 4)
    with pytest.raises(ConfigurationError):
        sample_batch(idx, 3, np.random.default_rng(0))


def test_epoch_covers_each_sequence_exactly_once():
    idx = build_sequences(44, 4)  # 11 sequences
    batches = epoch_batches(idx, 4, np.random.default_rng(5))
    seen = [sid for b in batches for sid in b.sequence_ids]
    assert sorted(seen) == list(range(11))
    # trailing single-sequence chunk is merged, so every batch has >= 2
    assert all(b.n_sequences >= 2 for b in batches)


def test_seq_of_partitions_batch_into_groups_of_length():
    idx = build_sequences(24, 4)
    batch = sample_batch(idx, 3, np.random.default_rng(2))
    groups = {}
    for slot, sid in enumerate(batch.seq_of):
        groups.setdefault(int(sid), []).append(slot)
    assert len(groups) == 3
    assert all(len(v) == 4 for v in groups.values())
