import numpy as np
import pytest

from factorssl.errors import ConfigurationError
from factorssl.pipeline import stft
from factorssl.synthetic import SynthConfig, generate, split


def small_cfg(**kw):
    base = dict(
        n_sequences=8,
        sequence_length=4,
        n_modalities=2,
        n_channels=1,
        n_classes=4,
        window_len=200,
        interval_len=20,
        sample_rate_hz=100.0,
        noise=0.05,
        drift=0.25,
        seed=0,
    )
    base.update(kw)
    return SynthConfig(**base)


def spectrum_bins(ds, mod, idx, interval_len=20):
    spec = stft(ds.modalities[mod][idx], interval_len, 0.0).spectrum
    return np.abs(spec[0]).mean(axis=0)  # average magnitude per bin over intervals


def test_deterministic_generation():
    a = generate(small_cfg())
    b = generate(small_cfg())
    assert a.labels == b.labels
    for mod in a.modalities:
        for wa, wb in zip(a.modalities[mod], b.modalities[mod]):
            np.testing.assert_array_equal(wa.samples, wb.samples)


def test_shared_only_peaks_at_class_bin_in_all_modalities():
    cfg = small_cfg(noise=0.0, info_mode="shared_only")
    ds = generate(cfg)
    shared_bins, _ = cfg.resolved_bins()
    for i, label in enumerate(ds.labels):
        for mod in ds.modalities:
            bins = spectrum_bins(ds, mod, i)
            assert bins.argmax() == shared_bins[label]


def test_private_only_frequencies_absent_from_other_modality():
    cfg = small_cfg(noise=0.0, info_mode="private_only")
    ds = generate(cfg)
    for i, label in enumerate(ds.labels):
        for j, mod in enumerate(sorted(ds.modalities)):
            own_bin = cfg.private_bin_for(label, j)
            bins = spectrum_bins(ds, mod, i)
            assert bins.argmax() == own_bin
            for j2 in range(cfg.n_modalities):
                if j2 == j:
                    continue
                other_bin = cfg.private_bin_for(label, j2)
                assert bins[other_bin] < 1e-9 * bins[own_bin]


def test_private_digit_split_is_cross_modally_independent():
    # modality bins are disjoint and each carries one base-k digit
    cfg = small_cfg()
    assert cfg.digit_radix() == 2
    bins_by_mod = [
        {cfg.private_bin_for(y, j) for y in range(cfg.n_classes)} for j in range(2)
    ]
    assert bins_by_mod[0].isdisjoint(bins_by_mod[1])
    # joint digits recover the class
    seen = {
        (cfg.private_bin_for(y, 0), cfg.private_bin_for(y, 1)) for y in range(cfg.n_classes)
    }
    assert len(seen) == cfg.n_classes


def test_labels_constant_within_sequence_and_balanced():
    cfg = small_cfg(n_sequences=16)
    ds = generate(cfg)
    labels = np.asarray(ds.labels).reshape(16, 4)
    assert (labels == labels[:, :1]).all()
    counts = np.bincount(labels[:, 0], minlength=4)
    assert counts.tolist() == [4, 4, 4, 4]


def test_drift_makes_intra_sequence_spectra_closer():
    cfg = small_cfg(noise=0.0, n_sequences=12)
    ds = generate(cfg)
    feats = []
    for i in range(ds.n_samples):
        row = []
        for mod in sorted(ds.modalities):
            spec = stft(ds.modalities[mod][i], 20, 0.0).spectrum
            row.append(np.abs(spec).ravel())
        feats.append(np.concatenate(row))
    feats = np.asarray(feats)
    seq_of = np.repeat(np.arange(12), 4)
    d = np.sqrt(((feats[:, None, :] - feats[None, :, :]) ** 2).sum(-1))
    same = seq_of[:, None] == seq_of[None, :]
    off_diag = ~np.eye(len(feats), dtype=bool)
    intra = d[same & off_diag].mean()
    inter = d[~same].mean()
    assert intra < inter


def test_frequency_collision_rejected():
    with pytest.raises(ConfigurationError):
        small_cfg(shared_bins=[1, 2, 3, 4], private_bins=[4, 5, 6, 7]).validate()


def test_bin_out_of_range_rejected():
    with pytest.raises(ConfigurationError):
        small_cfg(private_bins=[5, 6, 7, 10]).validate()  # bin 10 is Nyquist for S=11


def test_split_counts_16_2_2():
    ds = generate(small_cfg(n_sequences=20))
    parts = split(ds, (0.8, 0.1, 0.1), seed=0)
    assert len(parts["train"].segments) == 16
    assert len(parts["val"].segments) == 2
    assert len(parts["test"].segments) == 2


def test_split_disjoint_and_covering():
    ds = generate(small_cfg(n_sequences=10))
    parts = split(ds, (0.8, 0.1, 0.1), seed=1)
    seen = []
    for name in ("train", "val", "test"):
        part = parts[name]
        for mod in part.modalities:
            assert len(part.modalities[mod]) == part.n_samples
        seen.extend(tuple(w.samples[:3, 0]) for w in part.modalities["mod0"])
    assert len(seen) == ds.n_samples
    assert len(set(seen)) == ds.n_samples


def test_split_empty_rejected_unless_allowed():
    ds = generate(small_cfg())
    with pytest.raises(ConfigurationError):
        split(ds, (1.0, 0.0, 0.0), seed=0)
    parts = split(ds, (1.0, 0.0, 0.0), seed=0, allow_empty=True)
    assert parts["train"].n_samples == ds.n_samples
    assert parts["val"].n_samples == 0


def test_split_bad_ratios():
    ds = generate(small_cfg())
    with pytest.raises(ConfigurationError):
        split(ds, (0.5, 0.2, 0.2), seed=0)


def test_sequence_labels_preserved_through_split():
    ds = generate(small_cfg(n_sequences=10))
    parts = split(ds, (0.8, 0.1, 0.1), seed=2)
    labels = np.asarray(parts["train"].labels).reshape(-1, 4)
    assert (labels == labels[:, :1]).all()
