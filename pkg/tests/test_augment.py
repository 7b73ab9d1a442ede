import math

import numpy as np
import pytest

from factorssl.augment import (
    ALL_KINDS,
    FREQUENCY_DOMAIN_KINDS,
    TIME_DOMAIN_KINDS,
    AugmentationKind,
    AugmentationParams,
    AugmentationPolicy,
    augment,
    make_two_views,
    pick_augmentation,
)
from factorssl.errors import ConfigurationError, UsageError
from factorssl.pipeline import RawWindow, stft


def make_window(seed=0, t=40, c=2):
    rng = np.random.default_rng(seed)
    return RawWindow(rng.standard_normal((t, c)), 100.0, "mod0")


def test_catalog_has_eleven_kinds_with_domains():
    assert len(ALL_KINDS) == 11
    assert len(TIME_DOMAIN_KINDS) == 9
    assert len(FREQUENCY_DOMAIN_KINDS) == 2


def test_pick_deterministic_given_seed():
    a = [pick_augmentation(np.random.default_rng(7)) for _ in range(2)]
    b = [pick_augmentation(np.random.default_rng(7)) for _ in range(2)]
    assert a == b


def test_pick_uniform_within_three_sigma():
    rng = np.random.default_rng(123)
    counts = {k: 0 for k in ALL_KINDS}
    n = 11000
    for _ in range(n):
        counts[pick_augmentation(rng)] += 1
    p = 1.0 / 11
    sigma = math.sqrt(n * p * (1 - p))
    for kind, count in counts.items():
        assert abs(count - n * p) <= 3 * sigma, kind


def test_pick_empty_catalog_rejected():
    with pytest.raises(ConfigurationError):
        pick_augmentation(np.random.default_rng(0), catalog=())


@pytest.mark.parametrize("kind", [AugmentationKind.NEGATION, AugmentationKind.HORIZONTAL_FLIP])
def test_involutions(kind):
    win = make_window()
    params = AugmentationParams()
    rng = np.random.default_rng(0)
    once = augment(kind, win, params, rng)
    twice = augment(kind, once, params, rng)
    np.testing.assert_array_equal(twice.samples, win.samples)


def test_phase_shift_preserves_magnitudes():
    win = make_window()
    sample = stft(win, 8, 0.0)
    out = augment(AugmentationKind.PHASE_SHIFT, sample, AugmentationParams(), np.random.default_rng(1))
    np.testing.assert_allclose(np.abs(out.spectrum), np.abs(sample.spectrum), atol=1e-12)


@pytest.mark.parametrize("kind", [AugmentationKind.PERMUTATION, AugmentationKind.CHANNEL_SHUFFLE])
def test_value_multiset_preserved(kind):
    win = make_window(t=40, c=3)
    out = augment(kind, win, AugmentationParams(), np.random.default_rng(2), interval_len=8)
    np.testing.assert_array_equal(
        np.sort(out.samples.ravel()), np.sort(win.samples.ravel())
    )


def test_time_masking_zeroes_contiguous_intervals():
    win = make_window(t=80, c=2)
    params = AugmentationParams(rho_time=0.3)
    out = augment(AugmentationKind.TIME_MASKING, win, params, np.random.default_rng(3), interval_len=8)
    n_iv = 10
    n_masked = math.ceil(0.3 * n_iv)
    per_iv = out.samples.reshape(n_iv, 8, 2)
    zeroed = [i for i in range(n_iv) if np.all(per_iv[i] == 0.0)]
    assert len(zeroed) == n_masked
    assert zeroed == list(range(zeroed[0], zeroed[0] + n_masked))
    keep = np.ones(n_iv, dtype=bool)
    keep[zeroed] = False
    np.testing.assert_array_equal(
        per_iv[keep], win.samples.reshape(n_iv, 8, 2)[keep]
    )


def test_frequency_masking_zeroes_contiguous_bins():
    win = make_window(t=40)
    sample = stft(win, 20, 0.0)
    params = AugmentationParams(rho_freq=0.25)
    out = augment(AugmentationKind.FREQUENCY_MASKING, sample, params, np.random.default_rng(4))
    n_bins = sample.spectrum.shape[2]
    n_masked = math.ceil(0.25 * n_bins)
    zeroed = [k for k in range(n_bins) if np.all(out.spectrum[:, :, k] == 0.0)]
    assert len(zeroed) == n_masked
    assert zeroed == list(range(zeroed[0], zeroed[0] + n_masked))
    keep = np.ones(n_bins, dtype=bool)
    keep[zeroed] = False
    np.testing.assert_array_equal(out.spectrum[:, :, keep], sample.spectrum[:, :, keep])


@pytest.mark.parametrize("kind", TIME_DOMAIN_KINDS)
def test_time_domain_kinds_preserve_shape(kind):
    win = make_window(t=40, c=3)
    out = augment(kind, win, AugmentationParams(), np.random.default_rng(5), interval_len=8)
    assert out.samples.shape == win.samples.shape
    assert np.all(np.isfinite(out.samples))


@pytest.mark.parametrize("kind", FREQUENCY_DOMAIN_KINDS)
def test_frequency_domain_kinds_preserve_shape(kind):
    sample = stft(make_window(t=40, c=3), 8, 0.0)
    out = augment(kind, sample, AugmentationParams(), np.random.default_rng(6))
    assert out.spectrum.shape == sample.spectrum.shape


def test_domain_mismatch_rejected():
    win = make_window()
    sample = stft(win, 8, 0.0)
    with pytest.raises(UsageError):
        augment(AugmentationKind.PHASE_SHIFT, win, AugmentationParams(), np.random.default_rng(0))
    with pytest.raises(UsageError):
        augment(AugmentationKind.JITTER, sample, AugmentationParams(), np.random.default_rng(0))


def test_scaling_is_single_scalar_per_window():
    win = make_window()
    out = augment(AugmentationKind.SCALING, win, AugmentationParams(), np.random.default_rng(7))
    ratio = out.samples / win.samples
    np.testing.assert_allclose(ratio, ratio.ravel()[0], rtol=1e-12)


def two_mod_windows(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "mod0": RawWindow(rng.standard_normal((40, 1)), 100.0, "mod0"),
        "mod1": RawWindow(rng.standard_normal((40, 2)), 100.0, "mod1"),
    }


SPECS = {"mod0": (8, 0.0), "mod1": (8, 0.0)}


def test_two_views_noop_policy_gives_clean_spectrograms():
    windows = two_mod_windows()
    policy = AugmentationPolicy(apply_prob=0.0)
    v0, v1, kinds = make_two_views(windows, SPECS, policy, np.random.default_rng(0))
    for mod in windows:
        clean = stft(windows[mod], *SPECS[mod]).spectrum
        np.testing.assert_array_equal(v0[mod].spectrum, clean)
        np.testing.assert_array_equal(v1[mod].spectrum, clean)
    assert len(kinds) == 2


def test_two_views_negation_both_views_equal():
    windows = two_mod_windows()
    policy = AugmentationPolicy(apply_prob=1.0, catalog=(AugmentationKind.NEGATION,))
    v0, v1, kinds = make_two_views(windows, SPECS, policy, np.random.default_rng(0))
    assert kinds == (AugmentationKind.NEGATION, AugmentationKind.NEGATION)
    for mod in windows:
        np.testing.assert_allclose(v0[mod].spectrum, v1[mod].spectrum, atol=1e-12)
        clean = stft(windows[mod], *SPECS[mod]).spectrum
        np.testing.assert_allclose(v0[mod].spectrum, -clean, atol=1e-12)


def test_two_views_deterministic_given_seed():
    windows = two_mod_windows()
    policy = AugmentationPolicy(apply_prob=0.5)
    a0, a1, ka = make_two_views(windows, SPECS, policy, np.random.default_rng(99))
    b0, b1, kb = make_two_views(windows, SPECS, policy, np.random.default_rng(99))
    assert ka == kb
    for mod in windows:
        np.testing.assert_array_equal(a0[mod].spectrum, b0[mod].spectrum)
        np.testing.assert_array_equal(a1[mod].spectrum, b1[mod].spectrum)


def test_force_same_view_applies_to_all_modalities_together():
    windows = two_mod_windows()
    policy = AugmentationPolicy(
        apply_prob=1.0, catalog=(AugmentationKind.NEGATION,), force_same_view=True
    )
    v0, _, _ = make_two_views(windows, SPECS, policy, np.random.default_rng(0))
    for mod in windows:
        clean = stft(windows[mod], *SPECS[mod]).spectrum
        np.testing.assert_allclose(v0[mod].spectrum, -clean, atol=1e-12)
