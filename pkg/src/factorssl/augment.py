"""Stochastic view generation: the augmentation catalog and selection policy.

Nine kinds operate on raw windows before the STFT, two on the complex
spectrogram after it. One kind is drawn per view; each modality is then
augmented with a configurable probability (or all together when
force_same_view is set). All randomness comes from an explicit generator,
so callers own determinism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, UsageError
from .pipeline import ModalitySample, RawWindow, stft


class AugmentationKind(Enum):
    SCALING = "scaling"
    PERMUTATION = "permutation"
    NEGATION = "negation"
    TIME_WARP = "time_warp"
    MAGNITUDE_WARP = "magnitude_warp"
    HORIZONTAL_FLIP = "horizontal_flip"
    JITTER = "jitter"
    CHANNEL_SHUFFLE = "channel_shuffle"
    TIME_MASKING = "time_masking"
    PHASE_SHIFT = "phase_shift"
    FREQUENCY_MASKING = "frequency_masking"


TIME_DOMAIN_KINDS = (
    AugmentationKind.SCALING,
    AugmentationKind.PERMUTATION,
    AugmentationKind.NEGATION,
    AugmentationKind.TIME_WARP,
    AugmentationKind.MAGNITUDE_WARP,
    AugmentationKind.HORIZONTAL_FLIP,
    AugmentationKind.JITTER,
    AugmentationKind.CHANNEL_SHUFFLE,
    AugmentationKind.TIME_MASKING,
)
FREQUENCY_DOMAIN_KINDS = (
    AugmentationKind.PHASE_SHIFT,
    AugmentationKind.FREQUENCY_MASKING,
)
ALL_KINDS = TIME_DOMAIN_KINDS + FREQUENCY_DOMAIN_KINDS


def is_time_domain(kind: AugmentationKind) -> bool:
    return kind in TIME_DOMAIN_KINDS


@dataclass
class AugmentationParams:
    """Per-kind strength parameters (mild, shape-preserving defaults)."""

    sigma_scale: float = 0.1
    sigma_jitter_rel: float = 0.05  # relative to the window's std
    sigma_mw: float = 0.2
    n_knots: int = 4
    rho_time: float = 0.125
    rho_freq: float = 0.1

    def validate(self):
        if self.n_knots < 2:
            raise ConfigurationError("n_knots must be >= 2")
        for name in ("sigma_scale", "sigma_jitter_rel", "sigma_mw"):
            if getattr(self, name) < 0:
                raise ConfigurationError("%s must be nonnegative" % name)
        for name in ("rho_time", "rho_freq"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ConfigurationError("%s must be in (0, 1]" % name)


@dataclass
class AugmentationPolicy:
    """How views are built: per-modality application probability and catalog."""

    apply_prob: float = 0.5
    catalog: tuple = ALL_KINDS
    force_same_view: bool = False
    params: AugmentationParams = None

    def __post_init__(self):
        if self.params is None:
            self.params = AugmentationParams()
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ConfigurationError("apply_prob must be in [0, 1], got %r" % self.apply_prob)


def pick_augmentation(rng, catalog=ALL_KINDS) -> AugmentationKind:
    """Uniform draw from the catalog."""
    if len(catalog) == 0:
        raise ConfigurationError("augmentation catalog is empty")
    return catalog[int(rng.integers(len(catalog)))]


def _require(cond, msg):
    if not cond:
        raise UsageError(msg)


def _time_warp(samples, params, rng):
    t = samples.shape[0]
    n_pts = params.n_knots + 2
    knot_x = np.linspace(0.0, t - 1.0, n_pts)
    knot_y = np.maximum(rng.normal(1.0, params.sigma_mw, n_pts), 0.1)
    speed = np.maximum(CubicSpline(knot_x, knot_y)(np.arange(t)), 0.05)
    cum = np.cumsum(speed)
    warp = (cum - cum[0]) * (t - 1.0) / (cum[-1] - cum[0])
    out = np.empty_like(samples)
    grid = np.arange(t, dtype=np.float64)
    for c in range(samples.shape[1]):
        out[:, c] = np.interp(warp, grid, samples[:, c])
    return out


def _magnitude_warp(samples, params, rng):
    t = samples.shape[0]
    knot_x = np.linspace(0.0, t - 1.0, params.n_knots)
    knot_y = rng.normal(1.0, params.sigma_mw, params.n_knots)
    curve = CubicSpline(knot_x, knot_y)(np.arange(t))
    return samples * curve[:, None]


def augment(kind: AugmentationKind, data, params: AugmentationParams, rng, interval_len=None):
    """Apply one augmentation; returns a new object of the input's type.

    Time-domain kinds take a RawWindow, frequency-domain kinds a
    ModalitySample. Permutation and TimeMasking need `interval_len` to know
    the interval boundaries.
    """
    if is_time_domain(kind):
        _require(isinstance(data, RawWindow), "%s needs a RawWindow, got %s" % (kind.value, type(data).__name__))
        x = data.samples
        if kind is AugmentationKind.SCALING:
            out = x * rng.normal(1.0, params.sigma_scale)
        elif kind is AugmentationKind.PERMUTATION:
            _require(interval_len is not None, "permutation needs interval_len")
            _require(x.shape[0] % interval_len == 0, "window length not a multiple of interval_len")
            n_iv = x.shape[0] // interval_len
            perm = rng.permutation(n_iv)
            out = x.reshape(n_iv, interval_len, -1)[perm].reshape(x.shape)
        elif kind is AugmentationKind.NEGATION:
            out = -x
        elif kind is AugmentationKind.TIME_WARP:
            out = _time_warp(x, params, rng)
        elif kind is AugmentationKind.MAGNITUDE_WARP:
            out = _magnitude_warp(x, params, rng)
        elif kind is AugmentationKind.HORIZONTAL_FLIP:
            out = x[::-1].copy()
        elif kind is AugmentationKind.JITTER:
            sigma = params.sigma_jitter_rel * x.std()
            out = x + rng.standard_normal(x.shape) * sigma
        elif kind is AugmentationKind.CHANNEL_SHUFFLE:
            out = x[:, rng.permutation(x.shape[1])]
        elif kind is AugmentationKind.TIME_MASKING:
            _require(interval_len is not None, "time_masking needs interval_len")
            _require(x.shape[0] % interval_len == 0, "window length not a multiple of interval_len")
            n_iv = x.shape[0] // interval_len
            n_mask = math.ceil(params.rho_time * n_iv)
            start = int(rng.integers(n_iv - n_mask + 1))
            out = x.copy()
            out[start * interval_len : (start + n_mask) * interval_len] = 0.0
        else:  # pragma: no cover
            raise UsageError("unhandled kind %r" % kind)
        return RawWindow(out, data.sample_rate_hz, data.modality_id)

    _require(isinstance(data, ModalitySample), "%s needs a ModalitySample, got %s" % (kind.value, type(data).__name__))
    spec = data.spectrum
    if kind is AugmentationKind.PHASE_SHIFT:
        phi = rng.uniform(-math.pi, math.pi)
        out = spec * np.exp(1j * phi)
    elif kind is AugmentationKind.FREQUENCY_MASKING:
        n_bins = spec.shape[2]
        n_mask = math.ceil(params.rho_freq * n_bins)
        start = int(rng.integers(n_bins - n_mask + 1))
        out = spec.copy()
        out[:, :, start : start + n_mask] = 0.0
    else:  # pragma: no cover
        raise UsageError("unhandled kind %r" % kind)
    return ModalitySample(out, data.modality_id, data.interval_len, data.overlap_ratio)


def make_two_views(windows, interval_specs, policy: AugmentationPolicy, rng):
    """Build the two augmented spectrogram views of one sample.

    windows: dict modality -> RawWindow; interval_specs: dict modality ->
    (interval_len, overlap_ratio). Per view, one kind is drawn, then each
    modality (sorted order) flips its own application coin — unless
    force_same_view is set, in which case a single coin covers all
    modalities. Returns (view0, view1, kinds) where each view maps
    modality -> ModalitySample.

    Draw order is fixed (kind, then per-modality coin and augmentation
    draws), so a seeded rng reproduces views bit-identically.
    """
    views = []
    kinds = []
    for _ in range(2):
        kind = pick_augmentation(rng, policy.catalog)
        kinds.append(kind)
        shared_coin = rng.random() < policy.apply_prob if policy.force_same_view else None
        view = {}
        for mod in sorted(windows):
            interval_len, overlap = interval_specs[mod]
            apply_here = shared_coin if policy.force_same_view else rng.random() < policy.apply_prob
            if not apply_here:
                view[mod] = stft(windows[mod], interval_len, overlap)
            elif is_time_domain(kind):
                warped = augment(kind, windows[mod], policy.params, rng, interval_len=interval_len)
                view[mod] = stft(warped, interval_len, overlap)
            else:
                view[mod] = augment(kind, stft(windows[mod], interval_len, overlap), policy.params, rng)
        views.append(view)
    return views[0], views[1], tuple(kinds)
