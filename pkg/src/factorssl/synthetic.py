"""Synthetic multimodal datasets with controllable shared/private/temporal structure.

Every sequence draws one class. Class information is carried by
DFT-bin-aligned sinusoids: a base frequency common to all modalities
(shared information), and per-modality frequencies that encode one digit
of the class index each (private information). The digit split matters:
each modality's private content is statistically independent of every
other modality's, so a cross-modal matching objective gains nothing from
class content — recovering the class requires combining the
modality-exclusive digits. A per-sequence random-walk amplitude gives
temporally neighboring samples a common context; the walk is the cue the
cross-modal matching task can always use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .pipeline import Dataset, RawWindow


@dataclass
class SynthConfig:
    n_sequences: int = 128
    sequence_length: int = 4
    n_modalities: int = 2
    n_channels: int = 1
    n_classes: int = 4
    window_len: int = 200
    interval_len: int = 20
    sample_rate_hz: float = 100.0
    info_mode: str = "mixed"  # shared_only | private_only | mixed
    drift: float = 0.25
    noise: float = 0.05
    amp_shared: float = 1.0
    amp_private: float = 1.0
    shared_bins: list = field(default_factory=list)  # empty -> defaults
    private_bins: list = field(default_factory=list)
    seed: int = 0

    def validate(self):
        for name in ("n_sequences", "sequence_length", "n_modalities", "n_channels",
                     "n_classes", "window_len", "interval_len"):
            if getattr(self, name) < 1:
                raise ConfigurationError("%s must be positive" % name)
        if self.info_mode not in ("shared_only", "private_only", "mixed"):
            raise ConfigurationError("unknown info_mode %r" % self.info_mode)
        if self.drift < 0 or self.noise < 0:
            raise ConfigurationError("drift and noise must be nonnegative")
        shared, private = self.resolved_bins()
        n_bins = self.interval_len // 2 + 1
        checks = [("shared", shared, self.n_classes),
                  ("private", private, self.n_modalities * self.digit_radix())]
        for bank, bins, needed in checks:
            if len(set(bins)) != len(bins):
                raise ConfigurationError("duplicate bins in %s bank: %s" % (bank, bins))
            if len(bins) != needed:
                raise ConfigurationError(
                    "%s bank needs %d bins, got %d" % (bank, needed, len(bins))
                )
            for b in bins:
                if not 1 <= b <= n_bins - 2:
                    raise ConfigurationError(
                        "bin %d in %s bank outside the usable range [1, %d]" % (b, bank, n_bins - 2)
                    )
        if set(shared) & set(private):
            raise ConfigurationError(
                "shared and private banks collide on bins %s" % sorted(set(shared) & set(private))
            )

    def digit_radix(self):
        """Smallest radix k with k^P >= n_classes: each modality carries one
        base-k digit of the class index."""
        k = 1
        while k**self.n_modalities < self.n_classes:
            k += 1
        return k

    def resolved_bins(self):
        shared = list(self.shared_bins) or list(range(1, self.n_classes + 1))
        k = self.digit_radix()
        private = list(self.private_bins) or list(
            range(self.n_classes + 1, self.n_classes + 1 + self.n_modalities * k)
        )
        return shared, private

    def private_bin_for(self, label, modality_index):
        """Frequency bin of the class digit carried by this modality."""
        _, private = self.resolved_bins()
        k = self.digit_radix()
        digit = (label // k**modality_index) % k
        return private[modality_index * k + digit]


def _modality_ids(n):
    return ["mod%d" % j for j in range(n)]


def generate(cfg: SynthConfig) -> Dataset:
    """Build the dataset; bit-identical for a fixed config."""
    cfg.validate()
    shared_bins, _ = cfg.resolved_bins()
    mods = _modality_ids(cfg.n_modalities)
    t_win, fs, il = cfg.window_len, cfg.sample_rate_hz, cfg.interval_len
    use_shared = cfg.info_mode in ("shared_only", "mixed")
    use_private = cfg.info_mode in ("private_only", "mixed")

    # balanced class assignment, shuffled deterministically
    master = np.random.default_rng(cfg.seed)
    reps = math.ceil(cfg.n_sequences / cfg.n_classes)
    classes = np.tile(np.arange(cfg.n_classes), reps)[: cfg.n_sequences]
    classes = classes[master.permutation(cfg.n_sequences)]

    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_sequences)
    windows = {mod: [] for mod in mods}
    labels = []
    for q in range(cfg.n_sequences):
        rng = np.random.default_rng(children[q])
        y = int(classes[q])
        phi = rng.uniform(0.0, 2.0 * math.pi)
        psi = {mod: rng.uniform(0.0, 2.0 * math.pi) for mod in mods}
        walk = np.cumsum(rng.standard_normal(cfg.sequence_length))
        f_shared = shared_bins[y] * fs / il
        for pos in range(cfg.sequence_length):
            amp = 1.0 + cfg.drift * walk[pos]
            t_global = (q * cfg.sequence_length + pos) * t_win + np.arange(t_win)
            u = t_global / fs
            base = np.zeros(t_win)
            if use_shared:
                base = cfg.amp_shared * np.sin(2.0 * math.pi * f_shared * u + phi)
            for j, mod in enumerate(mods):
                signal = base.copy()
                if use_private:
                    g = cfg.private_bin_for(y, j) * fs / il
                    signal = signal + cfg.amp_private * np.sin(2.0 * math.pi * g * u + psi[mod])
                samples = amp * signal[:, None] + cfg.noise * rng.standard_normal(
                    (t_win, cfg.n_channels)
                )
                windows[mod].append(RawWindow(samples, fs, mod))
            labels.append(y)

    return Dataset(
        modalities=windows,
        labels=labels,
        segments=[cfg.sequence_length] * cfg.n_sequences,
        sample_rate_hz=fs,
    )


def split(dataset: Dataset, ratios, seed, allow_empty=False):
    """Partition at sequence (segment) granularity into train/val/test.

    Counts use the largest-remainder method so they always sum to the
    number of segments. Selected segments keep their timeline order.
    """
    if len(ratios) != 3:
        raise ConfigurationError("expected three ratios, got %d" % len(ratios))
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError("ratios must sum to 1, got %s" % (list(ratios),))
    n_seg = len(dataset.segments)
    exact = [r * n_seg for r in ratios]
    counts = [int(math.floor(e)) for e in exact]
    remainders = sorted(range(3), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in remainders[: n_seg - sum(counts)]:
        counts[i] += 1
    if not allow_empty and min(counts) == 0:
        raise ConfigurationError(
            "split ratios %s leave an empty split for %d sequences" % (list(ratios), n_seg)
        )

    rng = np.random.default_rng(seed)
    order = rng.permutation(n_seg)
    picks = {
        "train": sorted(int(s) for s in order[: counts[0]]),
        "val": sorted(int(s) for s in order[counts[0] : counts[0] + counts[1]]),
        "test": sorted(int(s) for s in order[counts[0] + counts[1] :]),
    }

    seg_starts = np.concatenate([[0], np.cumsum(dataset.segments)])
    out = {}
    for name, segs in picks.items():
        sample_idx = []
        seg_lens = []
        for s in segs:
            start, end = int(seg_starts[s]), int(seg_starts[s + 1])
            sample_idx.extend(range(start, end))
            seg_lens.append(end - start)
        out[name] = Dataset(
            modalities={
                mod: [dataset.modalities[mod][i] for i in sample_idx]
                for mod in dataset.modalities
            },
            labels=None if dataset.labels is None else [dataset.labels[i] for i in sample_idx],
            segments=seg_lens if seg_lens else [0],
            sample_rate_hz=dataset.sample_rate_hz,
        )
    return out
