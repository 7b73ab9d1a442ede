"""Raw-window segmentation, per-interval STFT, and the CSV dataset format.

A sample is one fixed-length multichannel window per modality. Windows are
cut into (possibly overlapping) intervals and each interval goes through a
one-sided DFT with a rectangular window, producing the complex [C, I, S]
spectrogram the encoders consume.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IngestionError, InputError


@dataclass
class RawWindow:
    """One pre-STFT window: samples [T, C], one modality."""

    samples: np.ndarray
    sample_rate_hz: float
    modality_id: str

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise InputError(
                "window samples must be [T, C] with T > 0, got shape %s" % (self.samples.shape,)
            )
        if not np.all(np.isfinite(self.samples)):
            raise InputError("window for modality %r contains NaN/Inf" % self.modality_id)
        if self.sample_rate_hz <= 0:
            raise InputError("sample_rate_hz must be positive")

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_channels(self):
        return self.samples.shape[1]


@dataclass
class ModalitySample:
    """Complex spectrogram [C, I, S] of one window of one modality."""

    spectrum: np.ndarray
    modality_id: str
    interval_len: int
    overlap_ratio: float

    def __post_init__(self):
        self.spectrum = np.asarray(self.spectrum, dtype=np.complex128)
        if self.spectrum.ndim != 3:
            raise InputError("spectrum must be [C, I, S], got shape %s" % (self.spectrum.shape,))
        if self.spectrum.shape[2] != self.interval_len // 2 + 1:
            raise InputError(
                "spectrum has %d bins, expected interval_len/2 + 1 = %d"
                % (self.spectrum.shape[2], self.interval_len // 2 + 1)
            )
        if not np.all(np.isfinite(self.spectrum)):
            raise InputError("spectrum for modality %r contains NaN/Inf" % self.modality_id)

    @property
    def shape(self):
        return self.spectrum.shape


def hop_length(interval_len: int, overlap_ratio: float) -> int:
    """Integer hop between interval starts; rejects non-integer hops."""
    if interval_len < 2 or interval_len % 2 != 0:
        raise ConfigurationError("interval_len must be a positive even integer, got %r" % interval_len)
    if not 0.0 <= overlap_ratio < 1.0:
        raise ConfigurationError("overlap_ratio must be in [0, 1), got %r" % overlap_ratio)
    hop = interval_len * (1.0 - overlap_ratio)
    if abs(hop - round(hop)) > 1e-9 or round(hop) < 1:
        raise ConfigurationError(
            "interval_len=%d with overlap=%g gives non-integer hop %g"
            % (interval_len, overlap_ratio, hop)
        )
    return int(round(hop))


def segment_window(raw: RawWindow, interval_len: int, overlap_ratio: float):
    """Cut a window into I interval matrices [C, interval_len].

    Intervals tile the window at the configured hop; at overlap 0 they
    partition it exactly.
    """
    hop = hop_length(interval_len, overlap_ratio)
    t = raw.n_samples
    if interval_len > t:
        raise InputError("interval_len %d exceeds window length %d" % (interval_len, t))
    if (t - interval_len) % hop != 0 or t % hop != 0:
        raise ConfigurationError(
            "window length %d is not tiled by interval_len=%d, hop=%d" % (t, interval_len, hop)
        )
    n_intervals = 1 + (t - interval_len) // hop
    return [raw.samples[i * hop : i * hop + interval_len].T.copy() for i in range(n_intervals)]


def stft(raw: RawWindow, interval_len: int, overlap_ratio: float) -> ModalitySample:
    """Per-interval one-sided DFT (rectangular window, no taper)."""
    hop = hop_length(interval_len, overlap_ratio)
    t = raw.n_samples
    if interval_len > t:
        raise InputError("interval_len %d exceeds window length %d" % (interval_len, t))
    if (t - interval_len) % hop != 0 or t % hop != 0:
        raise ConfigurationError(
            "window length %d is not tiled by interval_len=%d, hop=%d" % (t, interval_len, hop)
        )
    # [I, C, interval_len] strided view, no per-interval copies
    stacked = np.lib.stride_tricks.sliding_window_view(raw.samples, interval_len, axis=0)[::hop]
    spectrum = np.fft.rfft(stacked, axis=-1).transpose(1, 0, 2)  # [C, I, S]
    return ModalitySample(
        spectrum=spectrum,
        modality_id=raw.modality_id,
        interval_len=interval_len,
        overlap_ratio=overlap_ratio,
    )


def istft_intervals(sample: ModalitySample) -> np.ndarray:
    """Invert each interval's DFT; returns [C, I, interval_len]."""
    return np.fft.irfft(sample.spectrum, n=sample.interval_len, axis=-1)


@dataclass
class Dataset:
    """Aligned per-modality windows plus optional labels and run boundaries.

    `segments` lists the lengths of contiguous runs (a run is a stretch of
    samples with no time gap); sequences built later never span a run
    boundary.
    """

    modalities: dict
    labels: list | None
    segments: list
    sample_rate_hz: float

    def __post_init__(self):
        lengths = {m: len(w) for m, w in self.modalities.items()}
        if len(set(lengths.values())) > 1:
            raise InputError("modalities have mismatched sample counts: %s" % lengths)
        n = self.n_samples
        if self.labels is not None and len(self.labels) != n:
            raise InputError("got %d labels for %d samples" % (len(self.labels), n))
        if sum(self.segments) != n:
            raise InputError("segments sum to %d, expected %d" % (sum(self.segments), n))

    @property
    def n_samples(self):
        return len(next(iter(self.modalities.values())))

    @property
    def modality_ids(self):
        return sorted(self.modalities.keys())

    def without_labels(self):
        return Dataset(
            modalities=self.modalities,
            labels=None,
            segments=self.segments,
            sample_rate_hz=self.sample_rate_hz,
        )


@dataclass
class CsvSchema:
    """Column layout of the on-disk dataset format.

    One row per timestep: a timestamp column, one column per
    (modality, channel), and an optional integer label column. Rows are
    grouped into consecutive non-overlapping windows of `window_len` rows;
    a partial trailing window is dropped.
    """

    window_len: int
    sample_rate_hz: float
    modality_channels: dict
    timestamp_column: str = "timestamp"
    label_column: str | None = "label"
    column_order: list = field(default_factory=list)

    def data_columns(self):
        cols = []
        for mod in sorted(self.modality_channels):
            cols.extend(self.modality_channels[mod])
        return cols


def _parse_cell(text, row_idx, column):
    try:
        return float(text)
    except ValueError:
        raise IngestionError("row %d, column %r: non-numeric cell %r" % (row_idx, column, text))


def ingest_csv(path, schema: CsvSchema) -> Dataset:
    """Read a CSV file into aligned per-modality RawWindows.

    Each window is labeled by the label of its first row. The whole file is
    one contiguous run.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("%s: empty file" % path)
        col_idx = {name: i for i, name in enumerate(header)}
        needed = [schema.timestamp_column] + schema.data_columns()
        if schema.label_column is not None:
            needed.append(schema.label_column)
        for name in needed:
            if name not in col_idx:
                raise IngestionError("%s: missing column %r" % (path, name))

        timestamps = []
        columns = {name: [] for name in schema.data_columns()}
        labels_raw = []
        for row_idx, row in enumerate(reader, start=1):
            ts = _parse_cell(row[col_idx[schema.timestamp_column]], row_idx, schema.timestamp_column)
            if timestamps and ts <= timestamps[-1]:
                raise IngestionError(
                    "row %d, column %r: non-monotone timestamp %g after %g"
                    % (row_idx, schema.timestamp_column, ts, timestamps[-1])
                )
            timestamps.append(ts)
            for name in columns:
                columns[name].append(_parse_cell(row[col_idx[name]], row_idx, name))
            if schema.label_column is not None:
                val = _parse_cell(row[col_idx[schema.label_column]], row_idx, schema.label_column)
                if val != int(val):
                    raise IngestionError(
                        "row %d, column %r: non-integer label %r" % (row_idx, schema.label_column, val)
                    )
                labels_raw.append(int(val))

    n_rows = len(timestamps)
    n_windows = n_rows // schema.window_len
    if n_windows == 0:
        raise IngestionError(
            "%s: %d rows is less than one window of %d" % (path, n_rows, schema.window_len)
        )

    modalities = {}
    for mod in sorted(schema.modality_channels):
        chans = schema.modality_channels[mod]
        mat = np.column_stack([np.asarray(columns[c], dtype=np.float64) for c in chans])
        windows = []
        for w in range(n_windows):
            block = mat[w * schema.window_len : (w + 1) * schema.window_len]
            windows.append(RawWindow(block, schema.sample_rate_hz, mod))
        modalities[mod] = windows

    labels = None
    if schema.label_column is not None:
        labels = [labels_raw[w * schema.window_len] for w in range(n_windows)]

    return Dataset(
        modalities=modalities,
        labels=labels,
        segments=[n_windows],
        sample_rate_hz=schema.sample_rate_hz,
    )


def export_csv(dataset: Dataset, path, schema: CsvSchema):
    """Write a Dataset in the format ingest_csv reads.

    Floats are written with repr, so a round trip reproduces the sample
    values bit-exactly.
    """
    mods = sorted(schema.modality_channels)
    for mod in mods:
        if mod not in dataset.modalities:
            raise ConfigurationError("schema names modality %r absent from dataset" % mod)
        win = dataset.modalities[mod][0]
        if win.n_samples != schema.window_len:
            raise ConfigurationError(
                "modality %r windows have %d rows, schema expects %d"
                % (mod, win.n_samples, schema.window_len)
            )
    if schema.label_column is not None and dataset.labels is None:
        raise ConfigurationError("schema has a label column but the dataset is unlabeled")
    n = dataset.n_samples
    t_win = schema.window_len
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [schema.timestamp_column]
        for mod in mods:
            header.extend(schema.modality_channels[mod])
        if schema.label_column is not None:
            header.append(schema.label_column)
        writer.writerow(header)
        for s in range(n):
            for t in range(t_win):
                global_t = s * t_win + t
                row = [repr(global_t / schema.sample_rate_hz)]
                for mod in mods:
                    win = dataset.modalities[mod][s]
                    for c in range(win.n_channels):
                        row.append(repr(float(win.samples[t, c])))
                if schema.label_column is not None:
                    row.append(str(int(dataset.labels[s])))
                writer.writerow(row)
