"""Checkpoint and metrics persistence.

A checkpoint is a directory holding `manifest.json` (format version,
tensor table, run metadata including the config snapshot and rng states)
and `payload.bin` (the raw little-endian arrays, concatenated in manifest
order). Serialization is canonical, so identical state produces identical
bytes. All file writes go through write-temp-then-rename.
"""

from __future__ import annotations

import json
import os
from collections import OrderedDict

import numpy as np

from .errors import IngestionError

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
PAYLOAD_NAME = "payload.bin"

_DTYPES = {"float64": "<f8", "float32": "<f4"}


def atomic_write_bytes(path, data: bytes):
    tmp = "%s.tmp.%d" % (path, os.getpid())
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_checkpoint(ckpt_dir, arrays, meta):
    """Persist named arrays plus JSON-serializable metadata.

    `arrays` maps name -> float array; names must be unique (enforced by
    the dict) and the payload layout follows the iteration order.
    """
    os.makedirs(ckpt_dir, exist_ok=True)
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = "float32" if arr.dtype == np.float32 else "float64"
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": dtype,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format_version": FORMAT_VERSION, "tensors": entries, "meta": meta}
    atomic_write_bytes(os.path.join(ckpt_dir, PAYLOAD_NAME), b"".join(chunks))
    atomic_write_text(os.path.join(ckpt_dir, MANIFEST_NAME), canonical_json(manifest) + "\n")


def load_checkpoint(ckpt_dir):
    """Read a checkpoint; returns (arrays OrderedDict, meta dict).

    Rejects overlapping or out-of-bounds tensor entries and payload size
    mismatches with a descriptive error.
    """
    manifest_path = os.path.join(ckpt_dir, MANIFEST_NAME)
    payload_path = os.path.join(ckpt_dir, PAYLOAD_NAME)
    if not os.path.exists(manifest_path):
        raise IngestionError("no checkpoint manifest at %s" % manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise IngestionError(
            "unsupported checkpoint format %r" % manifest.get("format_version")
        )
    with open(payload_path, "rb") as fh:
        payload = fh.read()

    arrays = OrderedDict()
    cursor = 0
    for entry in manifest["tensors"]:
        name = entry["name"]
        if name in arrays:
            raise IngestionError("duplicate tensor %r in manifest" % name)
        if entry["offset"] != cursor:
            raise IngestionError(
                "tensor %r at offset %d, expected %d (overlap or gap)"
                % (name, entry["offset"], cursor)
            )
        np_dtype = _DTYPES.get(entry["dtype"])
        if np_dtype is None:
            raise IngestionError("tensor %r has unsupported dtype %r" % (name, entry["dtype"]))
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        expected_bytes = count * np.dtype(np_dtype).itemsize
        if entry["nbytes"] != expected_bytes:
            raise IngestionError(
                "tensor %r declares %d bytes but shape %s implies %d"
                % (name, entry["nbytes"], entry["shape"], expected_bytes)
            )
        end = cursor + entry["nbytes"]
        if end > len(payload):
            raise IngestionError(
                "tensor %r extends to byte %d but payload has %d" % (name, end, len(payload))
            )
        arrays[name] = np.frombuffer(payload[cursor:end], dtype=np_dtype).reshape(
            entry["shape"]
        ).copy()
        cursor = end
    if cursor != len(payload):
        raise IngestionError(
            "payload has %d trailing bytes beyond the manifest" % (len(payload) - cursor)
        )
    return arrays, manifest["meta"]


class JsonlWriter:
    """Append-only JSON-lines metrics log with canonical serialization."""

    def __init__(self, path, append=False):
        self.path = path
        if not append and os.path.exists(path):
            os.remove(path)

    def __call__(self, record):
        with open(self.path, "a") as fh:
            fh.write(canonical_json(record) + "\n")


def read_jsonl(path):
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
