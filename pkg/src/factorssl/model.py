"""Per-modality encoder and the dual projector over the autodiff substrate.

The reference encoder keeps the interval-then-aggregate shape: the complex
spectrogram is flattened to 2C real channels per interval, an affine map
with shared weights plus GELU runs per interval, intervals are aggregated
(mean or last), and a final affine produces the K-dim embedding. Two
independent two-layer ReLU heads then project into the L2-normalized
shared and private spaces.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, UsageError


@dataclass
class EncoderConfig:
    interval_hidden: int = 64
    embed_dim: int = 128  # K
    proj_hidden: int = 128
    proj_dim: int = 64  # K_proj, equal for the shared and private heads
    aggregate: str = "mean"  # or "last"
    dtype: str = "float64"

    def validate(self):
        for name in ("interval_hidden", "embed_dim", "proj_hidden", "proj_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError("%s must be positive" % name)
        if self.aggregate not in ("mean", "last"):
            raise ConfigurationError("aggregate must be 'mean' or 'last', got %r" % self.aggregate)
        if self.dtype not in ("float64", "float32"):
            raise ConfigurationError("dtype must be 'float64' or 'float32', got %r" % self.dtype)


def flatten_complex(spectra, dtype=np.float64):
    """Complex [B, C, I, S] (or [C, I, S]) -> real [B, I, 2*C*S].

    Real and imaginary parts become separate channels, keeping the phase
    information the frequency-domain augmentations act on.
    """
    arr = np.asarray(spectra)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.ndim != 4:
        raise UsageError("expected spectra of rank 3 or 4, got shape %s" % (arr.shape,))
    b, c, i, s = arr.shape
    parts = np.concatenate([arr.real, arr.imag], axis=1)  # [B, 2C, I, S]
    out = parts.transpose(0, 2, 1, 3).reshape(b, i, 2 * c * s).astype(dtype)
    return out[0] if single else out


def _xavier(rng, fan_in, fan_out, dtype):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype)


class FactorizedModel:
    """All encoders and projector heads of one pretraining run."""

    def __init__(self, modality_shapes, config: EncoderConfig, seed):
        config.validate()
        self.config = config
        self.modality_shapes = dict(modality_shapes)
        self.dtype = np.float64 if config.dtype == "float64" else np.float32
        self.params = OrderedDict()
        rng = np.random.default_rng(seed)
        h, k, ph, kp = config.interval_hidden, config.embed_dim, config.proj_hidden, config.proj_dim
        for mod in sorted(self.modality_shapes):
            c, i, s = self.modality_shapes[mod]
            in_dim = 2 * c * s
            self._add("enc.%s.w1" % mod, _xavier(rng, in_dim, h, self.dtype))
            self._add("enc.%s.b1" % mod, np.zeros(h, dtype=self.dtype))
            self._add("enc.%s.w2" % mod, _xavier(rng, h, k, self.dtype))
            self._add("enc.%s.b2" % mod, np.zeros(k, dtype=self.dtype))
            for head in ("shared", "private"):
                self._add("proj.%s.%s.w1" % (mod, head), _xavier(rng, k, ph, self.dtype))
                self._add("proj.%s.%s.b1" % (mod, head), np.zeros(ph, dtype=self.dtype))
                self._add("proj.%s.%s.w2" % (mod, head), _xavier(rng, ph, kp, self.dtype))
                self._add("proj.%s.%s.b2" % (mod, head), np.zeros(kp, dtype=self.dtype))

    def _add(self, name, values):
        if name in self.params:
            raise ConfigurationError("duplicate parameter name %r" % name)
        self.params[name] = ad.Tensor(values, requires_grad=True, name=name)

    @property
    def modality_ids(self):
        return sorted(self.modality_shapes)

    def parameters(self):
        return list(self.params.values())

    def state_arrays(self):
        return OrderedDict((name, p.data) for name, p in self.params.items())

    def load_state_arrays(self, arrays):
        for name, p in self.params.items():
            if name not in arrays:
                raise UsageError("checkpoint is missing parameter %r" % name)
            if arrays[name].shape != p.data.shape:
                raise UsageError(
                    "parameter %r has shape %s, checkpoint has %s"
                    % (name, p.data.shape, arrays[name].shape)
                )
            p.data = arrays[name].astype(self.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    # -- forward ------------------------------------------------------------

    def encode(self, mod, spectra):
        """Spectrogram batch (complex [B, C, I, S] or one sample) -> Tensor [B, K]."""
        feats = flatten_complex(spectra, self.dtype)
        if feats.ndim == 2:
            feats = feats[None]
        b, i, d = feats.shape
        c_exp, i_exp, s_exp = self.modality_shapes[mod]
        if (i, d) != (i_exp, 2 * c_exp * s_exp):
            raise UsageError(
                "modality %r expects [*, %d, %d] interval features, got [%d, %d, %d]"
                % (mod, i_exp, 2 * c_exp * s_exp, b, i, d)
            )
        x = ad.Tensor(feats.reshape(b * i, d))
        z = (x @ self.params["enc.%s.w1" % mod] + self.params["enc.%s.b1" % mod]).gelu()
        z = z.reshape(b, i, self.config.interval_hidden)
        if self.config.aggregate == "mean":
            z = z.mean(axis=1)
        else:
            z = z[:, i - 1, :]
        return z @ self.params["enc.%s.w2" % mod] + self.params["enc.%s.b2" % mod]

    def project(self, mod, h):
        """Embedding Tensor [B, K] -> (h_shared, h_private), both unit rows."""
        outs = []
        for head in ("shared", "private"):
            w1 = self.params["proj.%s.%s.w1" % (mod, head)]
            b1 = self.params["proj.%s.%s.b1" % (mod, head)]
            w2 = self.params["proj.%s.%s.w2" % (mod, head)]
            b2 = self.params["proj.%s.%s.b2" % (mod, head)]
            z = (h @ w1 + b1).relu() @ w2 + b2
            outs.append(ad.l2_normalize(z))
        return outs[0], outs[1]

    def encode_project(self, mod, spectra):
        h = self.encode(mod, spectra)
        shared, private = self.project(mod, h)
        return h, shared, private

    def embed_views(self, views):
        """views: modality -> (spectra_v0, spectra_v1) arrays.

        Returns (shared, private) dicts: modality -> [Tensor_v0, Tensor_v1].
        """
        shared, private = {}, {}
        for mod in sorted(views):
            pair_s, pair_p = [], []
            for v in range(2):
                _, s, p = self.encode_project(mod, views[mod][v])
                pair_s.append(s)
                pair_p.append(p)
            shared[mod] = pair_s
            private[mod] = pair_p
        return shared, private
