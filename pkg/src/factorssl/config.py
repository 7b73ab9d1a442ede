"""Run configuration: strict schema, documented defaults, JSON round trip.

Unknown keys are rejected at every level so typos fail loudly. The shipped
defaults are the desk-scale training profile (temperature 0.07, 64
sequences of 4 per batch, AdamW cosine 1e-4 to 1e-7 with weight decay
0.05, finetune Adam 1e-3 with step decay 0.2 every 50 of 200 epochs).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .augment import ALL_KINDS, AugmentationKind, AugmentationParams, AugmentationPolicy
from .errors import ConfigurationError
from .losses import LossConfig
from .model import EncoderConfig
from .synthetic import SynthConfig


@dataclass
class DataConfig:
    sequence_length: int = 4
    batch_sequences: int = 64
    split_ratios: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    synthetic: SynthConfig = field(default_factory=SynthConfig)

    def validate(self):
        if self.sequence_length < 2:
            raise ConfigurationError("sequence_length must be >= 2")
        if self.batch_sequences < 2:
            raise ConfigurationError("batch_sequences must be >= 2")
        self.synthetic.validate()


@dataclass
class PipelineConfig:
    interval_len: int = 20
    overlap_ratio: float = 0.0
    per_modality: dict = field(default_factory=dict)

    def spec_for(self, modality):
        override = self.per_modality.get(modality, {})
        return (
            int(override.get("interval_len", self.interval_len)),
            float(override.get("overlap_ratio", self.overlap_ratio)),
        )

    def specs(self, modalities):
        return {mod: self.spec_for(mod) for mod in modalities}

    def validate(self):
        if self.interval_len < 2:
            raise ConfigurationError("interval_len must be >= 2")
        if not 0.0 <= self.overlap_ratio < 1.0:
            raise ConfigurationError("overlap_ratio must be in [0, 1)")
        for mod, override in self.per_modality.items():
            unknown = set(override) - {"interval_len", "overlap_ratio"}
            if unknown:
                raise ConfigurationError(
                    "unknown pipeline override keys for %r: %s" % (mod, sorted(unknown))
                )


@dataclass
class AugmentationConfig:
    apply_prob: float = 0.5
    force_same_view: bool = False
    catalog: list = field(default_factory=lambda: [k.value for k in ALL_KINDS])
    sigma_scale: float = 0.1
    sigma_jitter_rel: float = 0.05
    sigma_mw: float = 0.2
    n_knots: int = 4
    rho_time: float = 0.125
    rho_freq: float = 0.1

    def params(self) -> AugmentationParams:
        p = AugmentationParams(
            sigma_scale=self.sigma_scale,
            sigma_jitter_rel=self.sigma_jitter_rel,
            sigma_mw=self.sigma_mw,
            n_knots=self.n_knots,
            rho_time=self.rho_time,
            rho_freq=self.rho_freq,
        )
        p.validate()
        return p

    def policy(self) -> AugmentationPolicy:
        try:
            kinds = tuple(AugmentationKind(name) for name in self.catalog)
        except ValueError as exc:
            raise ConfigurationError("unknown augmentation in catalog: %s" % exc)
        return AugmentationPolicy(
            apply_prob=self.apply_prob,
            catalog=kinds,
            force_same_view=self.force_same_view,
            params=self.params(),
        )

    def validate(self):
        self.policy()


@dataclass
class ScheduleSpec:
    kind: str = "cosine"
    max_lr: float = 1e-4
    min_lr: float = 1e-7
    total_epochs: int = 200
    start_lr: float = 1e-3
    decay_factor: float = 0.2
    period_epochs: int = 50

    def validate(self):
        if self.kind not in ("cosine", "step"):
            raise ConfigurationError("schedule kind must be 'cosine' or 'step', got %r" % self.kind)
        if self.total_epochs < 0:
            raise ConfigurationError("total_epochs must be nonnegative")
        if self.kind == "cosine" and not self.max_lr > self.min_lr >= 0:
            raise ConfigurationError("cosine schedule needs max_lr > min_lr >= 0")
        if self.kind == "step":
            if self.start_lr <= 0:
                raise ConfigurationError("step schedule needs start_lr > 0")
            if not 0 < self.decay_factor <= 1:
                raise ConfigurationError("decay_factor must be in (0, 1]")
            if self.period_epochs < 1:
                raise ConfigurationError("period_epochs must be >= 1")

    def lr_at(self, epoch):
        self.validate()
        if self.kind == "cosine":
            if not 0 <= epoch <= self.total_epochs:
                raise ConfigurationError(
                    "epoch %d outside [0, %d]" % (epoch, self.total_epochs)
                )
            return self.min_lr + 0.5 * (self.max_lr - self.min_lr) * (
                1.0 + math.cos(math.pi * epoch / self.total_epochs)
            )
        return self.start_lr * self.decay_factor ** (epoch // self.period_epochs)


@dataclass
class ScheduleConfig:
    pretrain: ScheduleSpec = field(default_factory=ScheduleSpec)
    finetune: ScheduleSpec = field(
        default_factory=lambda: ScheduleSpec(kind="step", total_epochs=200)
    )

    def validate(self):
        self.pretrain.validate()
        self.finetune.validate()


@dataclass
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    finetune_weight_decay: float = 0.0

    def validate(self):
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigurationError("betas must be in [0, 1)")
        if self.eps <= 0:
            raise ConfigurationError("eps must be positive")


@dataclass
class EvalConfig:
    knn_k: int = 5
    eval_every: int = 10
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 300
    cluster_embeddings: str = "concat"  # concat | shared | private
    label_ratios: list = field(default_factory=lambda: [1.0, 0.1, 0.01])
    protocol_seeds: int = 5

    def validate(self):
        if self.knn_k < 1:
            raise ConfigurationError("knn_k must be >= 1")
        if self.cluster_embeddings not in ("concat", "shared", "private"):
            raise ConfigurationError(
                "cluster_embeddings must be concat/shared/private, got %r" % self.cluster_embeddings
            )
        for r in self.label_ratios:
            if not 0 < r <= 1:
                raise ConfigurationError("label ratios must be in (0, 1], got %r" % r)
        if self.protocol_seeds < 1:
            raise ConfigurationError("protocol_seeds must be >= 1")


@dataclass
class SeedsConfig:
    master: int = 0


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seeds: SeedsConfig = field(default_factory=SeedsConfig)

    def validate(self):
        self.data.validate()
        self.pipeline.validate()
        self.augmentation.validate()
        self.encoder.validate()
        self.loss.validate()
        self.optimizer.validate()
        self.schedule.validate()
        self.eval.validate()

    def to_dict(self):
        return dataclasses.asdict(self)

    def copy(self):
        return from_dict(self.to_dict())


def _build(cls, data, path):
    """Construct a dataclass from a dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigurationError("%s must be an object, got %r" % (path or "config", data))
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigurationError(
            "unknown config key%s: %s"
            % ("s" if len(unknown) > 1 else "", ", ".join(sorted("%s.%s" % (path, k) if path else k for k in unknown)))
        )
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        sub_path = "%s.%s" % (path, name) if path else name
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type in _NESTED
        ):
            kwargs[name] = _build(_NESTED[f.type] if isinstance(f.type, str) else f.type, value, sub_path)
        else:
            kwargs[name] = value
    return cls(**kwargs)


# dataclass field types arrive as strings under `from __future__ import annotations`
_NESTED = {
    "DataConfig": DataConfig,
    "PipelineConfig": PipelineConfig,
    "AugmentationConfig": AugmentationConfig,
    "EncoderConfig": EncoderConfig,
    "LossConfig": LossConfig,
    "OptimizerConfig": OptimizerConfig,
    "ScheduleConfig": ScheduleConfig,
    "ScheduleSpec": ScheduleSpec,
    "EvalConfig": EvalConfig,
    "SeedsConfig": SeedsConfig,
    "SynthConfig": SynthConfig,
}


def from_dict(data) -> RunConfig:
    cfg = _build(RunConfig, data, "")
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError("%s is not valid JSON: %s" % (path, exc))
    return from_dict(data)


def dumps_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def save_config(cfg: RunConfig, path):
    with open(path, "w") as fh:
        fh.write(dumps_config(cfg))
