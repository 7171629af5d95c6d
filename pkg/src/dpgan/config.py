"""JSON run configuration merging generator, discriminator, loss and training settings.

Every section is optional and falls back to the dataclass defaults; unknown
keys anywhere are an error. The fully resolved form is what gets echoed into
each output directory, and feeding it back reproduces the run.
"""
import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError, ContractError
from .losses import LossWeights
from .models import DiscriminatorConfig, GeneratorConfig
from .training import TrainConfig

SECTIONS = {
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
    "loss": LossWeights,
    "train": TrainConfig,
}
TOP_LEVEL = set(SECTIONS) | {"data", "out", "ablation"}


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: str = None
    out: str = None

    @property
    def ablation(self):
        return self.generator.variant

    def resolved(self):
        return {
            "ablation": self.ablation,
            "data": self.data,
            "out": self.out,
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "loss": self.loss.to_dict(),
            "train": self.train.to_dict(),
        }

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.resolved(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _section(name, cls, values):
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ContractError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from exc


def from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    sections = {k: dict(raw.get(k) or {}) for k in SECTIONS}
    ablation = raw.get("ablation")
    if ablation is not None:
        current = sections["generator"].get("variant")
        if current is not None and current != ablation:
            raise ConfigError(f"ablation {ablation!r} conflicts with generator.variant {current!r}")
        sections["generator"]["variant"] = ablation
    built = {k: _section(k, cls, sections[k]) for k, cls in SECTIONS.items()}
    return RunConfig(data=raw.get("data"), out=raw.get("out"), **built)


def load(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(raw)
