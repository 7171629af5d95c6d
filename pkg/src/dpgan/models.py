"""Generator, multi-scale discriminator and the frozen perceptual feature net."""
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .blocks import Fusion, Stack
from .errors import ContractError
from .nn import Conv2d, InstanceNorm, Module

# Ablation rows: a plain block stack (B1-B6) or a fusion strategy (B7-B13).
VARIANTS = {
    "B1": ("stack", ()),
    "B2": ("stack", ("SPM",)),
    "B3": ("stack", ("RPM-I",)),
    "B4": ("stack", ("RPM-II",)),
    "B5": ("stack", ("RPM-I", "RPM-I")),
    "B6": ("stack", ("RPM-II", "RPM-II")),
    "B7": ("fusion", "F-I"),
    "B8": ("fusion", "F-II"),
    "B9": ("fusion", "F-III"),
    "B10": ("fusion", "F-IV"),
    "B11": ("fusion", "F-V"),
    "B12": ("fusion", "F-VI"),
    "B13": ("fusion", "F-VII"),
}

VARIANT_LABELS = {
    "B1": "backbone only",
    "B2": "B1 + SPM",
    "B3": "B1 + RPM-I",
    "B4": "B1 + RPM-II",
    "B5": "B1 + 2 RPM-I",
    "B6": "B1 + 2 RPM-II",
    "B7": "B6 + SPM + F-I",
    "B8": "B6 + SPM + F-II",
    "B9": "B6 + SPM + F-III",
    "B10": "B6 + SPM + F-IV",
    "B11": "B6 + SPM + F-V",
    "B12": "B6 + SPM + F-VI",
    "B13": "B6 + SPM + F-VII",
}


def check_variant(variant):
    if variant not in VARIANTS:
        raise ContractError(f"unknown ablation variant {variant!r}; expected one of B1..B13")
    return variant


@dataclass
class GeneratorConfig:
    classes: int = 5
    width: int = 16
    depth: int = 4
    variant: str = "B13"
    norm: str = "instance"
    image_channels: int = 3
    seed: int = 0

    def __post_init__(self):
        check_variant(self.variant)
        if self.width % 4:
            raise ContractError(f"generator width must be divisible by 4, got {self.width}")
        if self.classes < 1 or self.depth < 1:
            raise ContractError("classes and depth must be positive")
        if self.norm not in ("instance", "none"):
            raise ContractError(f"norm must be 'instance' or 'none', got {self.norm!r}")

    @property
    def fusion(self):
        kind, arg = VARIANTS[self.variant]
        return arg if kind == "fusion" else None

    def to_dict(self):
        return asdict(self)


class Backbone(Module):
    """Stride-1 3x3 conv stages, each followed by instance norm and leaky ReLU."""

    def __init__(self, classes, width, depth, rng, norm="instance"):
        self.convs = [Conv2d(classes if i == 0 else width, width, 3, rng) for i in range(depth)]
        self.norms = [InstanceNorm(width) for _ in range(depth)] if norm == "instance" else []

    def forward(self, x):
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if self.norms:
                x = self.norms[i](x)
            x = ad.leaky_relu(x, 0.2)
        return x


class Generator(Module):
    def __init__(self, cfg):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.backbone = Backbone(cfg.classes, cfg.width, cfg.depth, rng, cfg.norm)
        kind, arg = VARIANTS[cfg.variant]
        if kind == "stack":
            self.head = Stack(cfg.width, arg, rng)
            image_level = False
        else:
            self.head = Fusion(arg, cfg.width, rng, cfg.image_channels)
            image_level = self.head.image_level
        self.to_image = None if image_level else Conv2d(self.head.out_channels, cfg.image_channels, 3, rng)

    def check_layout(self, onehot):
        if onehot.shape[1] != self.cfg.classes:
            raise ContractError(f"layout has {onehot.shape[1]} classes, generator expects {self.cfg.classes}")

    def features(self, onehot):
        """Output of the pooling head (the fused image for image-level strategies)."""
        self.check_layout(onehot)
        return self.head(self.backbone(onehot))

    def forward(self, onehot):
        x = self.features(onehot)
        if self.to_image is not None:
            x = self.to_image(x)
        return ad.tanh(x)


@dataclass
class DiscriminatorConfig:
    scales: int = 2
    widths: tuple = (32, 64, 128)
    kernel: int = 4
    seed: int = 1

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if self.scales < 1 or not self.widths:
            raise ContractError("discriminator needs at least one scale and one stage")

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


class PatchDiscriminator(Module):
    def __init__(self, in_channels, widths, kernel, rng):
        chans = (in_channels,) + tuple(widths)
        self.stages = [Conv2d(chans[i], chans[i + 1], kernel, rng, stride=2, pad=1) for i in range(len(widths))]
        self.head = Conv2d(chans[-1], 1, 3, rng)

    def forward(self, x):
        feats = []
        for conv in self.stages:
            x = ad.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return self.head(x), feats


class MultiScaleDiscriminator(Module):
    """Patch discriminators on the input and on successive 2x downsamples.

    The 2x downsample is a 2x2 mean, which is exactly what half-pixel bilinear
    resampling gives at a factor of two.
    """

    def __init__(self, cfg, image_channels, classes):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.nets = [PatchDiscriminator(image_channels + classes, cfg.widths, cfg.kernel, rng)
                     for _ in range(cfg.scales)]

    def forward(self, image, onehot):
        if image.shape[2:] != onehot.shape[2:] or image.shape[0] != onehot.shape[0]:
            raise ContractError(f"image {image.shape} and layout {onehot.shape} differ in N/H/W")
        x = ad.concat_channels([image, onehot])
        outs = []
        for i, net in enumerate(self.nets):
            if i:
                x = ad.adaptive_avg_pool2d(x, max(1, x.shape[2] // 2), max(1, x.shape[3] // 2))
            outs.append(net(x))
        return outs


class PerceptualNet(Module):
    """Frozen random conv features standing in for a pretrained network."""

    def __init__(self, image_channels=3, widths=(16, 32, 64), seed=1234):
        rng = np.random.default_rng(seed)
        chans = (image_channels,) + tuple(widths)
        self.stages = [Conv2d(chans[i], chans[i + 1], 4, rng, stride=2, pad=1) for i in range(len(widths))]
        self.set_trainable(False)

    def forward(self, x):
        taps = []
        for conv in self.stages:
            x = ad.leaky_relu(conv(x), 0.2)
            taps.append(x)
        return taps
