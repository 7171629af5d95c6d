"""Square and rectangle pooling blocks and the ways of fusing them.

Channel bookkeeping, with ``C`` the input width of each block:

* ``SquarePooling``: ``C -> C + n * C/4`` (``(n/4 + 1) C``)
* ``RectanglePooling`` variant ``"I"`` (residual add): ``C -> C``
* ``RectanglePooling`` variant ``"II"`` (concat): ``C -> 2C``
"""
from dataclasses import dataclass

from . import autodiff as ad
from .errors import ContractError
from .nn import Conv2d, Module

SPM_LEVELS = ((1, 1), (2, 2), (3, 3), (6, 6))
RPM_SPM_LEVELS = ((12, 12), (20, 20))
FUSION_STRATEGIES = ("F-I", "F-II", "F-III", "F-IV", "F-V", "F-VI", "F-VII")


@dataclass(frozen=True)
class SpmConfig:
    channels: int
    levels: tuple = SPM_LEVELS
    level_channels: int = None

    def __post_init__(self):
        levels = tuple(tuple(int(v) for v in lv) for lv in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels or len(levels) % 2:
            raise ContractError(f"SPM needs an even, non-zero number of levels, got {len(levels)}")
        for h, w in levels:
            if h != w or h < 1:
                raise ContractError(f"SPM levels must be positive squares, got ({h}, {w})")
        if self.level_channels is None:
            if self.channels % 4:
                raise ContractError(f"SPM input channels must be divisible by 4, got {self.channels}")
            object.__setattr__(self, "level_channels", self.channels // 4)
        elif self.level_channels < 1:
            raise ContractError("SPM level_channels must be positive")

    @property
    def out_channels(self):
        return self.channels + len(self.levels) * self.level_channels


class SquarePooling(Module):
    """Pool to each square level, reduce channels with a 1x1 conv, resize back, concat with the input."""

    def __init__(self, cfg, rng):
        if not isinstance(cfg, SpmConfig):
            cfg = SpmConfig(cfg)
        self.cfg = cfg
        self.reduce = [Conv2d(cfg.channels, cfg.level_channels, 1, rng) for _ in cfg.levels]

    @property
    def in_channels(self):
        return self.cfg.channels

    @property
    def out_channels(self):
        return self.cfg.out_channels

    def forward(self, f):
        if f.shape[1] != self.cfg.channels:
            raise ContractError(f"SPM expects {self.cfg.channels} channels, got {f.shape[1]}")
        h, w = f.shape[2:]
        parts = []
        for (lh, lw), conv in zip(self.cfg.levels, self.reduce):
            pooled = ad.adaptive_avg_pool2d(f, lh, lw)
            parts.append(ad.resize(conv(pooled), h, w))
        parts.append(f)
        return ad.concat_channels(parts)


class HorizontalStrip(Module):
    """Average each column (pool to 1 x W), 1x3 conv, replicate back over H."""

    def __init__(self, channels, rng):
        self.channels = channels
        self.conv = Conv2d(channels, channels, (1, 3), rng, pad=(0, 1))

    def pool(self, x):
        return ad.adaptive_avg_pool2d(x, 1, x.shape[3])

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ContractError(f"HRPM expects {self.channels} channels, got {x.shape[1]}")
        h, w = x.shape[2:]
        return ad.upsample(self.conv(self.pool(x)), h, w)


class VerticalStrip(Module):
    """Average each row (pool to H x 1), 3x1 conv, replicate back over W."""

    def __init__(self, channels, rng):
        self.channels = channels
        self.conv = Conv2d(channels, channels, (3, 1), rng, pad=(1, 0))

    def pool(self, x):
        return ad.adaptive_avg_pool2d(x, x.shape[2], 1)

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ContractError(f"VRPM expects {self.channels} channels, got {x.shape[1]}")
        h, w = x.shape[2:]
        return ad.upsample(self.conv(self.pool(x)), h, w)


class RectanglePooling(Module):
    """Strip pooling in both directions plus a local square-pooling branch.

    ``variant="I"`` adds the input back (width preserved); ``variant="II"``
    concatenates it (width doubled).
    """

    def __init__(self, channels, variant, rng, levels=RPM_SPM_LEVELS):
        if channels % 4:
            raise ContractError(f"RPM channels must be divisible by 4, got {channels}")
        if variant not in ("I", "II"):
            raise ContractError(f"RPM variant must be 'I' or 'II', got {variant!r}")
        self.channels = channels
        self.variant = variant
        q = channels // 4
        self.entry_strip = Conv2d(channels, q, 1, rng)
        self.entry_local = Conv2d(channels, q, 1, rng)
        self.hrpm = HorizontalStrip(q, rng)
        self.vrpm = VerticalStrip(q, rng)
        # q can be below 4, so the inner SPM level width is floored at one channel
        self.spm = SquarePooling(SpmConfig(q, levels, max(1, q // 4)), rng)
        self.local = Conv2d(q, self.spm.out_channels, 3, rng)
        self.fuse_local = Conv2d(self.spm.out_channels, q, 1, rng)
        self.fuse = Conv2d(2 * q, channels, 1, rng)

    @property
    def in_channels(self):
        return self.channels

    @property
    def out_channels(self):
        return self.channels if self.variant == "I" else 2 * self.channels

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ContractError(f"RPM expects {self.channels} channels, got {x.shape[1]}")
        narrow = self.entry_strip(x)
        strips = ad.add(self.hrpm(narrow), self.vrpm(narrow))
        narrow = self.entry_local(x)
        local = self.fuse_local(ad.add(self.local(narrow), self.spm(narrow)))
        mixed = self.fuse(ad.concat_channels([local, strips]))
        if self.variant == "I":
            return ad.add(mixed, x)
        return ad.concat_channels([mixed, x])


class Stack(Module):
    """Apply pooling blocks in sequence, each sized to the previous output."""

    def __init__(self, channels, kinds, rng):
        self.blocks = []
        c = channels
        for kind in kinds:
            if kind == "SPM":
                block = SquarePooling(SpmConfig(c), rng)
            elif kind in ("RPM-I", "RPM-II"):
                block = RectanglePooling(c, kind.split("-")[1], rng)
            else:
                raise ContractError(f"unknown block kind {kind!r}")
            self.blocks.append(block)
            c = block.out_channels
        self.in_channels = channels
        self.out_channels = c
        self.kinds = tuple(kinds)

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return x


# RPM stack used on the rectangle branch of each strategy
_RPM_BRANCH = {
    "F-I": ("RPM-II", "RPM-II"),
    "F-II": ("RPM-II", "RPM-II"),
    "F-III": ("RPM-II", "RPM-I"),
    "F-IV": ("RPM-II", "RPM-II"),
    "F-V": ("RPM-II", "RPM-II"),
    "F-VI": ("RPM-II", "RPM-II", "SPM"),
    "F-VII": ("SPM", "RPM-II", "RPM-II"),
}


class Fusion(Module):
    """Combine square and rectangle pooling under one of the seven strategies.

    Image-level strategies (F-I, F-II) return a ``image_channels`` map and
    own their to-image convolutions. Feature-level strategies return a
    feature map that the generator's final conv turns into an image.
    """

    def __init__(self, strategy, channels, rng, image_channels=3):
        if strategy not in FUSION_STRATEGIES:
            raise ContractError(f"unknown fusion strategy {strategy!r}")
        self.strategy = strategy
        self.in_channels = channels
        self.image_level = strategy in ("F-I", "F-II")
        cascade = strategy in ("F-VI", "F-VII")
        if cascade:
            self.spm = None
            self.rpm = Stack(channels, _RPM_BRANCH[strategy], rng)
            self.out_channels = self.rpm.out_channels
            return
        self.spm = SquarePooling(SpmConfig(channels), rng)
        self.rpm = Stack(channels, _RPM_BRANCH[strategy], rng)
        cs, cr = self.spm.out_channels, self.rpm.out_channels
        if self.image_level:
            self.to_image_square = Conv2d(cs, image_channels, 3, rng)
            self.to_image_rect = Conv2d(cr, image_channels, 3, rng)
            if strategy == "F-I":
                self.attention = Conv2d(cs + cr, 2, 3, rng)
            self.out_channels = image_channels
        elif strategy in ("F-III", "F-IV"):
            self.project = Conv2d(cr, cs, 1, rng)
            self.out_channels = cs
        else:
            self.out_channels = cs + cr

    def branches(self, f):
        return self.spm(f), self.rpm(f)

    def masks(self, square, rect):
        """Two attention masks that sum to one at every pixel (F-I only)."""
        a = ad.softmax_channels(self.attention(ad.concat_channels([square, rect])))
        return ad.slice_channels(a, 0, 1), ad.slice_channels(a, 1, 2)

    def forward(self, f):
        if f.shape[1] != self.in_channels:
            raise ContractError(f"{self.strategy} expects {self.in_channels} channels, got {f.shape[1]}")
        s = self.strategy
        if s in ("F-VI", "F-VII"):
            return self.rpm(f)
        square, rect = self.branches(f)
        if s == "F-I":
            square_img, rect_img = self.to_image_square(square), self.to_image_rect(rect)
            a1, a2 = self.masks(square, rect)
            c = square_img.shape[1]
            return ad.add(
                ad.mul(square_img, ad.concat_channels([a1] * c)),
                ad.mul(rect_img, ad.concat_channels([a2] * c)),
            )
        if s == "F-II":
            return ad.scale(ad.add(self.to_image_square(square), self.to_image_rect(rect)), 0.5)
        if s in ("F-III", "F-IV"):
            return ad.add(square, self.project(rect))
        return ad.concat_channels([square, rect])
