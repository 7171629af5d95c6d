"""Gradient-footprint receptive-field probe.

Backpropagates one output pixel of the pooling head to the one-hot layout
and records which input positions receive a gradient above a threshold.
The probe builds generators without instance norm: its plane-wide
statistics would make every variant's footprint trivially global.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .models import Generator, GeneratorConfig
from .synth import generate_layout, one_hot

THRESHOLD = 1e-12


@dataclass
class RfReport:
    variant: str
    probe: tuple  # (channel, row, col) of the probed output
    mask: np.ndarray  # bool, same shape as the one-hot input (K, H, W)
    coverage: float  # fraction of spatial positions reached
    bbox: tuple  # (row0, col0, row1, col1), inclusive

    @property
    def bbox_size(self):
        r0, c0, r1, c1 = self.bbox
        return r1 - r0 + 1, c1 - c0 + 1

    def to_dict(self):
        return {
            "variant": self.variant,
            "probe": list(self.probe),
            "coverage": self.coverage,
            "bbox": list(self.bbox),
            "bbox_size": list(self.bbox_size),
            "input_shape": list(self.mask.shape),
        }


def probe(gcfg, size=64, layout_seed=0, threshold=THRESHOLD, channel=0):
    cfg = replace(gcfg, norm="none")
    g = Generator(cfg)
    layout = generate_layout(layout_seed, size, max(cfg.classes, 5)) % cfg.classes
    x = one_hot(layout, cfg.classes)
    x.requires_grad = True
    out = g.features(x)
    h, w = out.shape[2:]
    i, j = h // 2, w // 2
    sel = np.zeros(out.shape)
    sel[0, channel, i, j] = 1.0
    ad.backward(ad.sum_(ad.mul(out, ad.Tensor(sel))))
    mask = np.abs(x.grad[0]) > threshold
    spatial = mask.any(axis=0)
    rows, cols = np.nonzero(spatial)
    bbox = (int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())) if rows.size else (i, j, i - 1, j - 1)
    return RfReport(cfg.variant, (channel, i, j), mask, float(spatial.mean()), bbox)


def compare(variants, base=None, size=64, layout_seed=0):
    base = base or GeneratorConfig()
    return [probe(replace(base, variant=v), size, layout_seed) for v in variants]
