"""Central finite-difference gradient checks and the registry of checked ops."""
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

STEP = 1e-5
RTOL = 1e-4
ATOL = 1e-7


@dataclass
class GradcheckReport:
    name: str
    errors: list = field(default_factory=list)  # max relative error per input
    probes: int = 0
    rtol: float = RTOL

    @property
    def max_error(self):
        return max(self.errors, default=0.0)

    @property
    def passed(self):
        return self.max_error <= self.rtol

    def row(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.name:<24} {self.max_error:10.3e} {self.probes:6d}  {verdict}"


def relative_error(analytic, numeric, rtol=RTOL, atol=ATOL):
    """Largest ``|a - n| / max(|a|, |n|, atol / rtol)``.

    The floor turns the pass rule ``error <= rtol`` into
    ``|a - n| <= max(rtol * |g|, atol)``, so gradients near zero are judged
    on absolute error.
    """
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), atol / rtol)
    return float((diff / denom).max(initial=0.0))


def gradcheck(fn, inputs, name="op", seed=0, h=STEP, max_probes=None, rtol=RTOL, atol=ATOL):
    """Compare backward() against central differences of a random projection of ``fn()``.

    ``fn`` takes no arguments and reads ``inputs`` (leaf tensors or module
    parameters) by closure; they are perturbed in place. At most
    ``max_probes`` entries per input are perturbed, chosen with ``seed``;
    ``None`` checks every entry.
    """
    rng = np.random.default_rng(seed)
    weights = ad.Tensor(rng.normal(size=fn().shape))

    def objective():
        return ad.sum_(ad.mul(fn(), weights))

    for t in inputs:
        t.grad = None
    ad.backward(objective())
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    report = GradcheckReport(name, rtol=rtol)
    with ad.no_grad():
        for t, ga in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_probes is not None and flat.size > max_probes:
                idx = rng.choice(flat.size, size=max_probes, replace=False)
            num = np.empty(len(idx))
            for k, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + h
                up = fn().data
                flat[i] = orig - h
                down = fn().data
                flat[i] = orig
                # project the output difference rather than differencing two
                # projected sums; this avoids cancellation in the large sums
                num[k] = float((weights.data * (up - down)).sum()) / (2 * h)
            report.errors.append(relative_error(ga.reshape(-1)[idx], num, rtol, atol))
            report.probes += len(idx)
    for t in inputs:
        t.grad = None
    return report


# -- registry ---------------------------------------------------------------

def _rand(rng, *shape, requires_grad=True):
    return ad.Tensor(rng.normal(size=shape), requires_grad=requires_grad)


def _op(name, fn, *shapes, **kw):
    def run(seed=0):
        rng = np.random.default_rng(seed)
        xs = [_rand(rng, *s) for s in shapes]
        return gradcheck(lambda: fn(*xs), xs, name=name, seed=seed, **kw)
    return run


def _module(name, build, in_shape, max_probes=8):
    def run(seed=0):
        rng = np.random.default_rng(seed)
        block = build(rng)
        x = _rand(rng, *in_shape)
        inputs = [x] + block.parameters()
        return gradcheck(lambda: block(x), inputs, name=name, seed=seed, max_probes=max_probes)
    return run


def _registry():
    from .blocks import FUSION_STRATEGIES, Fusion, HorizontalStrip, RectanglePooling, SquarePooling, VerticalStrip
    from .models import Generator, GeneratorConfig, MultiScaleDiscriminator, DiscriminatorConfig

    s = (2, 3, 5, 5)
    reg = {
        "add": _op("add", ad.add, s, s),
        "sub": _op("sub", ad.sub, s, s),
        "mul": _op("mul", ad.mul, s, s),
        "scale": _op("scale", lambda x: ad.scale(x, -1.7), s),
        "shift": _op("shift", lambda x: ad.shift(x, 0.3), s),
        "add_bias": _op("add_bias", ad.add_bias, s, (1, 3, 1, 1)),
        "abs": _op("abs", ad.abs_, s),
        "concat_channels": _op("concat_channels", lambda a, b: ad.concat_channels([a, b, a]), s, (2, 2, 5, 5)),
        "slice_channels": _op("slice_channels", lambda x: ad.slice_channels(x, 1, 3), (1, 4, 3, 3)),
        "conv2d": _op("conv2d", lambda x, w, b: ad.conv2d(x, w, b, stride=1, pad=1), (1, 2, 5, 5), (3, 2, 3, 3), (1, 3, 1, 1)),
        "conv2d_strided": _op("conv2d_strided", lambda x, w, b: ad.conv2d(x, w, b, stride=2, pad=1),
                              (1, 2, 6, 6), (3, 2, 4, 4), (1, 3, 1, 1)),
        "conv2d_1x3": _op("conv2d_1x3", lambda x, w, b: ad.conv2d(x, w, b, pad=(0, 1)), (1, 2, 1, 6), (2, 2, 1, 3), (1, 2, 1, 1)),
        "adaptive_avg_pool2d": _op("adaptive_avg_pool2d", lambda x: ad.adaptive_avg_pool2d(x, 2, 2), (1, 2, 5, 5)),
        "adaptive_avg_pool2d_up": _op("adaptive_avg_pool2d_up", lambda x: ad.adaptive_avg_pool2d(x, 12, 20), (1, 2, 5, 6)),
        "upsample": _op("upsample", lambda x: ad.upsample(x, 7, 8), (1, 2, 3, 2)),
        "resize": _op("resize", lambda x: ad.resize(x, 6, 6), (1, 2, 12, 3)),
        "relu": _op("relu", ad.relu, s),
        "leaky_relu": _op("leaky_relu", ad.leaky_relu, s),
        "tanh": _op("tanh", ad.tanh, s),
        "softmax_channels": _op("softmax_channels", ad.softmax_channels, s),
        "instance_norm": _op("instance_norm", ad.instance_norm, s, (1, 3, 1, 1), (1, 3, 1, 1)),
        "sum": _op("sum", ad.sum_, s),
        "mean": _op("mean", ad.mean, s),
        "l1_distance": _op("l1_distance", ad.l1_distance, s, s),
        "add_scalars": _op("add_scalars", lambda a, b: ad.add_scalars([a, b, a]), (1, 1, 1, 1), (1, 1, 1, 1)),
        "spm": _module("spm", lambda r: SquarePooling(4, r), (1, 4, 6, 6), max_probes=None),
        "hrpm": _module("hrpm", lambda r: HorizontalStrip(2, r), (1, 2, 6, 6), max_probes=None),
        "vrpm": _module("vrpm", lambda r: VerticalStrip(2, r), (1, 2, 6, 6), max_probes=None),
        "rpm_i": _module("rpm_i", lambda r: RectanglePooling(8, "I", r), (1, 8, 6, 6), max_probes=None),
        "rpm_ii": _module("rpm_ii", lambda r: RectanglePooling(8, "II", r), (1, 8, 6, 6), max_probes=None),
    }
    for strategy in FUSION_STRATEGIES:
        key = "fusion_" + strategy.lower().replace("-", "_")
        reg[key] = _module(key, lambda r, s_=strategy: Fusion(s_, 4, r), (1, 4, 6, 6), max_probes=16)

    def gen(seed=0):
        g = Generator(GeneratorConfig(classes=5, width=8, variant="B13", seed=seed))
        rng = np.random.default_rng(seed)
        x = _rand(rng, 1, 5, 8, 8)
        return gradcheck(lambda: g(x), [x] + g.parameters(), name="generator_b13", seed=seed, max_probes=8)

    def disc(seed=0):
        d = MultiScaleDiscriminator(DiscriminatorConfig(widths=(4, 4), seed=seed), 3, 2)
        rng = np.random.default_rng(seed)
        img, lay = _rand(rng, 1, 3, 8, 8), _rand(rng, 1, 2, 8, 8)

        def run():
            outs = d(img, lay)
            return ad.concat_channels([ad.mean(o[0]) for o in outs] + [ad.mean(f) for o in outs for f in o[1]])
        return gradcheck(run, [img, lay] + d.parameters(), name="discriminator", seed=seed, max_probes=8)

    reg["generator_b13"] = gen
    reg["discriminator"] = disc
    return reg


_REGISTRY = None


def registry():
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = _registry()
    return _REGISTRY


def run_checks(names=None, seed=0):
    reg = registry()
    names = list(reg) if names is None else names
    return [reg[n](seed) for n in names]
