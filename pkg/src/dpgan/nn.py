"""Minimal module system: parameter discovery, convolution and normalisation layers."""
import numpy as np

from . import autodiff as ad
from .autodiff import Parameter


class Module:
    """Base class; parameters are discovered from attributes in definition order."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def set_trainable(self, flag):
        for p in self.parameters():
            p.requires_grad = flag

    def zero_grad(self):
        ad.zero_grad(self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(self, cin, cout, kernel, rng, stride=1, pad=None):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        if pad is None:
            pad = (kh // 2, kw // 2)
        self.stride = stride
        self.pad = pad
        bound = 1.0 / np.sqrt(cin * kh * kw)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(cout, cin, kh, kw)))
        self.bias = Parameter(rng.uniform(-bound, bound, size=(1, cout, 1, 1)))

    @property
    def out_channels(self):
        return self.weight.shape[0]

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)

    def zero_(self):
        """Zero weight and bias in place (used to build identity checks)."""
        self.weight.data = np.zeros_like(self.weight.data)
        self.bias.data = np.zeros_like(self.bias.data)


class InstanceNorm(Module):
    def __init__(self, channels, eps=1e-5):
        self.eps = eps
        self.gamma = Parameter(np.ones((1, channels, 1, 1)))
        self.beta = Parameter(np.zeros((1, channels, 1, 1)))

    def forward(self, x):
        return ad.instance_norm(x, self.gamma, self.beta, eps=self.eps)


def zero_all_convs(module):
    """Zero every convolution reachable from ``module``."""
    for m in iter_modules(module):
        if isinstance(m, Conv2d):
            m.zero_()


def iter_modules(module):
    yield module
    for value in vars(module).values():
        if isinstance(value, Module):
            yield from iter_modules(value)
        elif isinstance(value, (list, tuple)):
            for item in value:
                if isinstance(item, Module):
                    yield from iter_modules(item)
