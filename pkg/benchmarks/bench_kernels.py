"""Time the numba and numpy kernel backends on generator-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 64]

Each case is checked for agreement between backends before timing, and a
full B13 generator forward/backward is timed at the end.
"""
import argparse
import timeit

import numpy as np

from dpgan import autodiff as ad
from dpgan import kernels
from dpgan.models import Generator, GeneratorConfig
from dpgan.synth import generate_layout, one_hot


def cases(size, rng):
    x = rng.standard_normal((4, 16, size, size))
    w3 = rng.standard_normal((16, 16, 3, 3))
    w1 = rng.standard_normal((4, 16, 1, 1))
    b = rng.standard_normal(16)
    g3 = rng.standard_normal((4, 16, size, size))
    return {
        "pool 64->6": lambda: kernels.adaptive_pool_forward(x, 6, 6),
        "pool 64->1x64": lambda: kernels.adaptive_pool_forward(x, 1, size),
        "pool bwd 6->64": lambda: kernels.adaptive_pool_backward(x[:, :, :6, :6].copy(), size, size),
        "upsample 6->64": lambda: kernels.upsample_forward(x[:, :, :6, :6].copy(), size, size),
        "upsample bwd": lambda: kernels.upsample_backward(x, 6, 6),
        "conv3x3 fwd": lambda: kernels.conv2d_forward(x, w3, b, 1, 1, 1),
        "conv3x3 bwd": lambda: kernels.conv2d_backward(g3, x, w3, 1, 1, 1),
        "conv1x1 fwd": lambda: kernels.conv2d_forward(x, w1, b[:4], 1, 0, 0),
        "conv1x3 fwd": lambda: kernels.conv2d_forward(x, w3[:, :, 1:2, :].copy(), b, 1, 0, 1),
    }


def _flatten(out):
    return np.concatenate([np.ravel(o) for o in (out if isinstance(out, tuple) else (out,))])


def generator_step(size):
    g = Generator(GeneratorConfig(variant="B13"))
    x = one_hot(np.stack([generate_layout(i, size) for i in range(4)]), 5)

    def run():
        g.zero_grad()
        ad.backward(ad.mean(g(x)))
    return run


def best(fn, repeat):
    fn()  # compile / warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=64)
    args = ap.parse_args()
    names = [n for n in ("numba", "numpy") if n in kernels.BACKENDS]
    rng = np.random.default_rng(0)
    table = cases(args.size, rng)

    print(f"{'kernel':<18}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}{'max diff':>11}")
    for label, fn in table.items():
        times, outs = [], []
        for n in names:
            kernels.use_backend(n)
            outs.append(_flatten(fn()))
            times.append(best(fn, args.repeat))
        diff = float(np.abs(outs[0] - outs[-1]).max())
        ratio = times[-1] / times[0]
        print(f"{label:<18}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + f"{ratio:>9.2f}x{diff:>11.1e}")

    times = []
    for n in names:
        kernels.use_backend(n)
        times.append(best(generator_step(args.size), max(1, args.repeat // 2)))
    print(f"{'B13 fwd+bwd':<18}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times) + f"{times[-1] / times[0]:>9.2f}x")


if __name__ == "__main__":
    main()
