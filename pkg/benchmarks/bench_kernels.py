"""Time the numba and numpy kernel backends on the shapes the toy model actually hits.

    python3 benchmarks/bench_kernels.py [--repeat N] [--train-steps N]

Prints a per-kernel table and, optionally, the wall time of a few training steps
under each backend.
"""
import argparse
import time
import timeit

import numpy as np

from hodinet import HODINet, ModelConfig, _accel, kernels
from hodinet.train import synthetic_corpus, train

# (label, input shape, kernel, stride, pad): stem and stage convs of the toy encoders
CONV_CASES = [
    ("stem 7x7/4", (4, 3, 64, 64), 7, 4, 3),
    ("stage1 3x3", (4, 16, 16, 16), 3, 1, 1),
    ("stage2 3x3/2", (4, 16, 16, 16), 3, 2, 1),
    ("head 3x3", (4, 32, 16, 16), 3, 1, 1),
]
RESIZE_CASES = [
    ("P1 up x4", (4, 1, 16, 16), 64, 64),
    ("P4 up x32", (4, 1, 2, 2), 64, 64),
    ("decoder x2", (4, 32, 8, 8), 16, 16),
]


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_rows(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for label, shape, k, s, p in CONV_CASES:
        x = rng.standard_normal(shape)
        cols = kernels.im2col(x, k, s, p)
        rows.append((f"im2col {label}", lambda x=x, k=k, s=s, p=p: kernels.im2col(x, k, s, p)))
        rows.append((f"col2im {label}",
                     lambda c=cols, sh=shape, k=k, s=s, p=p: kernels.col2im(c, sh, k, s, p)))
    for label, shape, oh, ow in RESIZE_CASES:
        x = rng.standard_normal(shape)
        g = rng.standard_normal(shape[:2] + (oh, ow))
        rows.append((f"resize fwd {label}", lambda x=x, oh=oh, ow=ow: kernels.resize_forward(x, oh, ow)))
        rows.append((f"resize bwd {label}",
                     lambda g=g, h=shape[2], w=shape[3]: kernels.resize_backward(g, h, w)))
    out = []
    for name, fn in rows:
        times = {}
        for backend in ("numpy", "numba"):
            _accel.set_backend(backend)
            fn()  # compile / warm caches
            times[backend] = _best(fn, repeat)
        out.append((name, times["numpy"], times["numba"]))
    return out


def train_time(backend, steps):
    _accel.set_backend(backend)
    corpus = synthetic_corpus()
    model = HODINet(ModelConfig())
    train(model, corpus, epochs=1, steps_per_epoch=1)  # warm-up
    t0 = time.perf_counter()
    train(model, corpus, epochs=1, steps_per_epoch=steps)
    return (time.perf_counter() - t0) / steps


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--train-steps", type=int, default=10, help="0 skips the training comparison")
    args = ap.parse_args()
    if not _accel.has_numba:
        raise SystemExit("numba is not installed; nothing to compare")
    prev = _accel.backend()
    try:
        print(f"{'kernel':<28}{'numpy ms':>10}{'numba ms':>10}{'speed-up':>10}")
        for name, t_np, t_nb in kernel_rows(args.repeat):
            print(f"{name:<28}{1e3 * t_np:>10.3f}{1e3 * t_nb:>10.3f}{t_np / t_nb:>9.1f}x")
        if args.train_steps:
            per = {b: train_time(b, args.train_steps) for b in ("numpy", "numba")}
            print(f"\ntoy training step (64x64, batch 4): numpy {1e3 * per['numpy']:.1f} ms, "
                  f"numba {1e3 * per['numba']:.1f} ms")
    finally:
        _accel.set_backend(prev)


if __name__ == "__main__":
    main()
