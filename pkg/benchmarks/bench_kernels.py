"""Benchmark the numba kernels against the pure-numpy fallback.

Times every hot kernel on desk-scale and paper-scale shapes, then one full
training iteration per backend. Run:

    python benchmarks/bench_kernels.py [--repeats N] [--skip-train]
"""

import argparse
import time

import numpy as np

from spixel import kernels as K
from spixel.augment import AugmentConfig
from spixel.data import gen_synthetic
from spixel.model import DESK_CONFIG, build
from spixel.train import TrainConfig, train


def _time(fn, repeats):
    fn()  # warm-up (also triggers JIT compilation)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1000.0


def kernel_cases(rng):
    cases = []

    def add(name, make):
        cases.append((name, make))

    # conv on a desk-scale layer and a paper-scale layer
    for tag, (n, c, hw, f) in (("desk", (4, 16, 64, 16)), ("paper", (1, 64, 104, 64))):
        x = rng.standard_normal((n, c, hw, hw)).astype(np.float32)
        w = rng.standard_normal((f, c, 3, 3)).astype(np.float32)
        b = rng.standard_normal(f).astype(np.float32)
        dy = rng.standard_normal((n, f, hw, hw)).astype(np.float32)
        add(f"conv2d_fwd[{tag}]", lambda x=x, w=w, b=b: K.conv2d_fwd(x, w, b, 1, 1))
        add(
            f"conv2d_bwd[{tag}]",
            lambda dy=dy, x=x, w=w: K.conv2d_bwd(dy, x, w, 1, 1, True, True),
        )

    xt = rng.standard_normal((4, 32, 16, 16)).astype(np.float32)
    wt = rng.standard_normal((32, 16, 2, 2)).astype(np.float32)
    dyt = rng.standard_normal((4, 16, 32, 32)).astype(np.float32)
    add("convt2x2_fwd", lambda: K.convt2x2_fwd(xt, wt))
    add("convt2x2_bwd", lambda: K.convt2x2_bwd(dyt, xt, wt, True, True))

    xp = rng.standard_normal((4, 16, 64, 64)).astype(np.float32)
    add("maxpool2_fwd", lambda: K.maxpool2_fwd(xp))
    _, idx = K.maxpool2_fwd(xp)
    dyp = rng.standard_normal((4, 16, 32, 32)).astype(np.float32)
    add("maxpool2_bwd", lambda: K.maxpool2_bwd(dyp, idx))

    p, c9, ncell = 64 * 64, 8, 64
    q = rng.random((p, 9)).astype(np.float32)
    lprop = rng.standard_normal((p, c9)).astype(np.float32)
    nbr = rng.integers(0, ncell, (p, 9)).astype(np.int32)
    add("aggregate_fwd", lambda: K.aggregate_fwd(q, lprop, nbr, ncell))
    dnum = rng.standard_normal((ncell, c9)).astype(np.float32)
    dden = rng.standard_normal(ncell).astype(np.float32)
    add("aggregate_bwd", lambda: K.aggregate_bwd(dnum, dden, q, lprop, nbr))
    hs = rng.standard_normal((ncell, c9)).astype(np.float32)
    add("reconstruct_fwd", lambda: K.reconstruct_fwd(q, hs, nbr))
    g9 = rng.standard_normal((p, c9)).astype(np.float32)
    add("reconstruct_bwd", lambda: K.reconstruct_bwd(g9, q, hs, nbr, ncell))

    d, dout = 8, 8
    e = rng.standard_normal((p, d)).astype(np.float32)
    mhat = rng.standard_normal((ncell, d)).astype(np.float32)
    wf = rng.standard_normal((dout, d, 3, 3)).astype(np.float32)
    bf = rng.standard_normal(dout).astype(np.float32)
    pnbr = rng.integers(0, p, (p, 9)).astype(np.int32)
    dyf = rng.standard_normal((p, dout)).astype(np.float32)
    add("implant_fuse_fwd", lambda: K.implant_fuse_fwd(e, mhat, wf, bf, nbr, pnbr, 0))
    add("implant_fuse_bwd", lambda: K.implant_fuse_bwd(dyf, e, mhat, wf, nbr, pnbr, 0))
    return cases


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    backends = K.available_backends()
    print(f"{'kernel':24s}" + "".join(f"{b + ' (ms)':>14s}" for b in backends) + f"{'speedup':>10s}")
    for name, fn in cases:
        times = {}
        for backend in backends:
            K.set_backend(backend)
            times[backend] = _time(fn, repeats)
        row = f"{name:24s}" + "".join(f"{times[b]:14.3f}" for b in backends)
        if "numba" in times and "numpy" in times:
            row += f"{times['numpy'] / times['numba']:10.2f}x"
        print(row)


def bench_training_iteration():
    dataset = gen_synthetic(8, 64, 6, rng=0)
    for backend in K.available_backends():
        K.set_backend(backend)
        model = build(DESK_CONFIG, rng=0)
        cfg = TrainConfig(total_iters=3, stage1_iters=3, seed=0, augment=AugmentConfig(S=8))
        train(model, dataset, cfg)  # warm-up + JIT
        model = build(DESK_CONFIG, rng=0)
        cfg = TrainConfig(total_iters=10, stage1_iters=10, seed=0, augment=AugmentConfig(S=8))
        t0 = time.perf_counter()
        train(model, dataset, cfg)
        ms = (time.perf_counter() - t0) / 10 * 1000.0
        print(f"training iteration [{backend}]: {ms:.1f} ms")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--skip-train", action="store_true")
    args = parser.parse_args()
    print(f"backends: {K.available_backends()}, active default: {K.backend_name()}")
    bench_kernels(args.repeats)
    if not args.skip_train:
        bench_training_iteration()


if __name__ == "__main__":
    main()
