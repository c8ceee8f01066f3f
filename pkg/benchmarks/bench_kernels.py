#!/usr/bin/env python3
"""Benchmark the pure-numpy kernels against the compiled core.

Shapes mirror the default training configuration: 64-d token embeddings,
64 hidden units, 192-d output, ~17-token utterances, 20 speaker classes.

Usage: python benchmarks/bench_kernels.py [--repeats 20000]
"""

import argparse
import time

import numpy as np

from textasv._kernels import available_backends


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def bench(repeats):
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled kernels not built; only the pure backend is timed")

    rng = np.random.default_rng(0)
    L, E, H, P, C = 17, 64, 64, 192, 20
    rows = rng.normal(size=(L, E))
    pool_mask = np.ones(L)
    hidden_w = rng.normal(size=(E, H))
    hidden_b = rng.normal(size=H)
    penult_w = rng.normal(size=(H, P))
    penult_b = rng.normal(size=P)
    drop = (rng.random(H) >= 0.1) / 0.9
    grad_emb = rng.normal(size=P)
    emb = rng.normal(size=P)
    weight = rng.normal(size=(C, P))

    cases = {}
    for name, backend in backends.items():
        _, pooled, _, h_act = backend.encoder_forward(
            rows, pool_mask, hidden_w, hidden_b, penult_w, penult_b,
            drop, True)
        cases[name] = {
            "encoder_forward": lambda b=backend: b.encoder_forward(
                rows, pool_mask, hidden_w, hidden_b, penult_w, penult_b,
                drop, True),
            "encoder_backward": lambda b=backend, p=pooled, h=h_act:
                b.encoder_backward(pool_mask, p, h, hidden_w, penult_w,
                                   drop, True, grad_emb),
            "aam_loss_grad": lambda b=backend: b.aam_loss_grad(
                emb, weight, 3, 0.2, 30.0, 1e-7),
        }

    print(f"{'kernel':<18} " +
          " ".join(f"{name + ' (us)':>15}" for name in cases) +
          ("   speedup" if len(cases) > 1 else ""))
    for kernel in ("encoder_forward", "encoder_backward", "aam_loss_grad"):
        times = {name: time_call(fns[kernel], repeats) * 1e6
                 for name, fns in cases.items()}
        row = f"{kernel:<18} " + " ".join(f"{times[n]:>15.2f}" for n in times)
        if "pure" in times and "compiled" in times:
            row += f"   {times['pure'] / times['compiled']:>6.1f}x"
        print(row)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20000)
    args = parser.parse_args()
    bench(args.repeats)


if __name__ == "__main__":
    main()
