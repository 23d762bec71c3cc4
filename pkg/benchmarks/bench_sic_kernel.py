"""Time the compiled SIC kernel against the numpy fallback on one packed batch.

    python benchmarks/bench_sic_kernel.py --trials 2000 --repeat 3
"""
import argparse
import time

import numpy as np

from codedcache import kernels
from codedcache.simulator import SimConfig, _run_chunk, _draw_raw


def packed_batch(cfg, trials):
    d2, fade, offsets = [], [], [0]
    for i in range(trials):
        a, b, _ = _draw_raw(cfg, i)
        d2.append(a)
        fade.append(b)
        offsets.append(offsets[-1] + a.size)
    return np.concatenate(d2), np.concatenate(fade), np.asarray(offsets, dtype=np.int64)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--layers", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cfg = SimConfig(trials=args.trials, max_layers=args.layers)
    d2, fade, offsets = packed_batch(cfg, args.trials)
    print(f"batch: {args.trials} trials, {d2.size} SBSs, K={args.layers}")

    t_py, ref = best_of(lambda: kernels.python_sir_layers_batch(d2, fade, offsets, 4.0, args.layers), args.repeat)
    print(f"python  : {t_py:8.4f} s  ({1e6 * t_py / args.trials:8.1f} us/trial)")
    if kernels.compiled_sir_layers_batch is None:
        print("compiled: not built")
        return
    t_c, out = best_of(lambda: kernels.compiled_sir_layers_batch(d2, fade, offsets, 4.0, args.layers), args.repeat)
    print(f"compiled: {t_c:8.4f} s  ({1e6 * t_c / args.trials:8.1f} us/trial)")
    print(f"speedup : {t_py / t_c:.1f}x, max rel diff {np.nanmax(np.abs(out / ref - 1)):.2e}")

    t_all, _ = best_of(lambda: _run_chunk(cfg, 0, args.trials), 1)
    print(f"end-to-end chunk incl. sampling: {t_all:.3f} s")


if __name__ == "__main__":
    main()
