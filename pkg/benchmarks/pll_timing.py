"""Timing comparison of the compiled tracking kernel vs the pure-Python loop.

Run:  python benchmarks/pll_timing.py
"""
import time

import numpy as np

from blindcfo.pll import PllConfig, _quartic_init, _track_python
from blindcfo.signal_model import QAM4_POINTS, generate_symbols

try:
    from blindcfo import _tracking
except ImportError:
    _tracking = None


def make_args(n, cfg):
    s = generate_symbols(1, n, seed=17).s[0]
    rng = np.random.default_rng(18)
    x = s * np.exp(2j * np.pi * 0.01 * np.arange(n)) \
        + 0.05 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    phase0, v0 = _quartic_init(x, cfg.min_acquire)
    return (x, QAM4_POINTS.astype(complex), cfg.kp, cfg.ki, cfg.acq_kp,
            cfg.acq_ki, cfg.lock_threshold, cfg.lock_alpha, cfg.min_acquire,
            phase0, v0)


def best_of(fn, args, repeats):
    fn(*args)  # warmup
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    cfg = PllConfig()
    print(f"{'N':>8} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for n in (512, 2048, 8192, 32768):
        args = make_args(n, cfg)
        t_py = best_of(_track_python, args, repeats=5)
        if _tracking is None:
            print(f"{n:>8} {t_py * 1e3:>10.3f}ms {'n/a':>12} {'n/a':>9}")
            continue
        t_cy = best_of(_tracking.track, args, repeats=20)
        print(f"{n:>8} {t_py * 1e3:>10.3f}ms {t_cy * 1e3:>10.3f}ms {t_py / t_cy:>8.1f}x")
    if _tracking is None:
        print("compiled kernel not built; install with the extension to compare")


if __name__ == "__main__":
    main()
