"""Benchmark the compiled kernels against the numpy fallback."""

import time

import numpy as np

from .backend import get_kernels
from .config import ThresholdConfig
from .measures import _smoother_weights, trim_correction
from .simulate import draw_replica_noise


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def benchmark_cases(repeat=3, n_days=250, m=120, n_paths=512, n_steps=720):
    """Time each kernel on both backends; returns rows of results."""
    backends = {"numpy": get_kernels("numpy")}
    try:
        backends["cython"] = get_kernels("cython")
    except ImportError:
        pass

    n_total = n_days * m
    z, uj, zj = draw_replica_noise(0, 0, n_total)
    sde_args = (5.14e-2, 4.32e-4, 9.72e-3, -0.5, 2.63, 4.32e-4, 3.29e-2,
                -0.1, 0.72, -8e-3, 8.5e-3, 0.0, False, 1.0 / m,
                n_days, m, 1, 0, 4.32e-4, 4.32e-4)

    rng = np.random.default_rng(1)
    zt = rng.standard_normal((n_paths, n_steps, 4))
    ujt = rng.random((n_paths, n_steps))
    zjt = rng.standard_normal((n_paths, n_steps))
    cp = np.array([n_steps], dtype=np.int64)

    config = ThresholdConfig()
    day = rng.standard_normal(m) * 0.003
    weights = np.array(_smoother_weights(config))
    corr = trim_correction(config.c_tau)
    thr = np.full(m, (3.0 * 0.003) ** 2)

    rows = []
    for name, kern in backends.items():
        t_sde = _time(lambda: kern.euler_intraday(z, uj, zj, *sde_args), repeat)
        t_term = _time(lambda: kern.euler_terminal(
            zt, ujt, zjt, *sde_args[:11], 0.0, True, 1.0 / 24, cp,
            4.32e-4, 4.32e-4), repeat)
        t_lv = _time(lambda: [kern.local_variance_day(
            day, weights, 9.0, config.lv_passes, corr, 1e-12)
            for _ in range(200)], repeat)
        t_tm = _time(lambda: [kern.tmpv_day(
            day, thr, (1.0, 1.0), (1.09, 1.09), 1.0, np.pi / 2, True)
            for _ in range(200)], repeat)
        rows.append((name, t_sde, t_term, t_lv, t_tm))
    return rows


def run_benchmark(repeat=3):
    rows = benchmark_cases(repeat=repeat)
    header = (f"{'backend':<8}{'sde 250dx120':>14}{'mc 512x720':>14}"
              f"{'localvar x200':>15}{'tmpv x200':>12}")
    print(header)
    print("-" * len(header))
    base = None
    for name, *times in rows:
        print(f"{name:<8}" + "".join(f"{t * 1e3:>13.1f}m" for t in times))
        if name == "numpy":
            base = times
    if base and len(rows) > 1:
        for name, *times in rows:
            if name != "numpy":
                speed = ", ".join(f"{b / t:.1f}x" for b, t in zip(base, times))
                print(f"speedup {name} vs numpy: {speed}")
    return rows
