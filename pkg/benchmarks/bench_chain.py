"""Benchmark the compiled chain kernel against the NumPy fallback.

Runs the batched deterministic chain at the shapes the experiment protocols
actually use (small d, two components, tens-to-hundreds of draws, a
50-step ladder) and reports per-call times plus the end-to-end effect on the
linearity protocol.

    python3 benchmarks/bench_chain.py
"""

from __future__ import annotations

import time

import numpy as np

from ccslab import linearity_protocol, testbeds
from ccslab._kernels import _ref
from ccslab.sampler import _chain_tables

try:
    from ccslab._kernels import _chainkern
except ImportError:
    _chainkern = None


def time_call(fn, *args, repeats: int = 20) -> float:
    fn(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def main() -> None:
    schedule = testbeds.default_schedule()
    model = testbeds.mixture_model()
    tables = _chain_tables(schedule, model, schedule.T, None)
    rng = np.random.default_rng(0)

    print(f"{'batch':>6} {'d':>4} {'numpy':>12} {'compiled':>12} {'speedup':>8}")
    for n in (24, 64, 256, 1024):
        x = np.ascontiguousarray(rng.standard_normal((n, model.d)))
        t_ref = time_call(_ref.run_mixture_chain, x, *tables)
        if _chainkern is None:
            print(f"{n:>6} {model.d:>4} {t_ref * 1e3:>10.2f}ms {'absent':>12} {'':>8}")
            continue
        t_ext = time_call(_chainkern.run_mixture_chain, x, *tables)
        agree = np.max(
            np.abs(
                _ref.run_mixture_chain(x, *tables)
                - _chainkern.run_mixture_chain(x, *tables)
            )
        )
        print(
            f"{n:>6} {model.d:>4} {t_ref * 1e3:>10.2f}ms {t_ext * 1e3:>10.2f}ms "
            f"{t_ref / t_ext:>7.1f}x  (max dev {agree:.2e})"
        )

    targets = testbeds.draw_targets(model, 4, 0)

    def protocol():
        return linearity_protocol(
            schedule, model, targets, n_scales=8, samples_per_scale=24, seed=0
        )

    # End-to-end: force each backend through the dispatch layer.
    import ccslab._kernels as kernels

    results = {}
    for name, fn in (("numpy", _ref.run_mixture_chain),
                     ("compiled", None if _chainkern is None else _chainkern.run_mixture_chain)):
        if fn is None:
            continue
        saved = kernels.run_mixture_chain
        kernels.run_mixture_chain = fn
        try:
            start = time.perf_counter()
            protocol()
            results[name] = time.perf_counter() - start
        finally:
            kernels.run_mixture_chain = saved
    line = "  ".join(f"{k}: {v:.3f}s" for k, v in results.items())
    print(f"linearity protocol (4 targets x 8 scales x 24 draws): {line}")


if __name__ == "__main__":
    main()
