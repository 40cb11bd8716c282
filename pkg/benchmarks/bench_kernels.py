"""Compare the compiled and pure-Python message-passing kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per kernel and backend and the speedup, after
checking that both backends agree.
"""
import argparse
import time

import numpy as np

from imitate import _kernels


def _problem(K, T, smax, seed=0):
    rng = np.random.default_rng(seed)
    pi = rng.dirichlet(np.ones(K))
    trans = rng.dirichlet(np.ones(K), size=K)
    log_b = rng.normal(size=(T, K))
    log_pd = rng.normal(size=(K, smax))
    log_surv = np.logaddexp.accumulate(log_pd[:, ::-1], axis=1)[:, ::-1]
    return pi, trans, log_b, log_pd, log_surv


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = _kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the python backend is available")
    cases = [
        ("forward_backward K=7 T=2000", lambda b, p: _kernels.forward_backward(p[0], p[1], p[2], backend=b), (7, 2000, 1)),
        ("viterbi K=7 T=2000", lambda b, p: _kernels.viterbi(np.log(p[0]), np.log(p[1]), p[2], backend=b), (7, 2000, 1)),
        ("hsmm_messages K=5 T=400 smax=100",
         lambda b, p: _kernels.hsmm_messages(np.log(p[0]), np.log(p[1]), p[3], p[4], p[2], backend=b), (5, 400, 100)),
    ]
    print(f"{'kernel':<36}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn, shape in cases:
        prob = _problem(*shape)
        times, outs = [], []
        for b in backends:
            t, out = _best(lambda: fn(b, prob), args.repeat)
            times.append(t)
            outs.append(out)
        if len(outs) == 2:
            for a, c in zip(outs[0], outs[1]):
                np.testing.assert_allclose(np.asarray(a, dtype=float), np.asarray(c, dtype=float), rtol=1e-9, atol=1e-9)
        speed = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 else ""
        print(f"{name:<36}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
