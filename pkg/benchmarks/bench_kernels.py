"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--n 200] [--m 50] [--sweeps 200]

Times each kernel on arrays shaped like the reference simulation design and
then a run of full sampler sweeps on a simulated dataset.
"""

import argparse
import timeit

import numpy as np

from aldrm import _kernels as K
from aldrm import simgen
from aldrm.modelspec import build_design, simulation_spec
from aldrm.sampler import Chain, SamplerConfig


def kernel_cases(n, m, rng):
    N = n * m
    resid = rng.standard_normal(N)
    sigma = np.exp(rng.normal(-0.5, 0.3, N))
    tau = rng.uniform(0.1, 0.9, N)
    w = rng.exponential(1.0, N)
    normals = rng.standard_normal(N)
    uniforms = rng.uniform(size=N)
    offsets = np.arange(0, N + 1, m, dtype=np.intp)
    A = np.ascontiguousarray(rng.standard_normal((N, 7)))
    X = np.ascontiguousarray(rng.standard_normal((N, 5)))
    Z = np.ascontiguousarray(rng.standard_normal((N, 3)))
    coef = rng.standard_normal(5)
    eff = np.ascontiguousarray(rng.standard_normal((n, 3)))
    subject = np.repeat(np.arange(n, dtype=np.intp), m)
    return {
        "latent_weights": lambda: K.latent_weights(resid, sigma, tau, normals, uniforms),
        "segment_aug_loglik": lambda: K.segment_aug_loglik(resid, sigma, tau, w, offsets, True),
        "segment_gauss_loglik": lambda: K.segment_gauss_loglik(resid, sigma, offsets),
        "segment_gram": lambda: K.segment_gram(A, w, offsets),
        "linear_predictor": lambda: K.linear_predictor(X, coef, Z, eff, subject),
    }


def time_call(fn, repeat=5):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--m", type=int, default=50)
    ap.add_argument("--sweeps", type=int, default=200)
    args = ap.parse_args()

    backends = K.available_backends()
    print(f"backends: {', '.join(backends)}  (n={args.n}, m={args.m})")
    cases = kernel_cases(args.n, args.m, np.random.default_rng(0))
    print(f"{'kernel':24s}" + "".join(f"{b:>14s}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    for name in cases:
        times = []
        for b in backends:
            with K.backend(b):
                times.append(time_call(cases[name]))
        line = f"{name:24s}" + "".join(f"{t * 1e6:12.1f}us" for t in times)
        if len(times) > 1:
            line += f"   {times[0] / times[1]:7.1f}x"
        print(line)

    ds = simgen.generate(simgen.Scenario(n=args.n, m=args.m, seed=1))
    bundle = build_design(ds, simulation_spec("ALDRM"))
    cfg = SamplerConfig(n_chains=1, n_iter=args.sweeps + 1, burn_in=args.sweeps, thin=1)
    sweep_times = []
    for b in backends:
        with K.backend(b):
            chain = Chain(bundle, cfg, np.random.default_rng(0))
            chain.sweep()
            t = timeit.timeit(chain.sweep, number=args.sweeps) / args.sweeps
            sweep_times.append(t)
    line = f"{'full ALDRM sweep':24s}" + "".join(f"{t * 1e3:12.2f}ms" for t in sweep_times)
    if len(sweep_times) > 1:
        line += f"   {sweep_times[0] / sweep_times[1]:7.1f}x"
    print(line)


if __name__ == "__main__":
    main()
