"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]

Each row reports the best wall time per backend and checks that the two
backends return the same numbers.
"""

import argparse
import time

import numpy as np

from abcglm.kernels import GAUSS_REACH, available_backends
from abcglm.rng import PURPOSE_MODEL, derive_key


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(scale):
    key = derive_key(2024)
    rng = np.random.default_rng(1)
    n_sim = int(200_000 * scale)
    streams = np.arange(n_sim, dtype=np.uint64)
    thetas = rng.uniform(0.005, 10.0, n_sim)
    n_pts, n_comp = int(512 * scale) or 1, int(5000 * scale) or 1
    grid = np.linspace(0.0, 10.0, n_pts)
    centers = np.sort(rng.uniform(0.0, 10.0, n_comp))
    logw = rng.normal(size=n_comp)
    sd = 0.05
    pts2 = rng.normal(size=(n_pts, 2))
    cen2 = rng.normal(size=(n_comp, 2))
    return {
        f"uniforms ({n_sim} x 4)":
            lambda k: k.uniforms(key, streams, PURPOSE_MODEL, 4),
        f"coalescent n_seq=20 ({n_sim})":
            lambda k: k.coalescent_segsites(thetas, 20, key, streams, PURPOSE_MODEL),
        f"poisson ({n_sim})":
            lambda k: k.poisson_counts(thetas * 3, key, streams, PURPOSE_MODEL, 0),
        f"mixture 2-D ({n_pts} x {n_comp})":
            lambda k: k.mixture_logsumexp(pts2, cen2, logw),
        f"mixture 1-D ({n_pts} x {n_comp})":
            lambda k: k.mixture_logsumexp(grid[:, None] / sd, centers[:, None] / sd, logw),
        f"windowed 1-D ({n_pts} x {n_comp})":
            lambda k: k.windowed_logsumexp_1d(grid / sd, centers / sd, logw, GAUSS_REACH),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--scale", type=float, default=1.0,
                        help="multiply every problem size by this factor")
    args = parser.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; run `python3 setup.py build_ext --inplace`")
    names = list(backends)
    print(f"{'kernel':36s}" + "".join(f"{n:>12s}" for n in names) + f"{'speedup':>10s}  agree")
    for label, call in cases(args.scale).items():
        times, outs = [], []
        for name in names:
            t, out = best_time(lambda: call(backends[name]), args.repeat)
            times.append(t)
            outs.append(np.asarray(out))
        agree = all(np.allclose(outs[0], o, rtol=1e-12, atol=0) for o in outs[1:])
        speed = times[0] / times[-1] if len(times) > 1 else 1.0
        print(f"{label:36s}" + "".join(f"{t * 1e3:10.1f}ms" for t in times)
              + f"{speed:9.1f}x  {'yes' if agree else 'NO'}")


if __name__ == "__main__":
    main()
