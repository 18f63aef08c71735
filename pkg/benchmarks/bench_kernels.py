"""Compare the compiled and pure-Python kernel backends.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``
"""
import argparse
import timeit

import numpy as np

from miaudit._core import _pykernels, compiled_available
from miaudit.synth import SbmSpec, gen_sbm_graph


def _mh_case(steps, n_free, seed=0):
    rng = np.random.default_rng(seed)
    table = rng.normal(size=1 << n_free)
    flips = (1 << rng.integers(0, n_free, steps)).astype(np.int64)
    log_u = np.log(rng.random(steps))
    return table, flips, log_u


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = {"python": _pykernels}
    if compiled_available():
        from miaudit._core import _ckernels

        backends["cython"] = _ckernels
    else:
        print("compiled extension not available; timing the Python backend only")

    table, flips, log_u = _mh_case(1_000_000, 7)
    g = gen_sbm_graph(SbmSpec(n=4000, num_classes=4, p_in=0.01, p_out=0.001, dim=4))
    keep = (np.arange(g.n) % 3 != 0).astype(np.uint8)
    eu, ew = g.edges[:, 0].copy(), g.edges[:, 1].copy()
    cases = {
        "mh_steps (1e6 steps, 2^7 states)": lambda k: k.mh_steps(table, 0, flips, log_u, 999, 500),
        f"masked_norm_coo (n={g.n}, {len(eu)} edges)": lambda k: k.masked_norm_coo(eu, ew, keep, g.n),
    }
    print(f"{'kernel':<42}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")
    for label, fn in cases.items():
        times = {name: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) for name, mod in backends.items()}
        row = f"{label:<42}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times.values())
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
