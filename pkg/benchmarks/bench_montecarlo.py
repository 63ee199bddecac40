"""Time the numba and numpy round kernels on the same configuration.

    python benchmarks/bench_montecarlo.py --rounds 2000000 --repeat 3
"""

import argparse
import time

import numpy as np

from spsqss import _kernels
from spsqss._accel import HAVE_NUMBA
from spsqss.keyrate import ChannelConfig
from spsqss.montecarlo import SimConfig, sample_rounds
from spsqss.noise import Strategy


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--rounds", type=int, default=2_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    channel = ChannelConfig(F=0.95, eta_c=0.97, strategy=Strategy.POSTSELECT)
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    print(f"{'path':<8}{'backend':<8}{'seconds':>10}{'Mrounds/s':>12}")
    for path in ("fast", "optics"):
        cfg = SimConfig(args.rounds, seed=args.seed, channel=channel, path=path)
        results = {}
        for backend in backends:
            if backend == "numba":
                sample_rounds(SimConfig(10, channel=channel, path=path), "numba")  # compile outside the timing
            secs, arrays = best_of(lambda: sample_rounds(cfg, backend), args.repeat)
            results[backend] = arrays
            print(f"{path:<8}{backend:<8}{secs:>10.3f}{args.rounds / secs / 1e6:>12.2f}")
        if len(results) == 2:
            same = all(np.array_equal(results["numba"][f], results["numpy"][f]) for f in _kernels.OUTPUT_FIELDS)
            print(f"{path:<8}identical arrays: {same}")


if __name__ == "__main__":
    main()
