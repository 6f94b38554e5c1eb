"""Compare the compiled Viterbi kernel with the numpy fallback.

Run from the repository root after an editable install::

    python benchmarks/bench_kernels.py [--samples 225000] [--states 16] [--repeat 3]
"""
import argparse
import time

import numpy as np

from ecgseg import _fallback
from ecgseg.features import cwt
from ecgseg.hmm import StateConfig, build_transition_matrix

try:
    from ecgseg import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=225_000, help="sequence length (15 min at 250 Hz)")
    ap.add_argument("--states", type=int, default=16, choices=(6, 8, 11, 16, 19, 23))
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    preset = {23: "22"}.get(args.states, str(args.states))
    A = build_transition_matrix(StateConfig.preset(preset))
    K = A.shape[0]
    with np.errstate(divide="ignore"):
        log_trans = np.log(A)
    log_init = np.log(np.full(K, 1.0 / K))
    log_emis = rng.normal(size=(args.samples, K))
    x = rng.normal(size=args.samples)

    backends = {"python": _fallback}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled kernels not built; only the fallback is timed")

    print(f"T={args.samples} K={K}, best of {args.repeat}")
    results = {}
    for name, mod in backends.items():
        v = best_of(lambda: mod.viterbi_kernel(log_emis, log_trans, log_init), args.repeat)
        results[name] = v
        print(f"{name:>7}: viterbi {v * 1e3:9.1f} ms")
    c = best_of(lambda: cwt(x), args.repeat)
    print(f"    cwt (3 scales, np.correlate): {c * 1e3:.1f} ms")
    if len(results) == 2:
        print(f"viterbi speed-up: x{results['python'] / results['cython']:.1f}")
        same = np.array_equal(
            np.asarray(_kernels.viterbi_kernel(log_emis, log_trans, log_init)[0]),
            _fallback.viterbi_kernel(log_emis, log_trans, log_init)[0],
        )
        print(f"identical Viterbi paths: {same}")


if __name__ == "__main__":
    main()
