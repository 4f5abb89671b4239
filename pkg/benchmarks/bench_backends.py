"""Time the compiled kernels against the numpy fallback on one synthetic sequence.

    python3 benchmarks/bench_backends.py --duration 20000 --repeats 3

Every kernel's output is compared across backends before timings are printed.
"""
import argparse
import statistics
import time

import numpy as np

from evquad import _backend
from evquad.events import SensorGeometry, canonicalize
from evquad.predictor import default_weights
from evquad.quadtree import required_depth
from evquad.synth import SynthConfig, generate_synthetic


def median_seconds(fn, repeats):
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def run_backend(kernels, ev, starts, dts, depth, model, k, repeats):
    pol = (ev.p > 0).astype(np.uint8)
    n_units = len(starts) - 1
    res = {}
    res["occupancy"] = median_seconds(
        lambda: kernels.occupancy_batch(ev.x, ev.y, starts, depth), repeats)
    nibbles, nib_starts = res["occupancy"][1]
    res["reconstruct"] = median_seconds(
        lambda: kernels.reconstruct_batch(nibbles, nib_starts, depth), repeats)
    res["encode_body"] = median_seconds(
        lambda: kernels.encode_body(nibbles, nib_starts, pol, starts, dts, model, k), repeats)
    body = res["encode_body"][1][0]
    res["parse_body"] = median_seconds(
        lambda: kernels.parse_body(body, 0, n_units, depth, k, model), repeats)
    return res


def same(a, b):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(a, b)
    if isinstance(a, (tuple, list)):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    if hasattr(a, "__dataclass_fields__"):
        return all(same(getattr(a, f), getattr(b, f)) for f in a.__dataclass_fields__)
    return a == b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=int, default=20_000, help="microseconds of synthetic data")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--k", type=int, default=1)
    args = ap.parse_args(argv)

    if _backend.compiled is None:
        raise SystemExit("compiled kernels unavailable; build with pip install -e . --no-build-isolation")
    geometry = SensorGeometry(640, 480)
    ev, starts, _ = canonicalize(
        generate_synthetic(SynthConfig(duration_us=args.duration, seed=args.seed)), geometry)
    unit_t = ev.t[starts[:-1]]
    dts = np.diff(unit_t, prepend=unit_t[0]).astype(np.uint64)
    depth = required_depth(geometry)
    model = default_weights().arrays()
    print(f"{len(ev)} events, {len(starts) - 1} units, depth {depth}, k={args.k}")

    results = {name: run_backend(mod, ev, starts, dts, depth, model, args.k, args.repeats)
               for name, mod in (("compiled", _backend.compiled), ("python", _backend.pure))}
    print(f"{'kernel':<12} {'compiled ms':>12} {'python ms':>12} {'speedup':>9}  outputs")
    for kernel in results["compiled"]:
        tc, oc = results["compiled"][kernel]
        tp, op = results["python"][kernel]
        print(f"{kernel:<12} {tc * 1e3:12.2f} {tp * 1e3:12.2f} {tp / tc:8.1f}x  "
              f"{'identical' if same(oc, op) else 'DIFFER'}")


if __name__ == "__main__":
    main()
