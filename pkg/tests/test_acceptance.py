"""Acceptance criteria, one test per criterion.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary ends with one
PASS/FAIL/WARN line per criterion.
"""
import hashlib
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from evquad.bitio import BitReader, BitWriter
from evquad.codec import decode_stream, encode_stream, encode_with_info
from evquad.entropy import rice_decode, rice_encode
from evquad.errors import CorruptStreamError
from evquad.events import SensorGeometry, parse_events
from evquad.metrics import avg_event_size, compression_ratio, k_sweep, kmac_per_mevent
from evquad.pmf import PmfBuffer
from evquad.predictor import ModelWeights, cross_entropy, mac_count, predict
from evquad.quadtree import (OccupancyStream, build_occupancy, expected_length, popcount,
                             reconstruct_coords)
from evquad.synth import SynthConfig, generate_synthetic
from evquad.training import (Network, TrainingConfig, build_dataset, fit,
                             gradient_check_report, sequence_pmfs)

from helpers import bits_of, naive_occupancy, random_events, random_pmf, rice_bits

DATA = Path(__file__).parent / "data"
GOLDEN_CONFIG = SynthConfig(seed=42, duration_us=10_000)
GOLDEN_SHA256 = {
    "golden_seed42.csv": "e62021f9999fce7ef5648f0618724b80e956ab0bc86e15ca9bab6a0e7de7c510",
    "golden_seed42.lcl": "90ee41d027c676902195690a540983063af7dc08badeb2f911bbc09fb241b21c",
    "golden_seed42_uniform.lcl": "9fd3f664ded5f38357b5b18372a4f62e8244abc7a8d3e326ef27eca35d76719f",
}
K_TREND_SEEDS = (11, 12, 13)
criterion = pytest.mark.criterion


def log_uniform_int(rng, lo, hi):
    return int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))


def acceptance_sequences(n=500, max_events=60_000):
    """Geometries up to 1280x720, 1..1000 units, 1 event/unit up to 5% occupancy."""
    rng = np.random.default_rng(2024)
    extremes = [(1280, 720, 1000, 1.0), (1280, 720, 1, 0.05 * 1280 * 720),
                (1, 1, 1000, 1.0), (2, 2, 1000, 0.2), (1280, 1, 50, 64.0)]
    for i in range(n):
        if i < len(extremes):
            w, h, units, per_unit = extremes[i]
        else:
            w, h = log_uniform_int(rng, 1, 1280), log_uniform_int(rng, 1, 720)
            units = log_uniform_int(rng, 1, 1000)
            per_unit = math.exp(rng.uniform(0, math.log(max(1.0, 0.05 * w * h))))
        units = max(1, min(units, int(max_events // per_unit)))
        g = SensorGeometry(w, h)
        yield rng, g, random_events(rng, g, units, per_unit, max_gap=int(rng.choice([1, 50, 10**6])))


@criterion(1, "lossless round trip, 500 randomized sequences")
def test_c01_lossless_round_trip(model, record_property):
    start = time.perf_counter()
    models = [model, ModelWeights.zeros(), ModelWeights.random(5, scale=0.5)]
    n_events = max_per_unit = 0
    for i, (rng, g, events) in enumerate(acceptance_sequences()):
        w = models[i % 3]
        k = int(rng.choice([0, 1, 1, 2, 3]))
        assert decode_stream(encode_stream(events, g, w, k=k), w) == events, f"sequence {i}"
        n_events += len(events)
        max_per_unit = max(max_per_unit, int(np.unique(events.t, return_counts=True)[1].max()))
    elapsed = time.perf_counter() - start
    record_property("detail", f"{n_events} events, densest unit {max_per_unit}, {elapsed:.1f} s")
    assert elapsed < 120


@criterion(2, "Rice coding exhaustive oracle, n in [0,255], k in [0,4]")
def test_c02_rice_oracle(record_property):
    for k in range(5):
        for n in range(256):
            w = BitWriter()
            rice_encode(n, k, w)
            nbits = w.bit_length
            assert nbits == n // 2 ** k + 1 + k
            data = w.getvalue()
            assert bits_of(data)[:nbits] == rice_bits(n, k)
            r = BitReader(data)
            assert rice_decode(r, k) == n and r.bit_position == nbits
    record_property("detail", "1280 codewords")


@criterion(3, "quadtree oracle, 1000 random coordinate sets")
def test_c03_quadtree_oracle(record_property):
    rng = np.random.default_rng(3)
    for _ in range(1000):
        depth = int(rng.integers(1, 12))
        side = 1 << depth
        n = min(side * side, log_uniform_int(rng, 1, 400))
        flat = np.sort(rng.choice(side * side, n, replace=False))
        coords = sorted(zip((flat // side).tolist(), (flat % side).tolist()))
        stream = build_occupancy(coords, depth)
        nib = stream.nibbles
        assert np.all((nib >= 1) & (nib <= 15))
        levels = stream.levels()
        assert len(levels[0]) == 1
        assert all(len(b) == popcount(a).sum() for a, b in zip(levels, levels[1:]))
        assert len(nib) == expected_length(stream)
        assert popcount(levels[-1]).sum() == len(coords)
        if depth <= 6:
            assert nib.tolist() == naive_occupancy(coords, depth)
        assert reconstruct_coords(stream) == coords
        assert reconstruct_coords(OccupancyStream(nib.copy(), depth)) == coords
    with pytest.raises(CorruptStreamError):
        reconstruct_coords(OccupancyStream(np.array([8, 0], np.uint8), 2))


@criterion(4, "gradient check vs central differences, max rel. error <= 1e-4")
def test_c04_gradient_check(record_property):
    rng = np.random.default_rng(4)
    X = np.array([[random_pmf(rng) for _ in range(10)] for _ in range(100)])
    Y = np.array([random_pmf(rng) for _ in range(100)])
    net = Network(seed=4)
    for name, value in net.params.items():
        net.params[name] = value + 0.1 * rng.standard_normal(value.shape)
    net.running = {k: (rng.random(v.shape) + 0.5 if k[0] == "v" else 0.1 * rng.standard_normal(v.shape))
                   for k, v in net.running.items()}
    reports = {mode: gradient_check_report(net, X, Y, train=mode == "train", step=1e-5)
               for mode in ("eval", "train")}
    record_property("detail", ", ".join(
        f"{m} {r.max_rel_error:.2e} over {r.checked} entries ({r.kinks} at kinks)"
        for m, r in reports.items()))
    for r in reports.values():
        assert r.max_rel_error <= 1e-4
        assert r.kinks <= 0.01 * (r.checked + r.kinks)


@criterion(5, "predicted PMFs valid on 10,000 random inputs")
def test_c05_pmf_validity(record_property):
    rng = np.random.default_rng(5)
    worst = 0.0
    for m in range(100):
        w = ModelWeights.random(m, scale=float(np.exp(rng.uniform(np.log(0.01), np.log(10)))))
        for _ in range(100):
            buf = PmfBuffer()
            buf.history[:] = [random_pmf(rng, sparsity=rng.random()) for _ in range(10)]
            q = predict(buf, w)
            assert np.all(q > 0)
            worst = max(worst, abs(q.sum() - 1))
    record_property("detail", f"max |sum - 1| = {worst:.1e}")
    assert worst <= 1e-6


@criterion(6, "Gibbs inequality on 10,000 random PMF pairs")
def test_c06_gibbs(record_property):
    rng = np.random.default_rng(6)
    margin = np.inf
    for _ in range(10_000):
        p = random_pmf(rng, sparsity=rng.random(), zero_first=False)
        q = random_pmf(rng, sparsity=rng.random(), zero_first=False)
        gap = cross_entropy(p, q) - cross_entropy(p, p)
        margin = min(margin, gap)
        assert gap >= -1e-9
    record_property("detail", f"min H(p,q) - H(p,p) = {margin:.2e}")


@criterion(7, "k=1 maximizes CR over k in {0,1,2,3} on three synthetic sequences")
def test_c07_k_trend(model, record_property):
    strict = 0
    rows = []
    for seed in K_TREND_SEEDS:
        cfg = SynthConfig(seed=seed)
        sweep = k_sweep(generate_synthetic(cfg), cfg.geometry, model)
        rows.append(f"seed {seed}: " + " ".join(f"{sweep[k]:.3f}" for k in range(4)))
        assert all(sweep[1] >= sweep[k] for k in (0, 2, 3)), rows[-1]
        strict += all(sweep[1] > sweep[k] for k in (0, 2, 3))
    record_property("detail", "; ".join(rows))
    assert strict >= 1


@criterion(8, "trained model beats the uniform baseline")
def test_c08_learning_benefit(record_property):
    def pmfs(seeds):
        return [sequence_pmfs(generate_synthetic(SynthConfig(seed=s)), SynthConfig().geometry)
                for s in seeds]

    start = time.perf_counter()
    res = fit(build_dataset(pmfs((21, 22))), build_dataset(pmfs((23,))), TrainingConfig())
    train_s = time.perf_counter() - start
    learned = uniform = n = 0
    for seed in (24, 25):
        cfg = SynthConfig(seed=seed)
        events = generate_synthetic(cfg)
        learned += 8 * len(encode_stream(events, cfg.geometry, res.weights))
        uniform += 8 * len(encode_stream(events, cfg.geometry, ModelWeights.zeros()))
        n += len(events)
    record_property("detail", f"bits/event {learned / n:.3f} vs uniform {uniform / n:.3f}; "
                              f"val CE {res.best_val_loss:.4f} < ln16 {math.log(16):.4f}; "
                              f"training {train_s:.0f} s")
    assert learned / n < uniform / n
    assert res.best_val_loss < math.log(16)
    assert train_s < 600


@criterion(9, "complexity accounting: 2208 MACs, kMAC/MEvent hand values")
def test_c09_complexity(record_property):
    assert mac_count() == 16 * 10 + 16 * 64 + 64 * 16 == 2208
    for units, events in ((1, 2208 * 1000), (37, 123_457)):
        want = Fraction(2208 * units) / (Fraction(1000) * Fraction(events, 10**6))
        assert kmac_per_mevent(units, events) == pytest.approx(float(want), rel=1e-9)
    assert kmac_per_mevent(0, 0) == 0
    record_property("detail", f"U=1,E=2.208M -> {kmac_per_mevent(1, 2208 * 1000):.6f}")


@criterion(10, "CR x S == 32 on every encoded file")
def test_c10_metric_identities(model, record_property):
    assert compression_ratio(1000, bytes(2000)) == 2.0
    assert compression_ratio(1000, bytes(4000)) == 1.0
    assert avg_event_size(bytes(2000), 1000) == 16.0
    assert avg_event_size(bytes(4000), 1000) == 32.0
    files = 0
    for i, (_, g, events) in enumerate(acceptance_sequences(60, 5000)):
        data, info = encode_with_info(events, g, model)
        cr, s = compression_ratio(info.n_events, data), avg_event_size(data, info.n_events)
        assert Fraction(32 * info.n_events, 8 * len(data)) * Fraction(8 * len(data), info.n_events) == 32
        assert abs(cr * s - 32) <= 32 * 4 * np.finfo(float).eps
        files += 1
    record_property("detail", f"{files} files")


@criterion(11, "quadtree-exclusive encode throughput >= 0.5 Mev/s (soft)")
def test_c11_throughput(model, record_property):
    cfg = SynthConfig(seed=42)
    events = generate_synthetic(cfg)
    encode_with_info(events, cfg.geometry, model)  # warm-up
    runs = []
    for _ in range(5):
        t0 = time.perf_counter()
        _, info = encode_with_info(events, cfg.geometry, model)
        runs.append(time.perf_counter() - t0 - info.timings.quadtree)
    rate = len(events) / float(np.median(runs)) / 1e6
    from evquad import BACKEND
    msg = f"{rate:.2f} Mev/s ({BACKEND} kernels)"
    if rate < 0.5:
        record_property("warning", "below target: " + msg)
    record_property("detail", msg)


@criterion(12, "golden file: seed-42 sequence encodes byte-identically")
def test_c12_golden(model, uniform, record_property):
    for name, digest in GOLDEN_SHA256.items():
        assert hashlib.sha256((DATA / name).read_bytes()).hexdigest() == digest, name
    csv = (DATA / "golden_seed42.csv").read_bytes()
    events = parse_events(csv)
    regenerated = generate_synthetic(GOLDEN_CONFIG)
    assert regenerated == events
    g = GOLDEN_CONFIG.geometry
    for weights, name in ((model, "golden_seed42.lcl"), (uniform, "golden_seed42_uniform.lcl")):
        golden = (DATA / name).read_bytes()
        assert encode_stream(events, g, weights) == golden
        assert decode_stream(golden) == events
    record_property("detail", f"{len(events)} events, sha256 {GOLDEN_SHA256['golden_seed42.lcl'][:12]}")
