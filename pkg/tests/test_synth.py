import numpy as np

from evquad.events import SensorGeometry, canonicalize, to_csv
from evquad.predictor import cross_entropy
from evquad.synth import SynthConfig, generate_synthetic
from evquad.training import sequence_pmfs


def test_deterministic():
    cfg = SynthConfig(duration_us=5000, seed=5)
    assert to_csv(generate_synthetic(cfg)) == to_csv(generate_synthetic(cfg))
    assert to_csv(generate_synthetic(SynthConfig(duration_us=5000, seed=6))) != \
        to_csv(generate_synthetic(cfg))


def test_empty_when_nothing_moves():
    assert len(generate_synthetic(SynthConfig(n_objects=0, noise_per_ms=0))) == 0


def test_valid_canonical_stream():
    cfg = SynthConfig(geometry=SensorGeometry(100, 60), duration_us=20_000, seed=1)
    events = generate_synthetic(cfg)
    c = canonicalize(events, cfg.geometry)
    assert c.duplicates_dropped == 0 and c.events == events
    assert events.t.max() < cfg.duration_us


def lag1_cross_entropy(pmfs):
    return np.mean([cross_entropy(b, a) for a, b in zip(pmfs, pmfs[1:])])


def test_objects_are_more_predictable_than_noise():
    g = SensorGeometry(640, 480)
    objects = SynthConfig(geometry=g, duration_us=30_000, noise_per_ms=0, seed=3)
    noise = SynthConfig(geometry=g, duration_us=30_000, n_objects=0, noise_per_ms=2000, seed=3)
    obj = sequence_pmfs(generate_synthetic(objects), g)
    nse = sequence_pmfs(generate_synthetic(noise), g)
    assert lag1_cross_entropy(obj) < lag1_cross_entropy(nse)
