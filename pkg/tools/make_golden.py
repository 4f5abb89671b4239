"""Regenerate the bitstream-stability fixtures in tests/data.

Only run this after an intentional format or default-model change.
"""
from pathlib import Path

from evquad.codec import encode_stream
from evquad.events import to_csv
from evquad.predictor import ModelWeights, default_weights
from evquad.synth import SynthConfig, generate_synthetic

GOLDEN_CONFIG = SynthConfig(seed=42, duration_us=10_000)
DATA = Path(__file__).resolve().parents[1] / "tests" / "data"


def main():
    events = generate_synthetic(GOLDEN_CONFIG)
    g = GOLDEN_CONFIG.geometry
    (DATA / "golden_seed42.csv").write_bytes(to_csv(events))
    (DATA / "golden_seed42.lcl").write_bytes(encode_stream(events, g, default_weights()))
    (DATA / "golden_seed42_uniform.lcl").write_bytes(encode_stream(events, g, ModelWeights.zeros()))
    print(f"{len(events)} events -> {DATA}")


if __name__ == "__main__":
    main()
