"""Regenerate src/evquad/data/default.lcw from the synthetic generator.

    python3 tools/train_default_model.py [-o PATH]
"""
import argparse
import logging
from pathlib import Path

from evquad.predictor import save_weights
from evquad.synth import SynthConfig, generate_synthetic
from evquad.training import TrainingConfig, build_dataset, fit, sequence_pmfs

TRAIN_SEEDS = (1, 2, 3, 4)
VAL_SEEDS = (5,)
OUT = Path(__file__).resolve().parents[1] / "src" / "evquad" / "data" / "default.lcw"


def pmfs(seeds):
    out = []
    for seed in seeds:
        cfg = SynthConfig(seed=seed)
        out.append(sequence_pmfs(generate_synthetic(cfg), cfg.geometry))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-o", "--output", type=Path, default=OUT)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    result = fit(build_dataset(pmfs(TRAIN_SEEDS)), build_dataset(pmfs(VAL_SEEDS)),
                 TrainingConfig(seed=0))
    save_weights(result.weights, args.output)
    print(f"best epoch {result.best_epoch}, val CE {result.best_val_loss:.5f} nats -> {args.output}")


if __name__ == "__main__":
    main()
