"""``evquad`` command line: encode, decode, train, bench, gen."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .codec import decode_stream, encode_with_info
from .entropy import DEFAULT_K, MAX_K
from .errors import EvquadError
from .events import EventArray, SensorGeometry, parse_events, to_csv, to_raw32
from .metrics import bench_sequence, format_k_sweep, format_table, k_sweep
from .predictor import ModelWeights, default_weights, load_weights, save_weights
from .synth import SynthConfig, generate_synthetic

log = logging.getLogger("evquad")

FORMATS = ("csv", "raw32")
TS_SUFFIX = ".ts"


def infer_geometry(events: EventArray) -> SensorGeometry:
    """Smallest sensor containing every event."""
    if len(events) == 0:
        return SensorGeometry(1, 1)
    return SensorGeometry(int(events.x.max()) + 1, int(events.y.max()) + 1)


def _format_of(path: Path, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "raw32" if path.suffix in (".raw32", ".bin") else "csv"


def read_events(path: Path, fmt: str | None = None, timestamps: Path | None = None,
                geometry: SensorGeometry | None = None) -> EventArray:
    fmt = _format_of(path, fmt)
    ts = None
    if fmt == "raw32":
        ts_path = timestamps or path.with_name(path.name + TS_SUFFIX)
        ts = ts_path.read_bytes()
    return parse_events(path.read_bytes(), fmt, timestamps=ts, geometry=geometry)


def write_events(events: EventArray, path: Path, fmt: str | None = None) -> None:
    if _format_of(path, fmt) == "raw32":
        records, ts = to_raw32(events)
        path.write_bytes(records)
        path.with_name(path.name + TS_SUFFIX).write_bytes(ts)
    else:
        path.write_bytes(to_csv(events))


def _weights(args) -> ModelWeights:
    if getattr(args, "uniform_baseline", False):
        return ModelWeights.zeros()
    if args.model:
        return load_weights(args.model)
    return default_weights()


# ------------------------------------------------------------------ commands

def cmd_encode(args) -> int:
    events = read_events(args.input, args.format, args.timestamps, args.geometry)
    geometry = args.geometry or infer_geometry(events)
    data, info = encode_with_info(events, geometry, _weights(args), args.k)
    args.output.write_bytes(data)
    if info.duplicates_dropped:
        log.warning("dropped %d duplicate event(s)", info.duplicates_dropped)
    log.info("%d events in %d units -> %d bytes", info.n_events, info.header.unit_count, len(data))
    return 0


def cmd_decode(args) -> int:
    weights = load_weights(args.model) if args.model else None
    events = decode_stream(args.input.read_bytes(), weights)
    write_events(events, args.output, args.format)
    return 0


def _load_pmfs(directory: Path, geometry, fmt):
    from .training import sequence_pmfs

    files = sorted(p for p in directory.iterdir()
                   if p.is_file() and p.suffix in (".csv", ".raw32", ".bin"))
    if not files:
        raise EvquadError(f"no event files in {directory}")
    out = []
    for path in files:
        events = read_events(path, fmt, geometry=geometry)
        out.append(sequence_pmfs(events, geometry or infer_geometry(events)))
    return out


def cmd_train(args) -> int:
    from .training import TrainingConfig, build_dataset, fit

    cfg = TrainingConfig(learning_rate=args.lr, lr_decay=args.lr_decay,
                         decay_every=args.decay_every, max_epochs=args.epochs,
                         patience=args.patience, batch_size=args.batch_size,
                         epsilon_clamp=args.epsilon_clamp, seed=args.seed)
    train_ds = build_dataset(_load_pmfs(args.train_dir, args.geometry, args.format), args.window)
    val_ds = build_dataset(_load_pmfs(args.val, args.geometry, args.format), args.window)
    log.info("%d training / %d validation windows", len(train_ds), len(val_ds))
    result = fit(train_ds, val_ds, cfg)
    save_weights(result.weights, args.output)
    print(f"best epoch {result.best_epoch}  val cross-entropy {result.best_val_loss:.5f} nats")
    return 0


def cmd_bench(args) -> int:
    weights = _weights(args)
    model_name = "uniform" if args.uniform_baseline else (str(args.model) if args.model else "default")
    reports, sweeps = [], {}
    for path in args.inputs:
        events = read_events(path, args.format, geometry=args.geometry)
        geometry = args.geometry or infer_geometry(events)
        if args.k_sweep:
            sweeps[path.name] = k_sweep(events, geometry, weights)
        else:
            reports.append(bench_sequence(events, geometry, weights, k=args.k,
                                          repeats=args.repeats, name=path.name,
                                          model_name=model_name))
    if args.k_sweep:
        lines = [json.dumps({"name": n, "model": model_name,
                             **{f"cr_k{k}": v for k, v in s.items()}}) for n, s in sweeps.items()]
        table = format_k_sweep(sweeps)
    else:
        lines = [r.to_json() for r in reports]
        table = format_table(reports)
    if args.jsonl == "-":
        print("\n".join(lines))
    else:
        print(table)
        if args.jsonl:
            Path(args.jsonl).write_text("\n".join(lines) + "\n")
    return 0


def cmd_gen(args) -> int:
    cfg = SynthConfig(geometry=args.geometry, duration_us=args.duration, n_objects=args.objects,
                      speed_px_per_ms=args.speed, noise_per_ms=args.noise,
                      latency_us=args.latency, seed=args.seed)
    events = generate_synthetic(cfg)
    write_events(events, args.output, args.format)
    log.info("%d events written to %s", len(events), args.output)
    return 0


# -------------------------------------------------------------------- parser

def _geometry(text: str) -> SensorGeometry:
    try:
        return SensorGeometry.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _k(text: str) -> int:
    k = int(text)
    if not 0 <= k <= MAX_K:
        raise argparse.ArgumentTypeError(f"k must be in [0, {MAX_K}]")
    return k


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evquad", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def io_opts(p):
        p.add_argument("--format", choices=FORMATS, help="default: from the file extension")
        p.add_argument("--geometry", type=_geometry,
                       help="sensor size WxH (default: bounding box of the events)")

    p = sub.add_parser("encode", parents=[common], help="compress an event file")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--model", type=Path, help="weights file (default: built-in model)")
    p.add_argument("--uniform-baseline", action="store_true",
                   help="identity substitution table instead of the learned model")
    p.add_argument("--k", type=_k, default=DEFAULT_K)
    p.add_argument("--timestamps", type=Path, help=f"raw32 timestamp sidecar (default <in>{TS_SUFFIX})")
    io_opts(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help="decompress to an event file")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--model", type=Path, help="default: whichever built-in model matches")
    p.add_argument("--format", choices=FORMATS)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", parents=[common], help="train a predictor on directories of event files")
    p.add_argument("train_dir", type=Path)
    p.add_argument("--val", type=Path, required=True)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lr-decay", type=float, default=0.1)
    p.add_argument("--decay-every", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epsilon-clamp", type=float, default=1e-9)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    io_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", parents=[common], help="compression and runtime metrics")
    p.add_argument("inputs", type=Path, nargs="+")
    p.add_argument("--model", type=Path)
    p.add_argument("--uniform-baseline", action="store_true")
    p.add_argument("--k-sweep", action="store_true", help="CR for k = 0..3")
    p.add_argument("--k", type=_k, default=DEFAULT_K)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--jsonl", help="write JSON lines here ('-' prints them instead of the table)")
    io_opts(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic event sequence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--geometry", type=_geometry, default=SensorGeometry(640, 480))
    p.add_argument("--duration", type=int, default=100_000, help="microseconds")
    p.add_argument("--objects", type=int, default=4)
    p.add_argument("--speed", type=float, default=3.0, help="pixels per millisecond")
    p.add_argument("--noise", type=float, default=20.0, help="noise events per millisecond")
    p.add_argument("--latency", type=float, default=30.0, help="mean latency, microseconds")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--format", choices=FORMATS)
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:  # EvquadError is a ValueError
        print(f"evquad: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
