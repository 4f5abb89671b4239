"""Evaluation metrics, timing harness and the Rice-parameter sweep."""
from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .codec import Timings, decode_stream, encode_with_info
from .entropy import DEFAULT_K
from .events import EVT2_BITS_PER_EVENT, SensorGeometry, canonicalize
from .predictor import ModelWeights, mac_count


def compression_ratio(n_events: int, bitstream: bytes | int) -> float:
    """Size of the input at 32 bits/event over the compressed size."""
    n_bytes = bitstream if isinstance(bitstream, int) else len(bitstream)
    if n_bytes <= 0:
        raise ValueError("compressed bitstream is empty")
    return EVT2_BITS_PER_EVENT * n_events / (8 * n_bytes)


def avg_event_size(bitstream: bytes | int, n_events: int) -> float:
    """Compressed bits per input event."""
    n_bytes = bitstream if isinstance(bitstream, int) else len(bitstream)
    if n_events < 1:
        raise ValueError("average event size needs at least one event")
    return 8 * n_bytes / n_events


def kmac_per_mevent(n_units: int, n_events: int, macs: int | None = None) -> float:
    """Predictor cost in kMAC per million events (one prediction per unit)."""
    if n_units == 0:
        return 0.0
    if n_events <= 0:
        raise ValueError("units without events")
    macs = mac_count() if macs is None else macs
    return macs * n_units / (1000 * (n_events / 1e6))


@dataclass(frozen=True)
class RuntimeReport:
    """Median microseconds per event, with and without quadtree work."""

    encode_inclusive: float
    encode_exclusive: float
    decode_inclusive: float
    decode_exclusive: float
    runs: int


def runtime_per_event(events, geometry: SensorGeometry, weights: ModelWeights,
                      k: int = DEFAULT_K, repeats: int = 5) -> RuntimeReport:
    if repeats < 1:
        raise ValueError("repeats must be positive")
    data, info = encode_with_info(events, geometry, weights, k)  # warm-up
    decode_stream(data, weights)
    n = max(info.n_events, 1)
    enc_in, enc_ex, dec_in, dec_ex = [], [], [], []
    for _ in range(repeats):
        t0 = time.perf_counter()
        _, info = encode_with_info(events, geometry, weights, k)
        wall = time.perf_counter() - t0
        enc_in.append(wall)
        enc_ex.append(wall - info.timings.quadtree)
        timings = Timings()
        t0 = time.perf_counter()
        decode_stream(data, weights, timings)
        wall = time.perf_counter() - t0
        dec_in.append(wall)
        dec_ex.append(wall - timings.quadtree)
    us = 1e6 / n
    return RuntimeReport(statistics.median(enc_in) * us, statistics.median(enc_ex) * us,
                         statistics.median(dec_in) * us, statistics.median(dec_ex) * us, repeats)


@dataclass(frozen=True)
class MetricsReport:
    name: str
    model: str
    k: int
    n_events: int
    n_units: int
    n_bytes: int
    cr: float
    s_bits_per_event: float
    encode_us_per_event: float  # quadtree excluded
    decode_us_per_event: float  # quadtree excluded
    encode_us_inclusive: float
    decode_us_inclusive: float
    kmac_per_mevent: float
    event_rate_mev_s: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def event_rate(events) -> float:
    """Mean events per microsecond (= Mev/s) over the inclusive time span."""
    if len(events) == 0:
        return 0.0
    span = int(events.t.max()) - int(events.t.min()) + 1
    return len(events) / span


def bench_sequence(events, geometry: SensorGeometry, weights: ModelWeights, *,
                   k: int = DEFAULT_K, repeats: int = 5, name: str = "",
                   model_name: str = "learned") -> MetricsReport:
    events = canonicalize(events, geometry).events
    if len(events) == 0:
        raise ValueError("cannot benchmark an empty sequence")
    data, info = encode_with_info(events, geometry, weights, k)
    rt = runtime_per_event(events, geometry, weights, k, repeats)
    units = info.header.unit_count
    return MetricsReport(
        name=name, model=model_name, k=k, n_events=info.n_events, n_units=units,
        n_bytes=len(data), cr=compression_ratio(info.n_events, data),
        s_bits_per_event=avg_event_size(data, info.n_events),
        encode_us_per_event=rt.encode_exclusive, decode_us_per_event=rt.decode_exclusive,
        encode_us_inclusive=rt.encode_inclusive, decode_us_inclusive=rt.decode_inclusive,
        kmac_per_mevent=kmac_per_mevent(units, info.n_events, mac_count(weights)),
        event_rate_mev_s=event_rate(events))


def k_sweep(events, geometry: SensorGeometry, weights: ModelWeights,
            ks: Iterable[int] = (0, 1, 2, 3)) -> dict[int, float]:
    """Compression ratio of a full encode at each Rice parameter."""
    events = canonicalize(events, geometry).events
    out = {}
    for k in ks:
        data, info = encode_with_info(events, geometry, weights, k)
        out[k] = compression_ratio(info.n_events, data)
    return out


_COLUMNS = (("name", "{}"), ("model", "{}"), ("k", "{}"), ("n_events", "{}"),
            ("n_units", "{}"), ("cr", "{:.4f}"), ("s_bits_per_event", "{:.3f}"),
            ("encode_us_per_event", "{:.4f}"), ("decode_us_per_event", "{:.4f}"),
            ("kmac_per_mevent", "{:.2f}"), ("event_rate_mev_s", "{:.4f}"))


def format_table(reports: Sequence[MetricsReport]) -> str:
    header = ["sequence", "model", "k", "events", "units", "CR", "S (bits/ev)",
              "enc us/ev", "dec us/ev", "kMAC/MEv", "Mev/s"]
    rows = [[fmt.format(getattr(r, col)) for col, fmt in _COLUMNS] for r in reports]
    return _render(header, rows)


def format_k_sweep(sweeps: dict[str, dict[int, float]]) -> str:
    ks = sorted({k for sweep in sweeps.values() for k in sweep})
    header = ["sequence"] + [f"CR (k={k})" for k in ks]
    rows = [[name] + [f"{sweep[k]:.4f}" if k in sweep else "-" for k in ks]
            for name, sweep in sweeps.items()]
    return _render(header, rows)


def _render(header, rows) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))
    return "\n".join([line(header), line("-" * w for w in widths)] + [line(r) for r in rows])
