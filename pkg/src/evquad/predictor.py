"""Inference side of the PMF predictor and its weight file format.

Network: 16 per-symbol units each combining that symbol's probability across
the window, ReLU, dense 16->64, ReLU, dense 64->16, softmax. Deployed weights
are float32 with batch norm already folded in.

Both codec ends rank symbols from the float32 logits produced by
:func:`predict_scores`, whose arithmetic order is fixed: every accumulator
starts at the bias and adds one product at a time, in input order, rounding to
float32 after each multiply and each add. The compiled kernel mirrors it.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ModelError
from .pmf import DEFAULT_WINDOW, N_SYMBOLS, PmfBuffer

HIDDEN = 64
WEIGHTS_MAGIC = b"LCW1"
_SHAPE = struct.Struct("<4sHHH")
HASH_SIZE = 32
DEFAULT_MODEL_RESOURCE = "default.lcw"


@dataclass(frozen=True, eq=False)
class ModelWeights:
    w0: np.ndarray  # (16, N): per-symbol weights over the window, oldest first
    b0: np.ndarray  # (16,)
    w1: np.ndarray  # (64, 16)
    b1: np.ndarray  # (64,)
    w2: np.ndarray  # (16, 64)
    b2: np.ndarray  # (16,)

    def __post_init__(self):
        window = np.asarray(self.w0).shape[-1] if np.ndim(self.w0) == 2 else -1
        shapes = {"w0": (N_SYMBOLS, window), "b0": (N_SYMBOLS,), "w1": (HIDDEN, N_SYMBOLS),
                  "b1": (HIDDEN,), "w2": (N_SYMBOLS, HIDDEN), "b2": (N_SYMBOLS,)}
        for name, shape in shapes.items():
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float32)
            if arr.shape != shape or window < 1:
                raise ModelError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} contains NaN or Inf")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def window(self) -> int:
        return self.w0.shape[1]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w0, self.b0, self.w1, self.b1, self.w2, self.b2)

    @classmethod
    def zeros(cls, window: int = DEFAULT_WINDOW) -> "ModelWeights":
        """All-zero model: uniform prediction, i.e. the identity substitution table."""
        return cls(np.zeros((N_SYMBOLS, window)), np.zeros(N_SYMBOLS),
                   np.zeros((HIDDEN, N_SYMBOLS)), np.zeros(HIDDEN),
                   np.zeros((N_SYMBOLS, HIDDEN)), np.zeros(N_SYMBOLS))

    @classmethod
    def random(cls, seed: int = 0, window: int = DEFAULT_WINDOW, scale: float = 1.0) -> "ModelWeights":
        rng = np.random.default_rng(seed)
        return cls(*(scale * rng.standard_normal(s) for s in (
            (N_SYMBOLS, window), N_SYMBOLS, (HIDDEN, N_SYMBOLS), HIDDEN,
            (N_SYMBOLS, HIDDEN), N_SYMBOLS)))

    def to_bytes(self) -> bytes:
        body = _SHAPE.pack(WEIGHTS_MAGIC, self.window, N_SYMBOLS, HIDDEN)
        body += b"".join(a.astype("<f4").tobytes() for a in self.arrays())
        return body + hashlib.sha256(body).digest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelWeights":
        if len(data) < _SHAPE.size + HASH_SIZE:
            raise ModelError("weights file truncated")
        magic, window, symbols, hidden = _SHAPE.unpack_from(data)
        if magic != WEIGHTS_MAGIC:
            raise ModelError(f"bad weights magic {magic!r}")
        if symbols != N_SYMBOLS or hidden != HIDDEN or window < 1:
            raise ModelError(f"unsupported shape N={window}, symbols={symbols}, hidden={hidden}")
        n_params = mac_count(window) + 2 * N_SYMBOLS + HIDDEN
        expected = _SHAPE.size + 4 * n_params + HASH_SIZE
        if len(data) != expected:
            raise ModelError(f"weights file is {len(data)} bytes, expected {expected}")
        body, digest = data[:-HASH_SIZE], data[-HASH_SIZE:]
        if hashlib.sha256(body).digest() != digest:
            raise ModelError("weights content hash mismatch")
        flat = np.frombuffer(body, dtype="<f4", offset=_SHAPE.size).astype(np.float32)
        parts, pos = [], 0
        for shape in ((N_SYMBOLS, window), (N_SYMBOLS,), (HIDDEN, N_SYMBOLS), (HIDDEN,),
                      (N_SYMBOLS, HIDDEN), (N_SYMBOLS,)):
            size = int(np.prod(shape))
            parts.append(flat[pos:pos + size].reshape(shape))
            pos += size
        return cls(*parts)

    @property
    def content_hash(self) -> bytes:
        return self.to_bytes()[-HASH_SIZE:]

    def __eq__(self, other):
        if not isinstance(other, ModelWeights):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def save_weights(weights: ModelWeights, path) -> None:
    Path(path).write_bytes(weights.to_bytes())


def load_weights(path) -> ModelWeights:
    return ModelWeights.from_bytes(Path(path).read_bytes())


def default_weights() -> ModelWeights:
    """Weights shipped with the package, trained on the synthetic generator."""
    data = resources.files("evquad").joinpath("data").joinpath(DEFAULT_MODEL_RESOURCE).read_bytes()
    return ModelWeights.from_bytes(data)


def mac_count(window: int | ModelWeights = DEFAULT_WINDOW) -> int:
    """Multiply-accumulates in one forward pass (biases and softmax excluded)."""
    if isinstance(window, ModelWeights):
        window = window.window
    return N_SYMBOLS * window + N_SYMBOLS * HIDDEN + HIDDEN * N_SYMBOLS


def predict_scores(weights: ModelWeights, history) -> np.ndarray:
    """Float32 logits for the next unit in the normative accumulation order.

    ``history`` is the (N, 16) float32 window, oldest row first.
    """
    hist = np.asarray(history, dtype=np.float32)
    if hist.shape != (weights.window, N_SYMBOLS):
        raise ModelError(f"history shape {hist.shape} does not match window {weights.window}")
    zero = np.float32(0)
    with np.errstate(over="ignore", invalid="ignore"):  # checked below
        h0 = weights.b0.copy()
        for i in range(weights.window):
            h0 = h0 + weights.w0[:, i] * hist[i]
        h0 = np.where(h0 > zero, h0, zero)
        h1 = weights.b1.copy()
        for j in range(N_SYMBOLS):
            h1 = h1 + weights.w1[:, j] * h0[j]
        h1 = np.where(h1 > zero, h1, zero)
        z = weights.b2.copy()
        for o in range(HIDDEN):
            z = z + weights.w2[:, o] * h1[o]
    if not np.all(np.isfinite(z)):
        raise ModelError("predictor produced non-finite logits")
    return z


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    # keep every entry strictly positive even for extreme logit spreads
    e = np.maximum(e, np.finfo(np.float64).tiny)
    return e / e.sum(axis=-1, keepdims=True)


def predict(buffer: PmfBuffer, weights: ModelWeights) -> np.ndarray:
    """Predicted PMF of the next coding unit given the recent-PMF buffer."""
    if len(buffer) != weights.window:
        raise ModelError(f"buffer holds {len(buffer)} PMFs, model expects {weights.window}")
    return softmax(predict_scores(weights, buffer.as_model_input()))


def cross_entropy(p, q, eps: float = 1e-9) -> float:
    """-sum p * ln(max(q, eps)) in nats; rows of 2-D inputs are averaged."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float(np.mean(-(p * np.log(np.maximum(q, eps))).sum(axis=-1)))
