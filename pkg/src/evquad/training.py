"""Training pipeline for the PMF predictor (float64, numpy only).

The training network carries a batch-norm layer after each of the two hidden
pre-activations. :meth:`Network.fold` absorbs those into the affine weights and
exports float32 :class:`~evquad.predictor.ModelWeights` for the codec.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _backend
from .errors import TrainingError
from .events import SensorGeometry, canonicalize
from .pmf import DEFAULT_WINDOW, N_SYMBOLS
from .predictor import HIDDEN, ModelWeights
from .quadtree import required_depth

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    lr_decay: float = 0.1
    decay_every: int = 5
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 64
    epsilon_clamp: float = 1e-9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "lr_decay", "decay_every", "max_epochs", "patience",
                     "batch_size", "epsilon_clamp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")

    def lr_at(self, epoch: int) -> float:
        """Step-decayed learning rate for a 0-based epoch."""
        return self.learning_rate * self.lr_decay ** (epoch // self.decay_every)


# -------------------------------------------------------------------- datasets

@dataclass
class PmfWindowDataset:
    X: np.ndarray  # (S, N, 16), oldest PMF first
    y: np.ndarray  # (S, 16)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 3 or self.X.shape[2] != N_SYMBOLS or self.y.shape != (len(self.X), N_SYMBOLS):
            raise ValueError(f"bad dataset shapes X{self.X.shape}, y{self.y.shape}")
        for name, arr in (("X", self.X), ("y", self.y)):
            if arr.size and (np.any(~(arr >= 0)) or np.abs(arr.sum(-1) - 1).max() > 1e-6):
                raise ValueError(f"every row of {name} must be a PMF")

    def __len__(self):
        return len(self.X)

    @property
    def window(self) -> int:
        return self.X.shape[1]


def sequence_pmfs(events, geometry: SensorGeometry) -> np.ndarray:
    """Empirical PMF of every coding unit of a sequence, shape (U, 16)."""
    ev, starts, _ = canonicalize(events, geometry)
    nibbles, nib_starts = _backend.kernels.occupancy_batch(
        ev.x, ev.y, starts, required_depth(geometry))
    n_units = len(starts) - 1
    counts = np.zeros((n_units, N_SYMBOLS), dtype=np.int64)
    unit_of = np.repeat(np.arange(n_units), np.diff(nib_starts))
    np.add.at(counts, (unit_of, nibbles.astype(np.int64)), 1)
    return counts / np.maximum(np.diff(nib_starts), 1)[:, None]


def build_dataset(unit_pmfs: Sequence[np.ndarray], window: int = DEFAULT_WINDOW) -> PmfWindowDataset:
    """Sliding windows over each file's PMF sequence; windows never cross files."""
    Xs, ys = [], []
    for pmfs in unit_pmfs:
        pmfs = np.asarray(pmfs, dtype=np.float64).reshape(-1, N_SYMBOLS)
        n = len(pmfs) - window
        if n <= 0:
            continue
        idx = np.arange(n)[:, None] + np.arange(window)
        Xs.append(pmfs[idx])
        ys.append(pmfs[window:])
    if not Xs:
        return PmfWindowDataset(np.zeros((0, window, N_SYMBOLS)), np.zeros((0, N_SYMBOLS)))
    return PmfWindowDataset(np.concatenate(Xs), np.concatenate(ys))


# --------------------------------------------------------------------- network

PARAM_NAMES = ("w0", "b0", "g0", "be0", "w1", "b1", "g1", "be1", "w2", "b2")


class Network:
    """Float64 training form: per-symbol layer, BN, ReLU, dense, BN, ReLU, dense."""

    def __init__(self, window: int = DEFAULT_WINDOW, seed: int = 0, bn_eps: float = 1e-5,
                 bn_momentum: float = 0.1):
        rng = np.random.default_rng(seed)
        lim0, lim1, lim2 = 1 / np.sqrt(window), 1 / np.sqrt(N_SYMBOLS), 1 / np.sqrt(HIDDEN)
        self.params = {
            "w0": rng.uniform(-lim0, lim0, (N_SYMBOLS, window)),
            "b0": np.zeros(N_SYMBOLS),
            "g0": np.ones(N_SYMBOLS),
            "be0": np.zeros(N_SYMBOLS),
            "w1": rng.uniform(-lim1, lim1, (HIDDEN, N_SYMBOLS)),
            "b1": np.zeros(HIDDEN),
            "g1": np.ones(HIDDEN),
            "be1": np.zeros(HIDDEN),
            "w2": rng.uniform(-lim2, lim2, (N_SYMBOLS, HIDDEN)),
            "b2": np.zeros(N_SYMBOLS),
        }
        self.running = {"m0": np.zeros(N_SYMBOLS), "v0": np.ones(N_SYMBOLS),
                        "m1": np.zeros(HIDDEN), "v1": np.ones(HIDDEN)}
        self.bn_eps = bn_eps
        self.bn_momentum = bn_momentum

    @classmethod
    def from_weights(cls, weights: ModelWeights) -> "Network":
        """Float64 network computing ``weights`` exactly in eval mode (identity batch norm)."""
        net = cls(weights.window, bn_eps=0.0)
        for name, arr in zip(("w0", "b0", "w1", "b1", "w2", "b2"), weights.arrays()):
            net.params[name] = arr.astype(np.float64)
        return net

    @property
    def window(self) -> int:
        return self.params["w0"].shape[1]

    def _bn(self, a, layer, train, update):
        g, be = self.params[f"g{layer}"], self.params[f"be{layer}"]
        if train:
            mu, var = a.mean(0), a.var(0)
            if update:
                m = self.bn_momentum
                n = len(a)
                self.running[f"m{layer}"] = (1 - m) * self.running[f"m{layer}"] + m * mu
                unbiased = var * n / max(n - 1, 1)
                self.running[f"v{layer}"] = (1 - m) * self.running[f"v{layer}"] + m * unbiased
        else:
            mu, var = self.running[f"m{layer}"], self.running[f"v{layer}"]
        inv_std = 1.0 / np.sqrt(var + self.bn_eps)
        xhat = (a - mu) * inv_std
        return g * xhat + be, (xhat, inv_std)

    def forward(self, X, train=False, update_stats=False):
        p = self.params
        a0 = np.einsum("bij,ji->bj", X, p["w0"]) + p["b0"]
        y0, bn0 = self._bn(a0, 0, train, update_stats)
        h0 = np.maximum(y0, 0)
        a1 = h0 @ p["w1"].T + p["b1"]
        y1, bn1 = self._bn(a1, 1, train, update_stats)
        h1 = np.maximum(y1, 0)
        z = h1 @ p["w2"].T + p["b2"]
        return z, (X, y0, bn0, h0, y1, bn1, h1, train)

    def predict_proba(self, X) -> np.ndarray:
        z, _ = self.forward(np.asarray(X, dtype=np.float64))
        z = z - z.max(1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(1, keepdims=True)

    @staticmethod
    def _bn_backward(dy, g, bn, train):
        xhat, inv_std = bn
        dg = (dy * xhat).sum(0)
        dbe = dy.sum(0)
        dxhat = dy * g
        if train:
            n = len(dy)
            da = inv_std / n * (n * dxhat - dxhat.sum(0) - xhat * (dxhat * xhat).sum(0))
        else:
            da = dxhat * inv_std
        return da, dg, dbe

    def loss_and_grad(self, X, Y, train=False, eps=1e-9, update_stats=False):
        """Mean clamped cross-entropy over the batch and its parameter gradients."""
        p = self.params
        z, (X, y0, bn0, h0, y1, bn1, h1, train) = self.forward(X, train, update_stats)
        zmax = z.max(1, keepdims=True)
        logq = z - zmax - np.log(np.exp(z - zmax).sum(1, keepdims=True))
        active = logq > np.log(eps)
        loss = float(-(Y * np.where(active, logq, np.log(eps))).sum(1).mean())
        n = len(X)
        pa = Y * active
        dz = (np.exp(logq) * pa.sum(1, keepdims=True) - pa) / n
        grads = {"w2": dz.T @ h1, "b2": dz.sum(0)}
        dy1 = (dz @ p["w2"]) * (y1 > 0)
        da1, grads["g1"], grads["be1"] = self._bn_backward(dy1, p["g1"], bn1, train)
        grads["w1"] = da1.T @ h0
        grads["b1"] = da1.sum(0)
        dy0 = (da1 @ p["w1"]) * (y0 > 0)
        da0, grads["g0"], grads["be0"] = self._bn_backward(dy0, p["g0"], bn0, train)
        grads["w0"] = np.einsum("bj,bij->ji", da0, X)
        grads["b0"] = da0.sum(0)
        return loss, grads

    def loss(self, X, Y, train=False, eps=1e-9) -> float:
        z, _ = self.forward(X, train)
        zmax = z.max(1, keepdims=True)
        logq = z - zmax - np.log(np.exp(z - zmax).sum(1, keepdims=True))
        return float(-(Y * np.maximum(logq, np.log(eps))).sum(1).mean())

    def fold(self) -> ModelWeights:
        """Absorb batch norm (running statistics) into float32 inference weights."""
        p, r = self.params, self.running
        s0 = p["g0"] / np.sqrt(r["v0"] + self.bn_eps)
        s1 = p["g1"] / np.sqrt(r["v1"] + self.bn_eps)
        return ModelWeights(
            p["w0"] * s0[:, None], (p["b0"] - r["m0"]) * s0 + p["be0"],
            p["w1"] * s1[:, None], (p["b1"] - r["m1"]) * s1 + p["be1"],
            p["w2"], p["b2"])


class Adam:
    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for k in PARAM_NAMES:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# -------------------------------------------------------------------- training

@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float


@dataclass
class TrainingResult:
    weights: ModelWeights
    network: Network
    best_epoch: int
    history: list[EpochLog] = field(default_factory=list)

    @property
    def best_val_loss(self) -> float:
        return min(h.val_loss for h in self.history)


def fit(train_ds: PmfWindowDataset, val_ds: PmfWindowDataset,
        cfg: TrainingConfig = TrainingConfig(),
        on_epoch: Callable[[EpochLog], None] | None = None,
        val_loss_fn: Callable[[Network, PmfWindowDataset], float] | None = None) -> TrainingResult:
    """Adam + step decay + early stopping; returns the best-validation snapshot."""
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if train_ds.window != val_ds.window:
        raise ValueError("train/val windows differ")
    net = Network(train_ds.window, cfg.seed, cfg.bn_eps, cfg.bn_momentum)
    opt = Adam(net.params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)
    val_loss_fn = val_loss_fn or (lambda n, ds: n.loss(ds.X, ds.y, False, cfg.epsilon_clamp))
    best, best_epoch, best_state, bad = np.inf, 0, None, 0
    history = []
    for epoch in range(cfg.max_epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(train_ds))
        total, seen = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if len(idx) < 2:  # batch statistics need two samples
                continue
            loss, grads = net.loss_and_grad(train_ds.X[idx], train_ds.y[idx], train=True,
                                            eps=cfg.epsilon_clamp, update_stats=True)
            if not np.isfinite(loss):
                raise TrainingError("training loss diverged", epoch + 1)
            opt.step(net.params, grads, lr)
            total += loss * len(idx)
            seen += len(idx)
        val = val_loss_fn(net, val_ds)
        if not np.isfinite(val):
            raise TrainingError("validation loss diverged", epoch + 1)
        entry = EpochLog(epoch + 1, lr, total / max(seen, 1), val)
        history.append(entry)
        log.info("epoch %d lr=%.2e train=%.5f val=%.5f", entry.epoch, lr, entry.train_loss, val)
        if on_epoch:
            on_epoch(entry)
        if val < best:
            best, best_epoch, bad = val, epoch + 1, 0
            best_state = (copy.deepcopy(net.params), copy.deepcopy(net.running))
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    net.params, net.running = best_state
    return TrainingResult(net.fold(), net, best_epoch, history)


def train(train_ds: PmfWindowDataset, val_ds: PmfWindowDataset,
          cfg: TrainingConfig = TrainingConfig()) -> ModelWeights:
    return fit(train_ds, val_ds, cfg).weights


# ------------------------------------------------------------- gradient check

def _loss_and_pattern(net: Network, X, Y, train, eps):
    """Loss plus the on/off state of every ReLU and of the cross-entropy clamp."""
    z, (_, y0, _, _, y1, _, _, _) = net.forward(X, train)
    zmax = z.max(1, keepdims=True)
    logq = z - zmax - np.log(np.exp(z - zmax).sum(1, keepdims=True))
    loss = float(-(Y * np.maximum(logq, np.log(eps))).sum(1).mean())
    return loss, np.concatenate([(y0 > 0).ravel(), (y1 > 0).ravel(), (logq > np.log(eps)).ravel()])


def numeric_gradient(net: Network, X, Y, name: str, train=False, eps=1e-9, step=1e-5,
                     with_mask=False):
    """Central differences for one parameter array.

    With ``with_mask`` also returns which entries had a smooth stencil: no ReLU or
    clamp switched state between the two evaluations, so the difference quotient
    is a valid reference there.
    """
    param = net.params[name]
    grad = np.zeros_like(param)
    smooth = np.ones(param.shape, dtype=bool)
    _, base = _loss_and_pattern(net, X, Y, train, eps)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = param[i]
        param[i] = orig + step
        up, pat_up = _loss_and_pattern(net, X, Y, train, eps)
        param[i] = orig - step
        down, pat_down = _loss_and_pattern(net, X, Y, train, eps)
        param[i] = orig
        grad[i] = (up - down) / (2 * step)
        smooth[i] = np.array_equal(pat_up, base) and np.array_equal(pat_down, base)
    return (grad, smooth) if with_mask else grad


@dataclass
class GradientCheck:
    max_rel_error: float
    checked: int
    kinks: int  # entries skipped because the stencil crossed a ReLU/clamp boundary


def gradient_check_report(net: Network | ModelWeights, X, Y, train=False, eps=1e-9,
                          step=1e-5, floor=1e-6) -> GradientCheck:
    """Compare analytic gradients with central differences over every parameter.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    parameters whose true gradient is ~0 from dividing round-off by round-off.
    """
    if isinstance(net, ModelWeights):
        net = Network.from_weights(net)
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    _, grads = net.loss_and_grad(X, Y, train, eps)
    worst, checked, kinks = 0.0, 0, 0
    for name in PARAM_NAMES:
        num, smooth = numeric_gradient(net, X, Y, name, train, eps, step, with_mask=True)
        ana = grads[name]
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
        rel = np.abs(ana - num) / denom
        if smooth.any():
            worst = max(worst, float(rel[smooth].max()))
        checked += int(smooth.sum())
        kinks += int((~smooth).sum())
    return GradientCheck(worst, checked, kinks)


def gradient_check(net: Network | ModelWeights, X, Y, train=False, eps=1e-9, step=1e-5,
                   floor=1e-6) -> float:
    """Max relative gradient error; ``net`` may be deployed (folded) weights."""
    return gradient_check_report(net, X, Y, train, eps, step, floor).max_rel_error
