"""Deterministic synthetic event streams: moving rectangles plus background noise.

Each object is an axis-aligned rectangle drifting at constant velocity and
bouncing off the frame borders. Whenever it moves by up to one pixel the newly
covered pixels fire with the object's contrast polarity and the uncovered ones
with the opposite polarity, each event delayed by a random latency. That gives
spatially clustered, temporally correlated units, the regime the codec targets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventArray, SensorGeometry


@dataclass(frozen=True)
class SynthConfig:
    geometry: SensorGeometry = SensorGeometry(640, 480)
    duration_us: int = 100_000
    n_objects: int = 4
    speed_px_per_ms: float = 3.0
    noise_per_ms: float = 20.0
    latency_us: float = 30.0
    fire_prob: float = 0.8
    min_size: int = 16
    max_size: int = 96
    seed: int = 0


def _object_events(rng, cfg: SynthConfig):
    g = cfg.geometry
    w = int(rng.integers(cfg.min_size, min(cfg.max_size, g.width) + 1))
    h = int(rng.integers(cfg.min_size, min(cfg.max_size, g.height) + 1))
    w, h = min(w, g.width), min(h, g.height)
    pos = np.array([rng.uniform(0, g.width - w), rng.uniform(0, g.height - h)])
    angle = rng.uniform(0, 2 * np.pi)
    speed = cfg.speed_px_per_ms / 1000.0 * rng.uniform(0.5, 1.5)
    vel = speed * np.array([np.cos(angle), np.sin(angle)])
    contrast = 1 if rng.random() < 0.5 else -1
    vmax = np.abs(vel).max()
    if vmax == 0:
        return []
    step = 1.0 / vmax  # microseconds to move at most one pixel
    limit = np.array([g.width - w, g.height - h], dtype=float)

    out = []
    t = 0.0
    prev = np.floor(pos).astype(int)
    while t < cfg.duration_us:
        t += step
        pos = pos + vel * step
        for axis in range(2):
            if pos[axis] < 0 or pos[axis] > limit[axis]:
                pos[axis] = np.clip(pos[axis], 0, limit[axis])
                vel[axis] = -vel[axis]
        cur = np.floor(pos).astype(int)
        if np.array_equal(cur, prev):
            continue
        x0, y0 = np.minimum(cur, prev)
        x1, y1 = np.maximum(cur, prev) + [w, h]
        xx, yy = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1), indexing="xy")
        in_cur = (xx >= cur[0]) & (xx < cur[0] + w) & (yy >= cur[1]) & (yy < cur[1] + h)
        in_prev = (xx >= prev[0]) & (xx < prev[0] + w) & (yy >= prev[1]) & (yy < prev[1] + h)
        changed = in_cur != in_prev
        fire = changed & (rng.random(changed.shape) < cfg.fire_prob)
        n = int(fire.sum())
        if n:
            latency = rng.exponential(cfg.latency_us, n) if cfg.latency_us > 0 else np.zeros(n)
            ts = np.floor(t + latency).astype(np.int64)
            pol = np.where(in_cur[fire], contrast, -contrast)
            out.append((ts, xx[fire], yy[fire], pol))
        prev = cur
    return out


def generate_synthetic(cfg: SynthConfig) -> EventArray:
    """Events sorted by time, unique per (t, x, y), all inside ``cfg.geometry``."""
    rng = np.random.default_rng(cfg.seed)
    parts = []
    for _ in range(cfg.n_objects):
        parts.extend(_object_events(rng, cfg))
    n_noise = int(rng.poisson(cfg.noise_per_ms * cfg.duration_us / 1000.0)) \
        if cfg.noise_per_ms > 0 else 0
    if n_noise:
        parts.append((rng.integers(0, cfg.duration_us, n_noise),
                      rng.integers(0, cfg.geometry.width, n_noise),
                      rng.integers(0, cfg.geometry.height, n_noise),
                      rng.choice(np.array([-1, 1]), n_noise)))
    if not parts:
        return EventArray.empty()
    t, x, y, p = (np.concatenate([part[i] for part in parts]) for i in range(4))
    keep = t < cfg.duration_us
    t, x, y, p = t[keep], x[keep], y[keep], p[keep]
    order = np.lexsort((y, x, t))
    t, x, y, p = t[order], x[order], y[order], p[order]
    dup = np.concatenate([[False], (t[1:] == t[:-1]) & (x[1:] == x[:-1]) & (y[1:] == y[:-1])])
    return EventArray(t[~dup], x[~dup], y[~dup], p[~dup])
