"""Synthetic non-stationarity generators.

Each family produces a bounded loss matrix plus the generating best-expert
path (the comparator for the large-K stress suite). Generation is
deterministic given (family, T, K, seed, knobs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import BoundedLossMatrix, ComparatorPath
from ..errors import ConfigError, DataError

FAMILIES = ("switch", "drift", "hetero", "heavytail", "mix", "predictive", "adversarial")


@dataclass(frozen=True)
class FamilyConfig:
    family: str
    T: int
    K: int
    seed: int
    knobs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; known: {FAMILIES}")
        if self.T < 1 or self.K < 1:
            raise ConfigError(f"need T,K >= 1, got T={self.T}, K={self.K}")


@dataclass(frozen=True)
class GeneratedSequence:
    losses: BoundedLossMatrix
    path: ComparatorPath
    side_info: np.ndarray | None = None


def clip_losses(raw: np.ndarray, c: float) -> BoundedLossMatrix:
    """Bounded surrogate min(raw / c, 1) applied entrywise."""
    raw = np.asarray(raw, dtype=np.float64)
    if c <= 0:
        raise ConfigError(f"clip scale must be positive, got {c}")
    bad = ~np.isfinite(raw)
    if bad.any():
        coords = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DataError(f"non-finite raw loss at {coords}")
    if raw.min() < 0:
        coords = tuple(int(i) for i in np.argwhere(raw < 0)[0])
        raise DataError(f"negative raw loss at {coords}")
    return BoundedLossMatrix(np.minimum(raw / c, 1.0))


def _draw_segments(rng, T: int, K: int, lo: int, hi: int):
    """Piecewise-constant winner segments; consecutive winners always differ."""
    bounds, winners = [], []
    start, prev = 0, -1
    while start < T:
        length = int(rng.integers(lo, hi + 1))
        end = min(start + length, T)
        if K == 1:
            w = 0
        else:
            w = int(rng.integers(K))
            while w == prev:
                w = int(rng.integers(K))
        bounds.append((start, end))
        winners.append(w)
        prev = w
        start = end
    return bounds, winners


def _winner_path(T: int, bounds, winners) -> np.ndarray:
    path = np.zeros(T, dtype=np.int64)
    for (s, e), w in zip(bounds, winners):
        path[s:e] = w
    return path


def _switch_losses(rng, T, K, path, best_beta=(2.0, 8.0), other_beta=(8.0, 2.0),
                   other_scale=0.875):
    losses = other_scale * rng.beta(other_beta[0], other_beta[1], size=(T, K))
    best = rng.beta(best_beta[0], best_beta[1], size=T)
    losses[np.arange(T), path] = best
    return losses


def _drift_path(rng, T, K, move_prob):
    b = np.zeros(T, dtype=np.int64)
    b[0] = int(rng.integers(K))
    steps = rng.random(T - 1) < move_prob
    direction = rng.integers(0, 2, size=T - 1) * 2 - 1
    for t in range(1, T):
        b[t] = b[t - 1]
        if steps[t - 1]:
            b[t] = min(max(b[t - 1] + int(direction[t - 1]), 0), K - 1)
    return b


def _drift_losses(rng, T, K, path, base, gap, radius, noise_sd):
    dist = np.abs(np.arange(K)[None, :] - path[:, None])
    mean = base + gap * np.minimum(dist / radius, 1.0)
    return np.clip(mean + noise_sd * rng.standard_normal((T, K)), 0.0, 1.0)


def generate_family(cfg: FamilyConfig) -> GeneratedSequence:
    rng = np.random.default_rng(cfg.seed)
    T, K = cfg.T, cfg.K
    kn = cfg.knobs
    fam = cfg.family

    if fam in ("switch", "hetero", "heavytail", "predictive"):
        bounds, winners = _draw_segments(rng, T, K, kn.get("seg_lo", 40), kn.get("seg_hi", 120))
        path = _winner_path(T, bounds, winners)

    if fam == "switch":
        losses = _switch_losses(rng, T, K, path)
        return GeneratedSequence(BoundedLossMatrix(losses), ComparatorPath(path))

    if fam == "hetero":
        sigma = np.exp(rng.uniform(math.log(kn.get("sigma_lo", 0.02)),
                                   math.log(kn.get("sigma_hi", 0.3)), size=K))
        mean = np.full((T, K), kn.get("other_mean", 0.7))
        mean[np.arange(T), path] = kn.get("best_mean", 0.2)
        losses = np.clip(mean + sigma[None, :] * rng.standard_normal((T, K)), 0.0, 1.0)
        return GeneratedSequence(BoundedLossMatrix(losses), ComparatorPath(path))

    if fam == "heavytail":
        df = kn.get("df", 3.0)
        jump_prob = kn.get("jump_prob", 0.03)
        mean = np.full((T, K), kn.get("other_mean", 0.7))
        mean[np.arange(T), path] = kn.get("best_mean", 0.2)
        raw = np.maximum(mean + kn.get("noise_scale", 0.1) * rng.standard_t(df, size=(T, K)), 0.0)
        raw = raw + kn.get("jump_mag", 5.0) * rng.binomial(1, jump_prob, size=(T, K))
        return GeneratedSequence(clip_losses(raw, kn.get("clip_scale", 1.0)),
                                 ComparatorPath(path))

    if fam == "predictive":
        losses = _switch_losses(rng, T, K, path)
        side = np.zeros((T, K))
        reveal_prob = kn.get("reveal_prob", 0.8)
        for i in range(len(bounds) - 1):
            if rng.random() < reveal_prob:
                s, e = bounds[i]
                side[s:e, winners[i + 1]] = 1.0
        return GeneratedSequence(BoundedLossMatrix(losses), ComparatorPath(path), side)

    if fam == "drift":
        path = _drift_path(rng, T, K, kn.get("move_prob", 0.1))
        losses = _drift_losses(rng, T, K, path, kn.get("base", 0.2), kn.get("gap", 0.5),
                               kn.get("radius", max(2, K // 4)), kn.get("noise_sd", 0.08))
        return GeneratedSequence(BoundedLossMatrix(losses), ComparatorPath(path))

    if fam == "mix":
        block = kn.get("block", 150)
        losses = np.zeros((T, K))
        path = np.zeros(T, dtype=np.int64)
        start, use_switch = 0, True
        while start < T:
            end = min(start + block, T)
            n = end - start
            if use_switch:
                b, w = _draw_segments(rng, n, K, kn.get("seg_lo", 40), kn.get("seg_hi", 120))
                sub = _winner_path(n, b, w)
                losses[start:end] = _switch_losses(rng, n, K, sub)
            else:
                sub = _drift_path(rng, n, K, kn.get("move_prob", 0.1))
                losses[start:end] = _drift_losses(rng, n, K, sub, kn.get("base", 0.2),
                                                  kn.get("gap", 0.5),
                                                  kn.get("radius", max(2, K // 4)),
                                                  kn.get("noise_sd", 0.08))
            path[start:end] = sub
            start, use_switch = end, not use_switch
        return GeneratedSequence(BoundedLossMatrix(losses), ComparatorPath(path))

    if fam == "adversarial":
        # The generator runs its own Hedge tracker and, each round, penalizes
        # the expert that tracker currently favors.
        gap = kn.get("adv_gap", 0.2)
        eta = kn.get("adv_eta", math.sqrt(8.0 * math.log(max(K, 2)) / T))
        base = 0.2 + 0.6 * rng.beta(5.0, 5.0, size=(T, K))
        logw = np.zeros(K)
        losses = np.zeros((T, K))
        for t in range(T):
            favored = int(np.argmax(logw))
            row = base[t].copy()
            row[favored] = min(row[favored] + gap, 1.0)
            losses[t] = row
            logw -= eta * row
            logw -= logw.max()
        # Comparator: realized per-round best expert (lowest index on ties).
        path = np.argmin(losses, axis=1).astype(np.int64)
        return GeneratedSequence(BoundedLossMatrix(losses), ComparatorPath(path))

    raise ConfigError(f"unknown family {fam!r}")


def heavytail_grid(T: int, K: int, seed: int,
                   dfs=(2.0, 3.0, 5.0), jump_probs=(0.0, 0.03, 0.06)) -> list[FamilyConfig]:
    """Configs spanning the tail-heaviness x jump-probability stress grid."""
    return [FamilyConfig("heavytail", T, K, seed, {"df": df, "jump_prob": jp})
            for df in dfs for jp in jump_probs]
