"""Household-electricity pipeline: ingestion, expert library, loss matrices.

Input is the UCI household-power text format: semicolon-separated with a
header row (Date;Time;Global_active_power;...), minute resolution, missing
values marked '?'. The pipeline drops missing rows, aggregates to 10-minute
means, keeps the most recent observations, and builds squared-error losses
for a library of strictly causal forecasters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date

import numpy as np

from ..core import BoundedLossMatrix
from ..errors import DataError, DimensionError
from .families import clip_losses


@dataclass(frozen=True)
class ElectricityConfig:
    resample_minutes: int = 10
    keep_last: int = 20000
    split: float = 0.7
    rolling_window: int = 1440
    burn_in: int = 48
    clip_quantile: float = 0.95
    lags: tuple = (1, 2, 3, 6, 12, 24)
    ma_windows: tuple = (6, 12, 36, 144)
    ewma_decays: tuple = (0.9, 0.97, 0.99)
    ridge_lags: int = 6
    ridge_reg: float = 1e-3
    malformed_tolerance: float = 0.01
    # Assumption: the conventional target field of this dataset.
    target_field: str = "Global_active_power"


@dataclass(frozen=True)
class ElectricitySeries:
    values: np.ndarray
    split_index: int
    skipped_missing: int = 0
    skipped_malformed: int = 0


def ingest_electricity(path, cfg: ElectricityConfig = ElectricityConfig()) -> ElectricitySeries:
    """Parse, drop missing, aggregate to `resample_minutes` means, keep the
    last `keep_last` points; split index marks the 70% temporal boundary."""
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    n_rows = n_missing = n_malformed = 0
    ordinals: dict[str, int] = {}

    with open(path) as f:
        header = f.readline().rstrip("\n").split(";")
        try:
            target_col = header.index(cfg.target_field)
        except ValueError:
            raise DataError(f"field {cfg.target_field!r} not in header {header}")
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            n_rows += 1
            fields = line.split(";")
            if len(fields) != len(header):
                n_malformed += 1
                continue
            val = fields[target_col]
            if val in ("?", ""):
                n_missing += 1
                continue
            try:
                d, tm = fields[0], fields[1]
                if d not in ordinals:
                    day, month, year = d.split("/")
                    ordinals[d] = date(int(year), int(month), int(day)).toordinal()
                hh, mm, _ss = tm.split(":")
                minutes = ordinals[d] * 1440 + int(hh) * 60 + int(mm)
                x = float(val)
            except (ValueError, IndexError):
                n_malformed += 1
                continue
            bucket = minutes // cfg.resample_minutes
            sums[bucket] = sums.get(bucket, 0.0) + x
            counts[bucket] = counts.get(bucket, 0) + 1

    if n_rows == 0:
        raise DataError("empty electricity file")
    if n_malformed > cfg.malformed_tolerance * n_rows:
        raise DataError(f"{n_malformed}/{n_rows} malformed rows exceed "
                        f"tolerance {cfg.malformed_tolerance}")
    buckets = sorted(sums)
    series = np.array([sums[b] / counts[b] for b in buckets])
    series = series[-cfg.keep_last:]
    return ElectricitySeries(series, int(cfg.split * len(series)),
                             n_missing, n_malformed)


def expert_names(cfg: ElectricityConfig) -> list[str]:
    names = [f"lag{h}" for h in cfg.lags]
    names += [f"ma{w}" for w in cfg.ma_windows]
    names += [f"ewma{a}" for a in cfg.ewma_decays]
    names += [f"ridge{cfg.ridge_lags}"]
    return names


def expert_forecasts(series: np.ndarray, cfg: ElectricityConfig = ElectricityConfig()) -> np.ndarray:
    """(T, M) forecast matrix; column order matches expert_names(cfg).

    Every forecast for time t is a function of observations strictly before t.
    Rounds without enough history fall back to the most recent observation
    (or the first one at t=0); the burn-in excludes them from scoring.
    """
    series = np.asarray(series, dtype=np.float64)
    T = series.size
    p = cfg.ridge_lags
    if T < max(max(cfg.lags), max(cfg.ma_windows), p + 2) + cfg.burn_in:
        raise DataError(f"series of length {T} shorter than max lookback + burn-in")
    cols = []

    for h in cfg.lags:
        f = np.empty(T)
        f[:h] = series[0]
        f[h:] = series[:T - h]
        cols.append(f)

    csum = np.concatenate([[0.0], np.cumsum(series)])
    for w in cfg.ma_windows:
        f = np.empty(T)
        f[0] = series[0]
        t = np.arange(1, T)
        lo = np.maximum(t - w, 0)
        f[1:] = (csum[t] - csum[lo]) / (t - lo)
        cols.append(f)

    for a in cfg.ewma_decays:
        f = np.empty(T)
        f[0] = series[0]
        level = series[0]
        for t in range(1, T):
            level = a * level + (1.0 - a) * series[t - 1]
            f[t] = level
        cols.append(f)

    cols.append(_ridge_forecasts(series, p, cfg.ridge_reg, cfg.rolling_window))
    return np.stack(cols, axis=1)


def _ridge_forecasts(series: np.ndarray, p: int, reg: float, window: int) -> np.ndarray:
    """Online ridge on the previous p lags, refit each step from rolling
    sufficient statistics over the last `window` training pairs."""
    T = series.size
    f = np.empty(T)
    f[0] = series[0]
    xtx = np.zeros((p, p))
    xty = np.zeros(p)
    n_pairs = 0
    eye = reg * np.eye(p)
    for t in range(1, T):
        # Admit the pair (x_{t-1}, y_{t-1}) revealed by observing series[t-1].
        tau = t - 1
        if tau >= p:
            x = series[tau - p:tau]
            xtx += np.outer(x, x)
            xty += x * series[tau]
            n_pairs += 1
        old = tau - window
        if old >= p:
            xo = series[old - p:old]
            xtx -= np.outer(xo, xo)
            xty -= xo * series[old]
            n_pairs -= 1
        if t >= p and n_pairs >= 2:
            beta = np.linalg.solve(xtx + eye, xty)
            f[t] = float(series[t - p:t] @ beta)
        else:
            f[t] = series[t - 1]
    return f


def electricity_loss_matrix(series: np.ndarray, forecasts: np.ndarray,
                            cfg: ElectricityConfig, split_index: int):
    """Clipped squared-error loss matrix over the scored rounds t >= burn_in.

    The clip scale is the `clip_quantile` quantile of the lag-1 expert's
    squared errors on the training split only. Returns (losses, meta) where
    meta carries the clip scale and the test-rows offset.
    """
    series = np.asarray(series, dtype=np.float64)
    forecasts = np.asarray(forecasts, dtype=np.float64)
    if forecasts.shape[0] != series.size:
        raise DimensionError(f"forecasts rows {forecasts.shape[0]} != series length {series.size}")
    raw = (series[:, None] - forecasts) ** 2
    b = cfg.burn_in
    if not (b < split_index <= series.size):
        raise DimensionError(f"split index {split_index} incompatible with burn-in {b}")
    lag1_col = expert_names(cfg).index("lag1")
    c = float(np.quantile(raw[b:split_index, lag1_col], cfg.clip_quantile))
    if c <= 0:
        c = 1.0  # degenerate constant series; any positive scale works
    losses = clip_losses(raw[b:], c)
    meta = {"clip_scale": c, "test_start_row": split_index - b,
            "names": expert_names(cfg)}
    return losses, meta
