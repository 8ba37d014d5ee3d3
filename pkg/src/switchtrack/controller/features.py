"""Causal per-expert feature tokens.

Each expert's token summarizes its bounded-loss trajectory over a trailing
window; shorter histories are padded by repeating the earliest available row,
so every window has the nominal length and round 1 yields degenerate
(zero-spread) statistics.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import HistoryError

N_BASE_FEATURES = 8
EWMA_DECAY = 0.9


def expert_tokens(loss_history: np.ndarray, window: int = 10,
                  side_row: np.ndarray | None = None) -> np.ndarray:
    """(K, d) token matrix from loss rows 1..t (given as an array of t rows).

    Features per expert: last loss, window mean, window min, window max,
    first-minus-last trend, window std, EWMA(0.9), and the normalized rank of
    the window mean across experts. A side-information row, when given,
    is appended as a ninth channel.
    """
    hist = np.asarray(loss_history, dtype=np.float64)
    if hist.ndim != 2 or hist.shape[0] < 1:
        raise HistoryError(f"need at least one loss row, got shape {hist.shape}")
    t, K = hist.shape
    idx = np.clip(np.arange(t - window, t), 0, None)
    win = hist[idx]  # (window, K)

    mean = win.mean(axis=0)
    ewma = win[0].copy()
    for row in win[1:]:
        ewma = EWMA_DECAY * ewma + (1.0 - EWMA_DECAY) * row
    if K > 1:
        rank = (rankdata(mean, method="average") - 1.0) / (K - 1.0)
    else:
        rank = np.zeros(1)

    feats = np.stack([
        win[-1],
        mean,
        win.min(axis=0),
        win.max(axis=0),
        win[0] - win[-1],
        win.std(axis=0),
        ewma,
        rank,
    ], axis=1)
    if side_row is not None:
        side = np.asarray(side_row, dtype=np.float64)
        if side.shape != (K,):
            raise HistoryError(f"side row shape {side.shape} does not match K={K}")
        feats = np.concatenate([feats, side[:, None]], axis=1)
    return feats


def tokens_for_all_rounds(losses: np.ndarray, window: int = 10,
                          side_info: np.ndarray | None = None) -> np.ndarray:
    """(T, K, d) tensor; entry t holds the tokens available after round t+1
    (0-based), i.e. computed from loss rows 0..t."""
    T, K = losses.shape
    d = N_BASE_FEATURES + (1 if side_info is not None else 0)
    out = np.zeros((T, K, d))
    for t in range(T):
        side = side_info[t] if side_info is not None else None
        out[t] = expert_tokens(losses[: t + 1], window, side)
    return out
