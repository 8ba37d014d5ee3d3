"""Exact S-switch switching oracle via dynamic programming.

State dp[t, s, k] = minimum cumulative loss of any length-(t+1) path that ends
at expert k and uses at most s switches. The inner minimum over predecessors
j != k is served in O(1) from the best/second-best values of the previous
(s-1)-budget slice, for O(T*S*K) total time.

Tie-breaking is deterministic everywhere: the lowest expert index wins, and a
stay transition is preferred over a switch of equal value.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .core import BoundedLossMatrix, ComparatorPath, RunTrace
from .errors import ConfigError, DimensionError, SizeError

BRUTE_FORCE_LIMIT = 10 ** 7


@dataclass(frozen=True)
class OracleResult:
    value: float
    path: ComparatorPath
    switch_flags: np.ndarray  # (T-1,) booleans


def _check_budget(losses: BoundedLossMatrix, budget: int) -> None:
    if not (0 <= budget <= losses.T - 1):
        raise ConfigError(f"switch budget {budget} outside [0, {losses.T - 1}]")


def switching_oracle_dp(losses: BoundedLossMatrix, budget: int) -> OracleResult:
    """Optimal value and an optimizing path for the S-switch oracle."""
    _check_budget(losses, budget)
    ell = losses.entries
    T, K = ell.shape
    S = budget

    dp = ell[0][None, :].repeat(S + 1, axis=0)  # (S+1, K)
    # Backpointers per (t, s, k): switched flag and predecessor expert.
    switched = np.zeros((T, S + 1, K), dtype=bool)
    pred = np.zeros((T, S + 1, K), dtype=np.int32)
    pred[0] = np.arange(K)[None, :]

    ks = np.arange(K)
    for t in range(1, T):
        stay = dp
        if S >= 1:
            src = dp[:-1]  # budget s-1 slices, shape (S, K)
            j1 = np.argmin(src, axis=1)
            m1 = src[np.arange(S), j1]
            masked = src.copy()
            masked[np.arange(S), j1] = np.inf
            j2 = np.argmin(masked, axis=1)
            m2 = masked[np.arange(S), j2]
            at_best = ks[None, :] == j1[:, None]             # (S, K)
            sw_val = np.where(at_best, m2[:, None], m1[:, None])
            sw_pred = np.where(at_best, j2[:, None], j1[:, None])
            switch_vals = np.full((S + 1, K), np.inf)
            switch_preds = np.tile(ks, (S + 1, 1))
            switch_vals[1:] = sw_val
            switch_preds[1:] = sw_pred
        else:
            switch_vals = np.full((1, K), np.inf)
            switch_preds = ks[None, :].copy()
        take_switch = switch_vals < stay  # prefer stay on ties
        dp = ell[t][None, :] + np.where(take_switch, switch_vals, stay)
        switched[t] = take_switch
        pred[t] = np.where(take_switch, switch_preds, ks[None, :])

    k_end = int(np.argmin(dp[S]))
    value = float(dp[S, k_end])

    path = np.zeros(T, dtype=np.int64)
    path[T - 1] = k_end
    s = S
    for t in range(T - 1, 0, -1):
        k = path[t]
        if switched[t, s, k]:
            path[t - 1] = pred[t, s, k]
            s -= 1
        else:
            path[t - 1] = k
    cpath = ComparatorPath(path)
    return OracleResult(value, cpath, cpath.switch_flags())


def switching_oracle_value_only(losses: BoundedLossMatrix, budget: int) -> float:
    """Same value as switching_oracle_dp with O(S*K) memory (no backpointers)."""
    _check_budget(losses, budget)
    ell = losses.entries
    T, K = ell.shape
    S = budget

    dp = ell[0][None, :].repeat(S + 1, axis=0)
    ks = np.arange(K)
    for t in range(1, T):
        if S >= 1:
            src = dp[:-1]
            j1 = np.argmin(src, axis=1)
            m1 = src[np.arange(S), j1]
            masked = src.copy()
            masked[np.arange(S), j1] = np.inf
            m2 = np.min(masked, axis=1)
            sw_val = np.where(ks[None, :] == j1[:, None], m2[:, None], m1[:, None])
            switch_vals = np.full((S + 1, K), np.inf)
            switch_vals[1:] = sw_val
        else:
            switch_vals = np.full((1, K), np.inf)
        dp = ell[t][None, :] + np.where(switch_vals < dp, switch_vals, dp)
    return float(dp[S].min())


def switching_oracle_bruteforce(losses: BoundedLossMatrix, budget: int) -> float:
    """Exhaustive minimum over all paths with at most `budget` switches.

    Deliberately independent of the DP: plain enumeration, summing losses
    left-to-right so that ties with the DP are exact, not approximate.
    """
    _check_budget(losses, budget)
    T, K = losses.T, losses.K
    if K ** T > BRUTE_FORCE_LIMIT:
        raise SizeError(f"K^T = {K}^{T} exceeds brute-force guard {BRUTE_FORCE_LIMIT}")
    ell = losses.entries
    best = np.inf
    for path in product(range(K), repeat=T):
        switches = 0
        for a, b in zip(path, path[1:]):
            if a != b:
                switches += 1
        if switches > budget:
            continue
        cost = ell[0, path[0]]
        for t in range(1, T):
            cost = ell[t, path[t]] + cost
        if cost < best:
            best = cost
    return float(best)


def switching_oracle_dp_naive(losses: BoundedLossMatrix, budget: int) -> float:
    """Reference DP with the O(T*S*K^2) inner loop (no best/second-best trick)."""
    _check_budget(losses, budget)
    ell = losses.entries
    T, K = ell.shape
    S = budget
    dp = ell[0][None, :].repeat(S + 1, axis=0)
    off_diag = ~np.eye(K, dtype=bool)
    for t in range(1, T):
        new = np.empty_like(dp)
        for s in range(S + 1):
            stay = dp[s]
            if s >= 1:
                grid = np.where(off_diag, dp[s - 1][None, :], np.inf)  # (K, K)
                sw = grid.min(axis=1)
            else:
                sw = np.full(K, np.inf)
            new[s] = ell[t] + np.where(sw < stay, sw, stay)
        dp = new
    return float(dp[S].min())


def path_cost(losses: BoundedLossMatrix, path: ComparatorPath) -> float:
    """Cumulative loss of a path, summed in fixed left-to-right order."""
    if path.T != losses.T:
        raise DimensionError(f"path length {path.T} != horizon {losses.T}")
    cost = losses.entries[0, path.experts[0]]
    for t in range(1, losses.T):
        cost = losses.entries[t, path.experts[t]] + cost
    return float(cost)


def dynamic_regret(trace: RunTrace, losses: BoundedLossMatrix, budget: int) -> float:
    """Cumulative mixture loss minus the S-switch oracle value."""
    if trace.T != losses.T or trace.K != losses.K:
        raise DimensionError(
            f"trace shape ({trace.T},{trace.K}) != losses shape ({losses.T},{losses.K})"
        )
    return float(trace.incurred.sum()) - switching_oracle_value_only(losses, budget)
