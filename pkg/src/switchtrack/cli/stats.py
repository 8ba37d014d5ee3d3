"""Paired comparison statistics over per-sequence scores.

Lower scores are better everywhere in this package, so paired_stats(a, b)
measures how method `a` improves on method `b`: differences are b - a and a
"win" is a strictly smaller score for `a`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps
from scipy.stats import rankdata

from ..errors import StatsError

WILCOXON_EXACT_MAX = 25


@dataclass(frozen=True)
class PairedStats:
    n: int
    mean_improvement: float      # mean(b - a), absolute units
    rel_improvement: float       # mean(b - a) / mean(b)
    t_stat: float
    t_pvalue: float
    wilcoxon_stat: float
    wilcoxon_pvalue: float
    cohens_d: float
    win_rate: float
    degenerate_t: bool = False
    wilcoxon_undefined: bool = False
    d_undefined: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _wilcoxon_exact_pvalue(w_plus: float, ranks: np.ndarray) -> float:
    """Two-sided exact p-value for the signed-rank sum, conditioned on the
    observed (possibly tied, hence half-integer) ranks. Ranks are doubled to
    make every achievable sum an integer for the subset-sum table."""
    r2 = np.rint(2.0 * ranks).astype(np.int64)
    total_sum = int(r2.sum())
    counts = np.zeros(total_sum + 1)
    counts[0] = 1.0
    for r in r2:
        counts[r:] = counts[r:] + counts[: counts.size - r]
    total = counts.sum()
    w2 = int(np.rint(2.0 * w_plus))
    cdf = counts[: w2 + 1].sum() / total
    sf = counts[w2:].sum() / total
    return float(min(1.0, 2.0 * min(cdf, sf)))


def _wilcoxon_normal_pvalue(w_plus: float, ranks: np.ndarray, d: np.ndarray) -> float:
    n = ranks.size
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var -= np.sum(tie_counts ** 3 - tie_counts) / 48.0
    if var <= 0:
        return float("nan")
    z = (w_plus - mu) / np.sqrt(var)
    return float(2.0 * sps.norm.sf(abs(z)))


def paired_stats(a, b) -> PairedStats:
    """Paired t-test, Wilcoxon signed rank (exact for n <= 25), Cohen's d,
    win rate, and mean improvement of a over b (paired by position)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StatsError(f"need equal-length score vectors, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise StatsError(f"need at least 2 paired scores, got {n}")
    diff = b - a
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    win_rate = float(np.mean(diff > 0))
    rel = mean / abs(float(b.mean())) if b.mean() != 0 else float("nan")

    degenerate_t = sd == 0.0
    if degenerate_t:
        t_stat = float("nan")
        t_pvalue = 1.0 if mean == 0.0 else 0.0
        d_undefined = True
        cohens_d = float("nan") if mean == 0.0 else float(np.sign(mean)) * float("inf")
    else:
        t_stat = mean / (sd / np.sqrt(n))
        t_pvalue = float(2.0 * sps.t.sf(abs(t_stat), n - 1))
        d_undefined = False
        cohens_d = mean / sd

    nz = diff[diff != 0.0]
    if nz.size == 0:
        return PairedStats(n, mean, rel, t_stat, t_pvalue, float("nan"), float("nan"),
                           cohens_d, win_rate, degenerate_t, True, d_undefined)
    ranks = rankdata(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    w_minus = float(ranks[nz < 0].sum())
    w_stat = min(w_plus, w_minus)
    if nz.size <= WILCOXON_EXACT_MAX:
        w_pvalue = _wilcoxon_exact_pvalue(w_plus, ranks)
    else:
        w_pvalue = _wilcoxon_normal_pvalue(w_plus, ranks, nz)
    return PairedStats(n, mean, rel, t_stat, t_pvalue, w_stat, w_pvalue,
                       cohens_d, win_rate, degenerate_t, False, d_undefined)
