"""Regret bounds evaluated as computable right-hand sides on realized runs.

Every bound here is a pathwise inequality: it must hold on any admissible
trace against any comparator path. A certificate failing beyond the rounding
tolerance is a bug in the engine, not noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import (
    DEFAULT_BOUNDS,
    BoundedLossMatrix,
    ComparatorPath,
    ControlBounds,
    MixtureWeights,
    RunTrace,
    UpdateControls,
    check_admissible,
)
from .errors import AdmissibilityError, ConfigError, DataError, DimensionError, SizeError

# Slack tolerance: the math guarantees slack >= 0; this absorbs accumulated
# log-space rounding across T terms.
CERT_TOL = 1e-9

PATH_SUM_LIMIT = 10 ** 6


@dataclass(frozen=True)
class CertificateReport:
    """One evaluated bound. rhs_init/rhs_transition are the raw code-length
    terms; `scale` is the 1/eta factor applied to them (1 for the weighted
    form), so rhs_total = scale * (rhs_init + rhs_transition) + rhs_quadratic."""

    lhs: float
    rhs_init: float
    rhs_transition: float
    rhs_quadratic: float
    scale: float
    holds: bool
    slack: float
    infinite_code: bool = False

    @property
    def rhs_total(self) -> float:
        return self.scale * (self.rhs_init + self.rhs_transition) + self.rhs_quadratic

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs_init": self.rhs_init,
            "rhs_transition": None if self.infinite_code else self.rhs_transition,
            "rhs_quadratic": self.rhs_quadratic,
            "scale": self.scale,
            "holds": self.holds,
            "slack": None if self.infinite_code else self.slack,
            "infinite_code": self.infinite_code,
        }


def _controls_arrays(controls) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(etas, rhos, qs) from a RunTrace or a sequence of UpdateControls."""
    if isinstance(controls, RunTrace):
        return controls.etas, controls.rhos, controls.qs
    etas = np.array([c.eta for c in controls])
    rhos = np.array([c.rho for c in controls])
    qs = np.array([c.q.probs for c in controls]) if controls else np.zeros((0, 0))
    return etas, rhos, qs


def transition_code_length(path: ComparatorPath, controls) -> float:
    """Sum of -log A_t(pi_t -> pi_{t+1}) over the T-1 transitions.

    A switch step with rho_t = 0 has transition probability 0; the result is
    then +inf (callers flag it rather than serializing the float).
    """
    _, rhos, qs = _controls_arrays(controls)
    if path.T - 1 != rhos.shape[0]:
        raise DimensionError(f"path has {path.T - 1} transitions, controls {rhos.shape[0]}")
    total = 0.0
    for t in range(path.T - 1):
        i, j = path.experts[t], path.experts[t + 1]
        qj = qs[t, j]
        a = (1.0 - rhos[t]) + rhos[t] * qj if i == j else rhos[t] * qj
        if a <= 0.0:
            return float("inf")
        total += -np.log(a)
    return float(total)


def _validate_trace_controls(trace: RunTrace, bounds: ControlBounds) -> None:
    for t in range(trace.T - 1):
        try:
            check_admissible(trace.controls(t), bounds)
        except DataError as exc:
            raise AdmissibilityError(f"round {t + 1}: {exc}", round_index=t + 1) from exc


def _path_losses(losses: BoundedLossMatrix, path: ComparatorPath) -> np.ndarray:
    if path.T != losses.T:
        raise DimensionError(f"path length {path.T} != horizon {losses.T}")
    if path.experts.max() >= losses.K:
        raise IndexError(f"path references expert {path.experts.max()} with K={losses.K}")
    return losses.entries[np.arange(losses.T), path.experts]


def weighted_certificate(trace: RunTrace, losses: BoundedLossMatrix,
                         path: ComparatorPath, w1: MixtureWeights | None = None,
                         final_eta: float | None = None,
                         bounds: ControlBounds = DEFAULT_BOUNDS) -> CertificateReport:
    """Weighted pathwise bound for time-varying learning rates.

    The terminal round has no recorded control; its learning rate is a free
    parameter of the bound and defaults to the last recorded eta.
    """
    _validate_trace_controls(trace, bounds)
    if trace.T != losses.T:
        raise DimensionError("trace and losses disagree on T")
    if final_eta is None:
        if trace.T < 2:
            raise ConfigError("T=1 trace has no recorded eta; pass final_eta")
        final_eta = float(trace.etas[-1])
    if final_eta <= 0:
        raise ConfigError(f"final_eta must be positive, got {final_eta}")

    etas = np.concatenate([trace.etas, [final_eta]])
    gaps = trace.incurred - _path_losses(losses, path)
    lhs = float(np.dot(etas, gaps))
    w1p = trace.weights[0] if w1 is None else w1.probs
    rhs_init = float(-np.log(w1p[path.experts[0]]))
    rhs_transition = transition_code_length(path, trace)
    rhs_quadratic = float(np.sum(etas ** 2) / 8.0)
    infinite = np.isinf(rhs_transition)
    slack = float("inf") if infinite else rhs_init + rhs_transition + rhs_quadratic - lhs
    return CertificateReport(lhs, rhs_init, rhs_transition, rhs_quadratic, 1.0,
                             bool(slack >= -CERT_TOL), slack, infinite)


def constant_eta_certificate(trace: RunTrace, losses: BoundedLossMatrix,
                             path: ComparatorPath, eta: float,
                             w1: MixtureWeights | None = None,
                             bounds: ControlBounds = DEFAULT_BOUNDS) -> CertificateReport:
    """Unweighted dynamic-regret bound under a constant learning rate."""
    if eta <= 0:
        raise ConfigError(f"eta must be positive, got {eta}")
    if trace.T > 1 and not np.all(trace.etas == eta):
        raise ConfigError("trace learning rates are not the constant eta given")
    _validate_trace_controls(trace, bounds)

    gaps = trace.incurred - _path_losses(losses, path)
    lhs = float(np.sum(gaps))
    w1p = trace.weights[0] if w1 is None else w1.probs
    rhs_init = float(-np.log(w1p[path.experts[0]]))
    rhs_transition = transition_code_length(path, trace)
    rhs_quadratic = eta * trace.T / 8.0
    infinite = np.isinf(rhs_transition)
    slack = float("inf") if infinite else \
        (rhs_init + rhs_transition) / eta + rhs_quadratic - lhs
    return CertificateReport(lhs, rhs_init, rhs_transition, rhs_quadratic, 1.0 / eta,
                             bool(slack >= -CERT_TOL), slack, infinite)


def fixed_share_bound(K: int, S: int, T: int, rho: float, eta: float) -> float:
    """Closed-form bound for constant uniform restarts:
    (1/eta) [ln K + S ln(K/rho) + (T-1) ln(1/(1-rho))] + eta T / 8."""
    if not (0.0 < rho < 1.0):
        raise ConfigError(f"rho must lie in (0,1), got {rho}")
    if eta <= 0:
        raise ConfigError(f"eta must be positive, got {eta}")
    bracket = np.log(K) + S * np.log(K / rho) + (T - 1) * np.log(1.0 / (1.0 - rho))
    return float(bracket / eta + eta * T / 8.0)


def train_aligned_certificate(trace: RunTrace, losses: BoundedLossMatrix,
                              path: ComparatorPath, rho_max: float, eta: float,
                              w1: MixtureWeights | None = None,
                              bounds: ControlBounds = DEFAULT_BOUNDS) -> CertificateReport:
    """Bound in terms of the policy's switch probabilities p_t and restart
    distributions q_t, with rho_t = rho_max * p_t. Valid for rho_max <= 1/2;
    a relaxation of (and never below) the exact constant-eta bound."""
    if rho_max > 0.5 or rho_max <= 0.0:
        raise ConfigError(f"rho_max must lie in (0, 1/2], got {rho_max}")
    if eta <= 0:
        raise ConfigError(f"eta must be positive, got {eta}")
    if not trace.has_raw_policy():
        raise ConfigError("trace has no recorded raw policy outputs")
    if trace.T > 1 and not np.all(trace.etas == eta):
        raise ConfigError("trace learning rates are not the constant eta given")
    p = trace.raw_p
    if np.any(np.abs(trace.rhos - rho_max * p) > 1e-9):
        raise ConfigError("trace rho_t does not equal rho_max * p_t")
    _validate_trace_controls(trace, bounds)

    gaps = trace.incurred - _path_losses(losses, path)
    lhs = float(np.sum(gaps))
    w1p = trace.weights[0] if w1 is None else w1.probs
    rhs_init = float(-np.log(w1p[path.experts[0]]))

    sw = path.switch_flags()
    q_next = trace.raw_q[np.arange(trace.T - 1), path.experts[1:]]
    switch_terms = np.log(1.0 / rho_max) - np.log(p[sw]) - np.log(q_next[sw])
    stay_terms = -np.log1p(-p[~sw])
    rhs_transition = float(switch_terms.sum() + 2.0 * rho_max * stay_terms.sum())
    rhs_quadratic = eta * trace.T / 8.0
    slack = (rhs_init + rhs_transition) / eta + rhs_quadratic - lhs
    return CertificateReport(lhs, rhs_init, rhs_transition, rhs_quadratic, 1.0 / eta,
                             bool(slack >= -CERT_TOL), slack)


def effective_switching_complexity(path: ComparatorPath, qs) -> float:
    """Switch-step portion of the restart code length:
    sum over switch times of -log q_t(pi_{t+1})."""
    if not isinstance(qs, np.ndarray):
        qs = np.array([q.probs if isinstance(q, MixtureWeights) else q for q in qs])
    if qs.shape[0] != path.T - 1:
        raise DimensionError(f"expected {path.T - 1} restart distributions, got {qs.shape[0]}")
    sw = path.switch_flags()
    if not sw.any():
        return 0.0
    q_next = qs[np.arange(path.T - 1), path.experts[1:]]
    return float(np.sum(-np.log(q_next[sw])))


# ---------------------------------------------------------------------------
# Path-space machinery: forward recursion over unnormalized masses (log space)
# and the exhaustive path-sum cross-check.
# ---------------------------------------------------------------------------

def forward_log_masses(losses: BoundedLossMatrix, etas, rhos, qs,
                       w1: MixtureWeights) -> tuple[np.ndarray, float]:
    """Log forward masses log m_t(k) for t=1..T plus the terminal
    log partition value after the last loss is absorbed.

    etas has length T (the terminal rate enters only the partition value);
    rhos/qs have length T-1.
    """
    etas = np.asarray(etas, dtype=np.float64)
    rhos = np.asarray(rhos, dtype=np.float64)
    qs = np.asarray(qs, dtype=np.float64)
    T, K = losses.T, losses.K
    if etas.shape[0] != T or rhos.shape[0] != T - 1:
        raise DimensionError(f"need T={T} etas and T-1={T - 1} restart controls")
    ell = losses.entries

    log_m = np.zeros((T, K))
    with np.errstate(divide="ignore"):
        log_m[0] = np.log(w1.probs)
        for t in range(T - 1):
            lv = log_m[t] - etas[t] * ell[t]
            log_a = np.log((1.0 - rhos[t]) * np.eye(K) + rhos[t] * np.tile(qs[t], (K, 1)))
            log_m[t + 1] = logsumexp(lv[:, None] + log_a, axis=0)
    log_phi_terminal = float(logsumexp(log_m[T - 1] - etas[T - 1] * ell[T - 1]))
    return log_m, log_phi_terminal


def forward_weights(losses: BoundedLossMatrix, etas, rhos, qs,
                    w1: MixtureWeights) -> np.ndarray:
    """Normalized forward masses; equals the online share recursion weights."""
    log_m, _ = forward_log_masses(losses, etas, rhos, qs, w1)
    return np.exp(log_m - logsumexp(log_m, axis=1, keepdims=True))


def _rel_gap(a: float, b: float) -> float:
    """Relative discrepancy between two log-domain values."""
    if np.isneginf(a) and np.isneginf(b):
        return 0.0
    return float(abs(np.expm1(a - b)))


def path_partition_check(losses: BoundedLossMatrix, etas, rhos, qs,
                         w1: MixtureWeights) -> float:
    """Max relative discrepancy between the forward recursion and the explicit
    sum over all K^T paths, across every m_t(j) and the terminal partition."""
    T, K = losses.T, losses.K
    if K ** T > PATH_SUM_LIMIT:
        raise SizeError(f"K^T = {K}^{T} exceeds path-sum guard {PATH_SUM_LIMIT}")
    etas = np.asarray(etas, dtype=np.float64)
    rhos = np.asarray(rhos, dtype=np.float64)
    qs = np.asarray(qs, dtype=np.float64)
    ell = losses.entries

    log_m, log_phi = forward_log_masses(losses, etas, rhos, qs, w1)

    # Incremental enumeration: lu holds the log value of each prefix path
    # (prior so far plus absorbed losses through t-1), e its terminal expert.
    with np.errstate(divide="ignore"):
        lu = np.log(w1.probs.copy())
    e = np.arange(K)
    worst = 0.0
    for t in range(T):
        with np.errstate(invalid="ignore"):
            m_hat = logsumexp(lu.reshape(-1, K), axis=0) if t > 0 else lu.copy()
        for j in range(K):
            worst = max(worst, _rel_gap(m_hat[j], log_m[t, j]))
        lu = lu - etas[t] * ell[t, e]
        if t < T - 1:
            with np.errstate(divide="ignore"):
                log_a = np.log((1.0 - rhos[t]) * np.eye(K) + rhos[t] * np.tile(qs[t], (K, 1)))
            lu = (lu[:, None] + log_a[e, :]).ravel()
            e = np.tile(np.arange(K), e.size)
    phi_hat = float(logsumexp(lu))
    return max(worst, _rel_gap(phi_hat, log_phi))


def one_step_lse_check(p: MixtureWeights, x, eta: float) -> float:
    """Slack of the one-step log-sum-exp inequality:
    [-eta <p,x> + eta^2/8] - log sum_k p(k) exp(-eta x_k). Nonnegative for
    x in [0,1]^K and eta >= 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.k,):
        raise DimensionError(f"x shape {x.shape} does not match K={p.k}")
    lse = float(logsumexp(-eta * x, b=p.probs))
    return (-eta * float(np.dot(p.probs, x)) + eta * eta / 8.0) - lse
