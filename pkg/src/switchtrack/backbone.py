"""The strictly online share-backbone loop and its baseline controllers.

The engine enforces causality by interface shape: when producing the controls
for the t -> t+1 transition, a controller callback sees only loss rows 1..t
and the weights played through round t. Controls never alter the committed
decision of the round that produced them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    DEFAULT_BOUNDS,
    BoundedLossMatrix,
    ControlBounds,
    MixtureWeights,
    RunTrace,
    UpdateControls,
    check_admissible,
    normalize,
    uniform_weights,
)
from .errors import AdmissibilityError, ConfigError, DataError, InternalError

# Controller callback: (t, loss rows 1..t, weights 1..t) -> controls for t -> t+1.
# May also return (controls, p) where p is the raw switch probability used to
# form rho = rho_max * p; the engine then records the raw policy in the trace.
ControllerFn = Callable[[int, np.ndarray, np.ndarray], "UpdateControls | tuple"]


def default_eta(T: int, K: int) -> float:
    """Classical constant tuning sqrt(8 ln K / T); used by every baseline."""
    return math.sqrt(8.0 * math.log(max(K, 2)) / T)


def multiplicative_update(w: MixtureWeights, loss_row, eta: float) -> MixtureWeights:
    """Reweight w(k) by exp(-eta * loss_row[k]) and renormalize (in log space)."""
    row = np.asarray(loss_row, dtype=np.float64)
    if row.shape != (w.k,):
        raise DataError(f"loss row shape {row.shape} does not match K={w.k}")
    if not np.all(np.isfinite(row)) or not np.isfinite(eta):
        raise InternalError("non-finite input to multiplicative update")
    with np.errstate(divide="ignore"):
        lw = np.log(w.probs) - eta * row
    lw -= lw.max()
    bar = np.exp(lw)
    return normalize(bar)


def share_mix(w_bar: MixtureWeights, rho: float, q: MixtureWeights) -> MixtureWeights:
    """Restart mixture (1 - rho) * w_bar + rho * q."""
    if not (0.0 <= rho <= 1.0):
        raise DataError(f"rho must lie in [0, 1], got {rho}")
    if w_bar.k != q.k:
        raise DataError(f"dimension mismatch: {w_bar.k} vs {q.k}")
    return normalize((1.0 - rho) * w_bar.probs + rho * q.probs)


@dataclass(frozen=True)
class ControllerSpec:
    """A named controller plus its parameters.

    kinds: hedge (constant eta, no restarts), fixed_share (constant eta/rho,
    uniform q), genshare_heuristic (volatility-driven rho, softmax q over
    recent performance), learned (trained update policy).
    """

    kind: str
    params: dict = field(default_factory=dict)


def make_baseline(kind: str, **params) -> ControllerSpec:
    if kind == "hedge":
        if params.get("eta", 1.0) <= 0:
            raise ConfigError("hedge requires eta > 0")
        return ControllerSpec("hedge", {"eta": params["eta"]})
    if kind == "fixed_share":
        eta, rho = params["eta"], params["rho"]
        if eta <= 0 or not (0.0 <= rho < 1.0):
            raise ConfigError(f"fixed_share requires eta > 0 and rho in [0,1), got {eta}, {rho}")
        return ControllerSpec("fixed_share", {"eta": eta, "rho": rho})
    if kind == "genshare_heuristic":
        p = {"eta": params["eta"], "window": params.get("window", 10),
             "kappa": params.get("kappa", 1.0), "rho_floor": params.get("rho_floor", 0.005),
             "tau": params.get("tau", 10.0)}
        if p["eta"] <= 0 or p["rho_floor"] < 0 or p["window"] < 1:
            raise ConfigError(f"bad genshare_heuristic parameters: {p}")
        return ControllerSpec("genshare_heuristic", p)
    if kind == "learned":
        return ControllerSpec("learned", dict(params))
    raise ConfigError(f"unknown controller kind {kind!r}")


def _hedge_fn(eta: float, K: int) -> ControllerFn:
    q = uniform_weights(K)

    def fn(t, loss_prefix, weight_prefix):
        return UpdateControls(eta, 0.0, q)

    return fn


def _fixed_share_fn(eta: float, rho: float, K: int) -> ControllerFn:
    q = uniform_weights(K)

    def fn(t, loss_prefix, weight_prefix):
        return UpdateControls(eta, rho, q)

    return fn


def _genshare_heuristic_fn(p: dict, K: int, bounds: ControlBounds) -> ControllerFn:
    eta, W, kappa = p["eta"], p["window"], p["kappa"]
    rho_floor, tau = p["rho_floor"], p["tau"]
    eps = bounds.epsilon
    # Upper clamp stays strictly inside the admissible range [0, rho_max).
    rho_ceil = np.nextafter(bounds.rho_max, 0.0)

    def gap(row):
        # Margin between the instantaneous best expert and the runner-up.
        if row.size == 1:
            return 0.0
        two = np.partition(row, 1)[:2]
        return float(two[1] - two[0])

    def fn(t, loss_prefix, weight_prefix):
        v = abs(gap(loss_prefix[-1]) - gap(loss_prefix[max(0, t - 1 - W)]))
        rho = min(max(rho_floor + kappa * v, rho_floor), rho_ceil)
        window_mean = loss_prefix[max(0, t - W):].mean(axis=0)
        z = -tau * window_mean
        z -= z.max()
        soft = np.exp(z)
        soft /= soft.sum()
        q = normalize((1.0 - eps) * soft + eps / K)
        return UpdateControls(eta, rho, q)

    return fn


def resolve_controller(spec: ControllerSpec, T: int, K: int,
                       bounds: ControlBounds = DEFAULT_BOUNDS) -> ControllerFn:
    if spec.kind == "hedge":
        return _hedge_fn(spec.params["eta"], K)
    if spec.kind == "fixed_share":
        return _fixed_share_fn(spec.params["eta"], spec.params["rho"], K)
    if spec.kind == "genshare_heuristic":
        return _genshare_heuristic_fn(spec.params, K, bounds)
    if spec.kind == "learned":
        from .controller import make_learned_controller

        return make_learned_controller(K=K, bounds=bounds, **spec.params)
    raise ConfigError(f"unknown controller kind {spec.kind!r}")


def run_online(losses: BoundedLossMatrix, controller: ControllerSpec | ControllerFn,
               w1: MixtureWeights | None = None,
               bounds: ControlBounds = DEFAULT_BOUNDS) -> RunTrace:
    """Run the strictly online loop over the whole horizon.

    Per round: commit w_t, incur <w_t, l_t>, feed rows 1..t to the controller,
    apply the multiplicative update at eta_t, then the restart mix (rho_t, q_t).
    """
    T, K = losses.T, losses.K
    ell = losses.entries
    w = uniform_weights(K) if w1 is None else w1
    if w.k != K:
        raise DataError(f"w1 has {w.k} coordinates, losses have K={K}")

    fn = resolve_controller(controller, T, K, bounds) if isinstance(controller, ControllerSpec) \
        else controller

    weights = np.zeros((T, K))
    incurred = np.zeros(T)
    etas = np.zeros(max(T - 1, 0))
    rhos = np.zeros(max(T - 1, 0))
    qs = np.zeros((max(T - 1, 0), K))
    raw_p = np.zeros(max(T - 1, 0))
    raw_q = np.zeros((max(T - 1, 0), K))
    saw_raw = False

    weights[0] = w.probs
    for t in range(T):
        incurred[t] = float(np.dot(weights[t], ell[t]))
        if t == T - 1:
            break
        out = fn(t + 1, ell[: t + 1], weights[: t + 1])
        if isinstance(out, tuple):
            controls, p = out
            saw_raw = True
            raw_p[t] = p
            raw_q[t] = controls.q.probs
        else:
            controls = out
        try:
            check_admissible(controls, bounds)
        except DataError as exc:
            raise AdmissibilityError(f"round {t + 1}: {exc}", round_index=t + 1) from exc
        bar = multiplicative_update(MixtureWeights(weights[t]), ell[t], controls.eta)
        nxt = share_mix(bar, controls.rho, controls.q)
        weights[t + 1] = nxt.probs
        etas[t] = controls.eta
        rhos[t] = controls.rho
        qs[t] = controls.q.probs

    return RunTrace(weights, etas, rhos, qs, incurred,
                    raw_p=raw_p if saw_raw else None,
                    raw_q=raw_q if saw_raw else None)
