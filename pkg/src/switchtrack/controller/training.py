"""Oracle-supervised training of the update policy.

Supervision comes from exact switching-oracle paths: the restart distribution
is trained toward the oracle's next expert (cross-entropy) and the restart
score toward the oracle's switch indicator (binary cross-entropy), plus weight
decay. Optimization is plain momentum descent with a plateau-halved step, so
training is bit-reproducible given a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import DEFAULT_BOUNDS, BoundedLossMatrix, ComparatorPath, ControlBounds
from ..errors import DimensionError, TrainingError
from .features import tokens_for_all_rounds
from .network import (
    ControllerConfig,
    PolicyParams,
    _softmax,
    init_params,
    param_specs,
    policy_backward,
    policy_forward,
    sigmoid,
    softplus,
)


@dataclass(frozen=True)
class TrainSequence:
    losses: BoundedLossMatrix
    oracle_path: ComparatorPath
    side_info: np.ndarray | None = None


@dataclass(frozen=True)
class TrainConfig:
    arch: ControllerConfig = field(default_factory=ControllerConfig)
    window: int = 10
    epochs: int = 30
    batch_size: int = 64
    step: float = 1e-2
    momentum: float = 0.9
    plateau_patience: int = 3
    plateau_factor: float = 0.5
    min_step: float = 1e-5
    lambda_sw: float = 1.0
    lambda_wd: float = 1e-4
    seed: int = 0
    bounds: ControlBounds = DEFAULT_BOUNDS


def dataset_from_sequences(sequences, window: int = 10):
    """Stack (tokens, next oracle expert, switch flag) over every transition
    of every training sequence."""
    xs, ys, sws = [], [], []
    for seq in sequences:
        ell = seq.losses.entries
        path = seq.oracle_path.experts
        if path.size != ell.shape[0]:
            raise DimensionError("oracle path length does not match losses")
        toks = tokens_for_all_rounds(ell, window, seq.side_info)
        xs.append(toks[:-1])
        ys.append(path[1:])
        sws.append((path[1:] != path[:-1]).astype(np.float64))
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(sws)


def _policy_terms(r, s, targets, switches, lambda_sw: float, epsilon: float):
    """Per-item losses and the gradients w.r.t. the raw outputs (r, s)."""
    n, K = s.shape
    sigma = _softmax(s)
    q = (1.0 - epsilon) * sigma + epsilon / K
    q_y = q[np.arange(n), targets]
    lq = -np.log(q_y)
    # Stable binary cross-entropy through the sigmoid.
    lrho = switches * softplus(-r) + (1.0 - switches) * softplus(r)
    losses = lq + lambda_sw * lrho

    coef = (1.0 - epsilon) * sigma[np.arange(n), targets] / q_y
    ds = coef[:, None] * sigma
    ds[np.arange(n), targets] -= coef
    dr = lambda_sw * (sigmoid(r) - switches)
    return losses, dr, ds


def _batch_value_grads(params: PolicyParams, tokens, targets, switches,
                       lambda_sw: float, epsilon: float):
    (r, s, _e), cache = policy_forward(params, tokens, want_cache=True)
    losses, dr, ds = _policy_terms(r, s, targets, switches, lambda_sw, epsilon)
    grads = policy_backward(params, cache, dr, ds, np.zeros_like(dr))
    return float(losses.sum()), grads


def _batch_value(params: PolicyParams, tokens, targets, switches,
                 lambda_sw: float, epsilon: float) -> float:
    r, s, _e = policy_forward(params, tokens)
    losses, _, _ = _policy_terms(r, s, targets, switches, lambda_sw, epsilon)
    return float(losses.sum())


def controller_loss(raw_r, raw_s, oracle_path: ComparatorPath, lambda_sw: float,
                    lambda_wd: float, params: PolicyParams | None = None,
                    epsilon: float = DEFAULT_BOUNDS.epsilon) -> float:
    """Training objective for one sequence: sum over transitions of the
    next-expert cross-entropy plus lambda_sw times the switch-propensity
    binary cross-entropy, plus lambda_wd * ||params||^2."""
    r = np.asarray(raw_r, dtype=np.float64)
    s = np.asarray(raw_s, dtype=np.float64)
    path = oracle_path.experts
    if r.shape[0] != path.size - 1 or s.shape[0] != path.size - 1:
        raise DimensionError(f"expected {path.size - 1} outputs, got {r.shape[0]}")
    switches = (path[1:] != path[:-1]).astype(np.float64)
    losses, _, _ = _policy_terms(r, s, path[1:], switches, lambda_sw, epsilon)
    wd = lambda_wd * float(np.sum(params.flatten() ** 2)) if params is not None else 0.0
    return float(losses.sum()) + wd


def full_objective(params: PolicyParams, tokens, targets, switches,
                   lambda_sw: float, lambda_wd: float, epsilon: float,
                   chunk: int = 4096) -> float:
    """Mean per-transition loss plus weight decay (the trainer's objective;
    proportional to the summed sequence loss up to the decay term)."""
    total = 0.0
    for lo in range(0, tokens.shape[0], chunk):
        total += _batch_value(params, tokens[lo:lo + chunk], targets[lo:lo + chunk],
                              switches[lo:lo + chunk], lambda_sw, epsilon)
    return total / tokens.shape[0] + lambda_wd * float(np.sum(params.flatten() ** 2))


def train_controller(sequences, cfg: TrainConfig = TrainConfig()):
    """Momentum descent on the supervised objective.

    Returns (params, history) where history records the full objective once
    per epoch (epoch 0 is the initial value).
    """
    tokens, targets, switches = dataset_from_sequences(sequences, cfg.window)
    n = tokens.shape[0]
    arch = cfg.arch
    if arch.d_in != tokens.shape[-1]:
        arch = ControllerConfig(tokens.shape[-1], arch.d_model, arch.n_layers,
                                arch.n_heads, arch.d_ff, arch.use_eta_head,
                                arch.freeze_attention)
    params = init_params(arch, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    eps = cfg.bounds.epsilon

    frozen = params.attention_names() if arch.freeze_attention else set()
    vel = {name: np.zeros_like(v) for name, v in params.tensors.items()}
    step = cfg.step
    history = [full_objective(params, tokens, targets, switches,
                              cfg.lambda_sw, cfg.lambda_wd, eps)]
    best = history[0]
    stall = 0
    iteration = 0
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            value, grads = _batch_value_grads(params, tokens[idx], targets[idx],
                                              switches[idx], cfg.lambda_sw, eps)
            if not np.isfinite(value):
                raise TrainingError("training objective became non-finite",
                                    iteration=iteration)
            inv = 1.0 / idx.size
            for name, tensor in params.tensors.items():
                if name in frozen:
                    continue
                g = inv * grads[name] + 2.0 * cfg.lambda_wd * tensor
                vel[name] = cfg.momentum * vel[name] - step * g
                params.tensors[name] = tensor + vel[name]
            iteration += 1
        value = full_objective(params, tokens, targets, switches,
                               cfg.lambda_sw, cfg.lambda_wd, eps)
        if not np.isfinite(value):
            raise TrainingError("training objective became non-finite",
                                iteration=iteration)
        history.append(value)
        if value < best * (1.0 - 1e-4):
            best, stall = value, 0
        else:
            stall += 1
            if stall >= cfg.plateau_patience:
                step = max(step * cfg.plateau_factor, cfg.min_step)
                stall = 0
    return params, {"objective": history}


def gradient_check(params: PolicyParams, tokens, targets, switches,
                   lambda_sw: float = 1.0, lambda_wd: float = 1e-4,
                   epsilon: float = DEFAULT_BOUNDS.epsilon,
                   fd_step: float = 1e-5, exhaustive_limit: int = 10 ** 4,
                   sample_fraction: float = 0.01, seed: int = 0) -> float:
    """Max relative error between the hand-written gradient and central
    finite differences over every parameter (or a random 1% above the limit)."""
    _, grads = _batch_value_grads(params, tokens, targets, switches, lambda_sw, epsilon)
    flat = params.flatten()
    analytic = PolicyParams(
        params.config,
        {name: grads[name] + 2.0 * lambda_wd * params.tensors[name]
         for name, _ in param_specs(params.config)},
    ).flatten()

    def value_at(vec: np.ndarray) -> float:
        p = params.with_flat(vec)
        return (_batch_value(p, tokens, targets, switches, lambda_sw, epsilon)
                + lambda_wd * float(np.sum(vec ** 2)))

    n = flat.size
    if n <= exhaustive_limit:
        indices = np.arange(n)
    else:
        rng = np.random.default_rng(seed)
        m = max(int(n * sample_fraction), 100)
        indices = rng.choice(n, size=m, replace=False)

    worst = 0.0
    for i in indices:
        bumped = flat.copy()
        bumped[i] = flat[i] + fd_step
        up = value_at(bumped)
        bumped[i] = flat[i] - fd_step
        down = value_at(bumped)
        fd = (up - down) / (2.0 * fd_step)
        err = abs(analytic[i] - fd) / max(abs(analytic[i]), abs(fd), 1e-8)
        worst = max(worst, err)
    return worst
