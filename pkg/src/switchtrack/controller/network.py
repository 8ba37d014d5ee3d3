"""Set-attention update policy over expert tokens, with hand-written backprop.

The network attends across the K expert tokens of a single round (temporal
context enters through the window features, so permuting experts permutes the
per-expert logits and leaves the pooled heads unchanged). Differentiation is
implemented manually and certified by central finite differences; no autodiff
framework is involved.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..core import DEFAULT_BOUNDS, ControlBounds, MixtureWeights, UpdateControls, normalize
from ..errors import DataError, DimensionError

LN_EPS = 1e-5

POLICY_MAGIC = b"STPOLV01"


@dataclass(frozen=True)
class ControllerConfig:
    d_in: int = 8
    d_model: int = 32
    n_layers: int = 1
    n_heads: int = 2
    d_ff: int = 64
    use_eta_head: bool = False
    freeze_attention: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise DataError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")


def param_specs(cfg: ControllerConfig) -> list[tuple[str, tuple]]:
    """Canonical (name, shape) order; serialization and flattening rely on it.

    The key projection carries no bias (a per-row-uniform score shift is
    cancelled exactly by the attention softmax), and the per-token logit head
    is weights-only (a uniform logit shift is cancelled by the restart
    softmax); such parameters would be untrainable no-ops.
    """
    D, F = cfg.d_model, cfg.d_ff
    specs = [("emb_w", (cfg.d_in, D)), ("emb_b", (D,))]
    for i in range(cfg.n_layers):
        p = f"layer{i}_"
        specs += [
            (p + "ln1_g", (D,)),
            (p + "wq", (D, D)), (p + "bq", (D,)),
            (p + "wk", (D, D)),
            (p + "wv", (D, D)), (p + "bv", (D,)),
            (p + "wo", (D, D)), (p + "bo", (D,)),
            (p + "ln2_g", (D,)),
            (p + "w1", (D, F)), (p + "b1", (F,)),
            (p + "w2", (F, D)), (p + "b2", (D,)),
        ]
    specs += [
        ("head_q_w", (D,)),
        ("head_rho_w", (D,)), ("head_rho_b", ()),
    ]
    if cfg.use_eta_head:
        specs += [("head_eta_w", (D,)), ("head_eta_b", ())]
    return specs


@dataclass
class PolicyParams:
    config: ControllerConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def n_params(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.tensors[n].ravel() for n, _ in param_specs(self.config)])

    def with_flat(self, flat: np.ndarray) -> "PolicyParams":
        out, pos = {}, 0
        for name, shape in param_specs(self.config):
            size = int(np.prod(shape)) if shape else 1
            out[name] = flat[pos:pos + size].reshape(shape).copy()
            pos += size
        return PolicyParams(self.config, out)

    def attention_names(self) -> set[str]:
        names = set()
        for i in range(self.config.n_layers):
            p = f"layer{i}_"
            names |= {p + n for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")}
        return names


def init_params(cfg: ControllerConfig, seed: int = 0) -> PolicyParams:
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_specs(cfg):
        if name.endswith("_g"):
            tensors[name] = np.ones(shape)
        elif name.endswith(("_b", "b1", "b2", "bq", "bv", "bo")) or shape == ():
            tensors[name] = np.zeros(shape)
        else:
            fan_in = shape[0] if len(shape) > 1 else shape[0]
            tensors[name] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), shape)
    return PolicyParams(cfg, tensors)


@dataclass(frozen=True)
class RawPolicyOutput:
    """Unconstrained controller outputs before the feasibility maps."""

    r: float               # restart score
    s: np.ndarray          # (K,) restart logits
    e: float               # learning-rate score


def _ln_forward(x: np.ndarray, g: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return g * xhat, (xhat, inv)


def _ln_backward(dy: np.ndarray, cache, g: np.ndarray):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    dxh = dy * g
    dx = inv * (dxh - dxh.mean(axis=-1, keepdims=True)
                - xhat * (dxh * xhat).mean(axis=-1, keepdims=True))
    return dx, dg


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def policy_forward(params: PolicyParams, tokens: np.ndarray, want_cache: bool = False):
    """Raw outputs (r, s, e) for a batch of token sets.

    tokens: (K, d_in) for a single round or (B, K, d_in) batched. Returns
    arrays r (B,), s (B, K), e (B,) (squeezed for unbatched input), plus the
    cache when requested.
    """
    cfg = params.config
    p = params.tensors
    single = tokens.ndim == 2
    x_in = tokens[None] if single else tokens
    if x_in.shape[-1] != cfg.d_in:
        raise DimensionError(f"token dim {x_in.shape[-1]} != configured d_in {cfg.d_in}")
    B, K, _ = x_in.shape
    H = cfg.n_heads
    dh = cfg.d_model // H
    scale = 1.0 / np.sqrt(dh)

    x = x_in @ p["emb_w"] + p["emb_b"]
    layers = []
    for i in range(cfg.n_layers):
        pre = f"layer{i}_"
        a, ln1 = _ln_forward(x, p[pre + "ln1_g"])
        q = a @ p[pre + "wq"] + p[pre + "bq"]
        k = a @ p[pre + "wk"]
        v = a @ p[pre + "wv"] + p[pre + "bv"]
        qh = q.reshape(B, K, H, dh).transpose(0, 2, 1, 3)
        kh = k.reshape(B, K, H, dh).transpose(0, 2, 1, 3)
        vh = v.reshape(B, K, H, dh).transpose(0, 2, 1, 3)
        att = _softmax(scale * (qh @ kh.transpose(0, 1, 3, 2)))
        ctx = (att @ vh).transpose(0, 2, 1, 3).reshape(B, K, cfg.d_model)
        x2 = x + ctx @ p[pre + "wo"] + p[pre + "bo"]
        b2, ln2 = _ln_forward(x2, p[pre + "ln2_g"])
        h1 = b2 @ p[pre + "w1"] + p[pre + "b1"]
        hr = np.maximum(h1, 0.0)
        x_next = x2 + hr @ p[pre + "w2"] + p[pre + "b2"]
        layers.append({"x": x, "a": a, "ln1": ln1, "qh": qh, "kh": kh, "vh": vh,
                       "att": att, "ctx": ctx, "x2": x2, "b2": b2, "ln2": ln2,
                       "h1": h1, "hr": hr})
        x = x_next

    s = x @ p["head_q_w"]
    pool = x.mean(axis=1)
    r = pool @ p["head_rho_w"] + p["head_rho_b"]
    if cfg.use_eta_head:
        e = pool @ p["head_eta_w"] + p["head_eta_b"]
    else:
        e = np.zeros(B)

    cache = {"tokens": x_in, "x_final": x, "pool": pool, "layers": layers} if want_cache else None
    if single:
        out = (float(r[0]), s[0], float(e[0]))
    else:
        out = (r, s, e)
    return (out, cache) if want_cache else out


def policy_backward(params: PolicyParams, cache: dict,
                    dr: np.ndarray, ds: np.ndarray, de: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(dr*r + ds*s + de*e) with respect to every parameter."""
    cfg = params.config
    p = params.tensors
    x = cache["x_final"]
    pool = cache["pool"]
    B, K, D = x.shape
    H = cfg.n_heads
    dh = D // H
    scale = 1.0 / np.sqrt(dh)
    g = {}

    g["head_q_w"] = np.einsum("bk,bkd->d", ds, x)
    g["head_rho_w"] = dr @ pool
    g["head_rho_b"] = np.array(dr.sum())
    dpool = dr[:, None] * p["head_rho_w"]
    if cfg.use_eta_head:
        g["head_eta_w"] = de @ pool
        g["head_eta_b"] = np.array(de.sum())
        dpool = dpool + de[:, None] * p["head_eta_w"]
    dx = ds[:, :, None] * p["head_q_w"] + dpool[:, None, :] / K

    for i in reversed(range(cfg.n_layers)):
        pre = f"layer{i}_"
        c = cache["layers"][i]
        # x_next = x2 + relu(b2 @ w1 + b1) @ w2 + b2_bias
        dhr = dx @ p[pre + "w2"].T
        g[pre + "w2"] = np.einsum("bkf,bkd->fd", c["hr"], dx)
        g[pre + "b2"] = dx.sum(axis=(0, 1))
        dh1 = dhr * (c["h1"] > 0)
        g[pre + "w1"] = np.einsum("bkd,bkf->df", c["b2"], dh1)
        g[pre + "b1"] = dh1.sum(axis=(0, 1))
        db2 = dh1 @ p[pre + "w1"].T
        dx2, g[pre + "ln2_g"] = _ln_backward(db2, c["ln2"], p[pre + "ln2_g"])
        dx2 = dx2 + dx
        # x2 = x + (att @ vh -> concat) @ wo + bo
        dctx = dx2 @ p[pre + "wo"].T
        g[pre + "wo"] = np.einsum("bkd,bke->de", c["ctx"], dx2)
        g[pre + "bo"] = dx2.sum(axis=(0, 1))
        dctx_h = dctx.reshape(B, K, H, dh).transpose(0, 2, 1, 3)
        datt = dctx_h @ c["vh"].transpose(0, 1, 3, 2)
        dvh = c["att"].transpose(0, 1, 3, 2) @ dctx_h
        att = c["att"]
        dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
        dqh = scale * (dscores @ c["kh"])
        dkh = scale * (dscores.transpose(0, 1, 3, 2) @ c["qh"])
        dq = dqh.transpose(0, 2, 1, 3).reshape(B, K, D)
        dk = dkh.transpose(0, 2, 1, 3).reshape(B, K, D)
        dv = dvh.transpose(0, 2, 1, 3).reshape(B, K, D)
        a = c["a"]
        g[pre + "wq"] = np.einsum("bkd,bke->de", a, dq)
        g[pre + "bq"] = dq.sum(axis=(0, 1))
        g[pre + "wk"] = np.einsum("bkd,bke->de", a, dk)
        g[pre + "wv"] = np.einsum("bkd,bke->de", a, dv)
        g[pre + "bv"] = dv.sum(axis=(0, 1))
        da = dq @ p[pre + "wq"].T + dk @ p[pre + "wk"].T + dv @ p[pre + "wv"].T
        dxa, g[pre + "ln1_g"] = _ln_backward(da, c["ln1"], p[pre + "ln1_g"])
        dx = dx2 + dxa

    tokens = cache["tokens"]
    g["emb_w"] = np.einsum("bki,bkd->id", tokens, dx)
    g["emb_b"] = dx.sum(axis=(0, 1))
    return g


# ---------------------------------------------------------------------------
# Feasibility maps: raw scores -> admissible controls, by construction.
# ---------------------------------------------------------------------------

def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    return np.logaddexp(0.0, x)


def restart_distribution(s: np.ndarray, epsilon: float) -> MixtureWeights:
    return normalize((1.0 - epsilon) * _softmax(s) + epsilon / s.size)


def feasibility_map(raw: RawPolicyOutput, bounds: ControlBounds = DEFAULT_BOUNDS,
                    fixed_eta: float | None = None) -> UpdateControls:
    """rho = rho_max * sigmoid(r); q = (1-eps) softmax(s) + eps/K;
    eta = eta_min + softplus(e), or a fixed constant when the eta head is off."""
    rho = bounds.rho_max * float(sigmoid(raw.r))
    q = restart_distribution(raw.s, bounds.epsilon)
    eta = fixed_eta if fixed_eta is not None else bounds.eta_min + float(softplus(raw.e))
    return UpdateControls(eta, rho, q)


def make_learned_controller(K: int, params: PolicyParams, eta: float | None = None,
                            window: int = 10, side_info: np.ndarray | None = None,
                            bounds: ControlBounds = DEFAULT_BOUNDS):
    """Controller callback running the trained policy strictly online.

    Returns (controls, p_t) per round so the engine can record the raw policy.
    When `eta` is given the eta head is bypassed (constant learning rate).
    """
    from .features import expert_tokens

    use_eta_head = params.config.use_eta_head and eta is None
    if not use_eta_head and eta is None:
        raise DataError("a fixed eta is required when the eta head is disabled")

    def fn(t, loss_prefix, weight_prefix):
        side = side_info[t - 1] if side_info is not None else None
        tokens = expert_tokens(loss_prefix, window, side)
        r, s, e = policy_forward(params, tokens)
        raw = RawPolicyOutput(r, s, e)
        controls = feasibility_map(raw, bounds, fixed_eta=None if use_eta_head else eta)
        return controls, float(sigmoid(r))

    return fn


# ---------------------------------------------------------------------------
# Versioned binary serialization with a checksum over the tensor payload.
# ---------------------------------------------------------------------------

def save_policy(params: PolicyParams, path) -> None:
    cfg = params.config
    body = params.flatten().tobytes()
    header = POLICY_MAGIC + struct.pack(
        "<IIIIIII", 1, cfg.d_in, cfg.d_model, cfg.n_layers, cfg.n_heads, cfg.d_ff,
        (1 if cfg.use_eta_head else 0) | (2 if cfg.freeze_attention else 0),
    ) + struct.pack("<I", zlib.crc32(body))
    with open(path, "wb") as f:
        f.write(header)
        f.write(body)


def load_policy(path) -> PolicyParams:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != POLICY_MAGIC:
            raise DataError(f"bad policy magic {magic!r}")
        version, d_in, d_model, n_layers, n_heads, d_ff, flags = struct.unpack("<IIIIIII", f.read(28))
        if version != 1:
            raise DataError(f"unsupported policy version {version}")
        (checksum,) = struct.unpack("<I", f.read(4))
        body = f.read()
    if zlib.crc32(body) != checksum:
        raise DataError("policy checksum mismatch")
    cfg = ControllerConfig(d_in, d_model, n_layers, n_heads, d_ff,
                           use_eta_head=bool(flags & 1), freeze_attention=bool(flags & 2))
    flat = np.frombuffer(body, dtype=np.float64)
    return PolicyParams(cfg, {}).with_flat(flat)
