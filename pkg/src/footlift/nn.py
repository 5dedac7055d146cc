"""Small functional neural-network toolkit on top of torch autograd.

Parameters live in flat ``dict[str, torch.Tensor]`` maps so that the
optimizer, the finite-difference checker and the checkpoint writer can all
treat them uniformly.  Everything runs in float64.
"""
from __future__ import annotations

import functools
import json
import math
import os
from typing import Callable

import numpy as np
import torch

from footlift.errors import FormatError, OddHeadDim, ShapeMismatch

DTYPE = torch.float64
ROPE_BASE = 10000.0
LN_EPS = 1e-5
CHECKPOINT_MAGIC = b"FOOTLIFT-CHECKPOINT\n"
CHECKPOINT_VERSION = 1

Params = dict[str, torch.Tensor]


# --- initialization -------------------------------------------------------

def init_linear(rng: np.random.Generator, d_in: int, d_out: int, zero: bool = False):
    if zero:
        return np.zeros((d_in, d_out)), np.zeros(d_out)
    bound = 1.0 / math.sqrt(d_in)
    return rng.uniform(-bound, bound, (d_in, d_out)), rng.uniform(-bound, bound, d_out)


def to_params(arrays: dict[str, np.ndarray], requires_grad: bool = True) -> Params:
    return {k: torch.tensor(v, dtype=DTYPE, requires_grad=requires_grad) for k, v in arrays.items()}


# --- layers ---------------------------------------------------------------

def linear(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    if x.shape[-1] != weight.shape[0]:
        raise ShapeMismatch(f"input width {x.shape[-1]} does not match weight {tuple(weight.shape)}")
    if bias is not None and bias.shape != weight.shape[1:]:
        raise ShapeMismatch(f"bias {tuple(bias.shape)} does not match weight {tuple(weight.shape)}")
    y = x @ weight
    return y if bias is None else y + bias


def gelu(x: torch.Tensor) -> torch.Tensor:
    return 0.5 * x * (1.0 + torch.erf(x / math.sqrt(2.0)))


def layer_norm(x: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor, eps: float = LN_EPS):
    mu = x.mean(-1, keepdim=True)
    var = ((x - mu) ** 2).mean(-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + eps) * gain + bias


def mlp(x: torch.Tensor, params: Params, prefix: str) -> torch.Tensor:
    """Two linear layers with a GELU in between."""
    h = gelu(linear(x, params[f"{prefix}.w1"], params[f"{prefix}.b1"]))
    return linear(h, params[f"{prefix}.w2"], params[f"{prefix}.b2"])


def init_mlp(rng, prefix: str, d_in: int, d_hidden: int, d_out: int, zero_out: bool = False):
    w1, b1 = init_linear(rng, d_in, d_hidden)
    w2, b2 = init_linear(rng, d_hidden, d_out, zero=zero_out)
    return {f"{prefix}.w1": w1, f"{prefix}.b1": b1, f"{prefix}.w2": w2, f"{prefix}.b2": b2}


# --- attention ------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def banded_mask(L: int, W: int) -> torch.Tensor:
    """Additive (L, L) mask: 0 where |i - j| <= W, -inf elsewhere (cached; do not modify)."""
    if L < 1 or W < 0:
        raise ValueError("need L >= 1 and W >= 0")
    idx = torch.arange(L)
    allowed = (idx[:, None] - idx[None, :]).abs() <= W
    mask = torch.zeros(L, L, dtype=DTYPE)
    return mask.masked_fill(~allowed, float("-inf"))


def rope_apply(x: torch.Tensor, positions: torch.Tensor | None = None, base: float = ROPE_BASE):
    """Rotate feature pairs (2j, 2j+1) of x (..., L, heads, d_h) by pos * base^(-2j/d_h)."""
    d_h = x.shape[-1]
    if d_h % 2:
        raise OddHeadDim(f"head dimension {d_h} is odd")
    if positions is None:
        cos, sin = _rope_table(x.shape[-3], d_h, base)
    else:
        cos, sin = _rope_angles(torch.as_tensor(positions, dtype=DTYPE), d_h, base)
    x_even, x_odd = x[..., 0::2], x[..., 1::2]
    out = torch.stack([x_even * cos - x_odd * sin, x_even * sin + x_odd * cos], dim=-1)
    return out.flatten(-2)


def _rope_angles(positions: torch.Tensor, d_h: int, base: float):
    freqs = base ** (-torch.arange(0, d_h, 2, dtype=DTYPE) / d_h)
    angle = positions[:, None] * freqs  # (L, d_h/2)
    return torch.cos(angle)[:, None, :], torch.sin(angle)[:, None, :]


@functools.lru_cache(maxsize=32)
def _rope_table(L: int, d_h: int, base: float):
    return _rope_angles(torch.arange(L, dtype=DTYPE), d_h, base)


def attention_weights(q: torch.Tensor, k: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    """Softmax weights (..., heads, L, L) for q, k of shape (..., L, heads, d_h)."""
    scores = torch.einsum("...qhd,...khd->...hqk", q, k) / math.sqrt(q.shape[-1])
    if mask is not None:
        scores = scores + mask
    return torch.softmax(scores, dim=-1)


def mha(x: torch.Tensor, mask: torch.Tensor | None, params: Params, prefix: str, heads: int,
        return_weights: bool = False):
    d = x.shape[-1]
    if d % heads:
        raise ShapeMismatch(f"width {d} not divisible by {heads} heads")
    split = x.shape[:-1] + (heads, d // heads)
    q = rope_apply(linear(x, params[f"{prefix}.wq"], params[f"{prefix}.bq"]).reshape(split))
    k = rope_apply(linear(x, params[f"{prefix}.wk"], params[f"{prefix}.bk"]).reshape(split))
    v = linear(x, params[f"{prefix}.wv"], params[f"{prefix}.bv"]).reshape(split)
    weights = attention_weights(q, k, mask)
    ctx = torch.einsum("...hqk,...khd->...qhd", weights, v).reshape(x.shape)
    out = linear(ctx, params[f"{prefix}.wo"], params[f"{prefix}.bo"])
    return (out, weights) if return_weights else out


def init_mha(rng, prefix: str, d: int, zero_out: bool = False):
    out = {}
    for name in ("q", "k", "v"):
        out[f"{prefix}.w{name}"], out[f"{prefix}.b{name}"] = init_linear(rng, d, d)
    out[f"{prefix}.wo"], out[f"{prefix}.bo"] = init_linear(rng, d, d, zero=zero_out)
    return out


def encoder_layer(x: torch.Tensor, mask: torch.Tensor | None, params: Params, prefix: str,
                  heads: int, return_weights: bool = False):
    """Pre-norm block: x + mha(norm(x)), then x + mlp(norm(x))."""
    h = layer_norm(x, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    att, weights = mha(h, mask, params, f"{prefix}.attn", heads, return_weights=True)
    x = x + att
    h = layer_norm(x, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    x = x + mlp(h, params, f"{prefix}.ff")
    return (x, weights) if return_weights else x


def init_encoder_layer(rng, prefix: str, d: int, ff_mult: int = 4, zero_out: bool = False):
    out = {
        f"{prefix}.ln1.g": np.ones(d), f"{prefix}.ln1.b": np.zeros(d),
        f"{prefix}.ln2.g": np.ones(d), f"{prefix}.ln2.b": np.zeros(d),
    }
    out.update(init_mha(rng, f"{prefix}.attn", d, zero_out=zero_out))
    out.update(init_mlp(rng, f"{prefix}.ff", d, ff_mult * d, d, zero_out=zero_out))
    return out


# --- optimization ---------------------------------------------------------

def adamw_step(params: Params, grads: dict[str, torch.Tensor | None], state: dict, lr: float,
               betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
               weight_decay: float = 0.01) -> None:
    """One AdamW update in place; ``state`` holds ``step`` and per-parameter moments.

    Parameters are visited in sorted name order.
    """
    b1, b2 = betas
    step = state.get("step", 0) + 1
    state["step"] = step
    m, v = state.setdefault("m", {}), state.setdefault("v", {})
    with torch.no_grad():
        for name in sorted(params):
            p, g = params[name], grads.get(name)
            if g is None:
                g = torch.zeros_like(p)
            if g.shape != p.shape:
                raise ShapeMismatch(f"gradient for {name} has shape {tuple(g.shape)}, expected {tuple(p.shape)}")
            if name not in m:
                m[name] = torch.zeros_like(p)
                v[name] = torch.zeros_like(p)
            p.mul_(1.0 - lr * weight_decay)
            m[name].mul_(b1).add_(g, alpha=1.0 - b1)
            v[name].mul_(b2).addcmul_(g, g, value=1.0 - b2)
            m_hat = m[name] / (1.0 - b1 ** step)
            v_hat = v[name] / (1.0 - b2 ** step)
            p.sub_(lr * m_hat / (v_hat.sqrt() + eps))


# --- verification ---------------------------------------------------------

def numeric_grad(f: Callable[[Params], torch.Tensor], params: Params, eps: float = 1e-5) -> dict:
    out = {}
    with torch.no_grad():
        for name in sorted(params):
            p = params[name]
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                fp = float(f(params))
                flat[i] = orig - eps
                fm = float(f(params))
                flat[i] = orig
                gflat[i] = (fp - fm) / (2 * eps)
            out[name] = g
    return out


def grad_check(f: Callable[[Params], torch.Tensor], params: Params, eps: float = 1e-5) -> float:
    """Largest per-tensor relative error between autograd and central differences.

    For each tensor the error is ``|a - n| / max(|a|, |n|)`` in the 2-norm;
    tensors whose gradients both vanish count as exact.
    """
    for p in params.values():
        p.requires_grad_(True)
        p.grad = None
    f(params).backward()
    analytic = {k: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
                for k, p in params.items()}
    numeric = numeric_grad(f, params, eps)
    worst = 0.0
    for name in params:
        a, n = analytic[name], numeric[name]
        scale = max(float(a.norm()), float(n.norm()))
        if scale < 1e-12:
            continue
        worst = max(worst, float((a - n).norm()) / scale)
    return worst


# --- checkpoints ----------------------------------------------------------

def save_checkpoint(path, tensors: dict[str, torch.Tensor], meta: dict) -> None:
    """Header line of JSON followed by raw little-endian float64 data, in sorted name order.

    Written to a temporary file and renamed into place.
    """
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        t = tensors[name].detach().cpu()
        arr = np.ascontiguousarray(t.numpy(), dtype="<f8")  # promotes 0-d to 1-d, so keep t.shape
        entries.append({"name": name, "shape": list(t.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {"format_version": CHECKPOINT_VERSION, "meta": meta, "tensors": entries}
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, torch.Tensor], dict]:
    with open(path, "rb") as fh:
        if fh.readline() != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a checkpoint file")
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: unreadable checkpoint header ({exc})") from exc
        data = fh.read()
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    tensors = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=entry["offset"])
        tensors[entry["name"]] = torch.tensor(arr.reshape(entry["shape"]), dtype=DTYPE)
    return tensors, header["meta"]
