"""Transformer encoder with token, segment, position and history-answer embeddings.

Post-norm layout (attention -> add & norm -> GELU feed-forward -> add & norm),
attention scores scaled by ``1/sqrt(h / heads)``. Parameters are plain
``dict[str, Tensor]`` entries so checkpoints are a name -> array mapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from hamqa import tensor as tn
from hamqa.errors import ConfigError
from hamqa.tensor import Tensor

POOLING_MODES = ("cls_dense_tanh", "average", "max")
POSHAE_MODES = ("positional", "binary")
INIT_STD = 0.02


@dataclass
class EncoderConfig:
    hidden_size: int = 768
    num_layers: int = 12
    num_heads: int = 12
    ffn_size: int = 3072
    max_seq_length: int = 384
    vocab_size: int = 30522
    max_history: int = 11
    dropout: float = 0.1
    pooling: str = "max"
    poshae_mode: str = "positional"
    layer_norm_eps: float = 1e-12

    def validate(self) -> None:
        if self.hidden_size % self.num_heads:
            raise ConfigError(f"hidden size {self.hidden_size} not divisible by {self.num_heads} heads")
        if self.max_history < 1:
            raise ConfigError("max_history must be >= 1")
        if self.max_seq_length < 8:
            raise ConfigError("max_seq_length must be >= 8")
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"unknown pooling mode {self.pooling!r}; expected one of {POOLING_MODES}")
        if self.poshae_mode not in POSHAE_MODES:
            raise ConfigError(f"unknown PosHAE mode {self.poshae_mode!r}")

    @property
    def poshae_rows(self) -> int:
        return self.max_history + 1 if self.poshae_mode == "positional" else 2


def truncated_normal(rng: np.random.Generator, shape, std: float = INIT_STD, bound: float = 2.0) -> np.ndarray:
    """Normal(0, std) samples redrawn until they fall within ``bound`` std."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > bound
    return out * std


def init_encoder_params(config: EncoderConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    config.validate()
    h, f = config.hidden_size, config.ffn_size

    def w(*shape):
        return Tensor(truncated_normal(rng, shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    p = {
        "emb.token": w(config.vocab_size, h),
        "emb.segment": w(2, h),
        "emb.position": w(config.max_seq_length, h),
        "emb.poshae": w(config.poshae_rows, h),
        "emb.ln.gamma": ones(h),
        "emb.ln.beta": zeros(h),
    }
    for layer in range(config.num_layers):
        pre = f"layer{layer}."
        for name in ("q", "k", "v", "o"):
            p[pre + f"attn.{name}.weight"] = w(h, h)
            p[pre + f"attn.{name}.bias"] = zeros(h)
        p[pre + "attn.ln.gamma"] = ones(h)
        p[pre + "attn.ln.beta"] = zeros(h)
        p[pre + "ffn.in.weight"] = w(h, f)
        p[pre + "ffn.in.bias"] = zeros(f)
        p[pre + "ffn.out.weight"] = w(f, h)
        p[pre + "ffn.out.bias"] = zeros(h)
        p[pre + "ffn.ln.gamma"] = ones(h)
        p[pre + "ffn.ln.beta"] = zeros(h)
    p["pool.cls.weight"] = w(h, h)
    p["pool.cls.bias"] = zeros(h)
    return p


def poshae_lookup_ids(poshae_ids: np.ndarray, mode: str) -> np.ndarray:
    """Row ids into the PosHAE table; ``binary`` collapses 1..I onto row 1."""
    ids = np.asarray(poshae_ids)
    if mode == "binary":
        return (ids > 0).astype(ids.dtype)
    return ids


def embed(
    params: dict[str, Tensor],
    config: EncoderConfig,
    input_ids: np.ndarray,
    segment_ids: np.ndarray,
    position_ids: np.ndarray,
    poshae_ids: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Sum of the four embeddings, layer-normalised, with dropout when ``rng`` is set."""
    x = (
        tn.take_rows(params["emb.token"], input_ids)
        + tn.take_rows(params["emb.segment"], segment_ids)
        + tn.take_rows(params["emb.position"], position_ids)
        + tn.take_rows(params["emb.poshae"], poshae_lookup_ids(poshae_ids, config.poshae_mode))
    )
    x = tn.layer_norm(x, params["emb.ln.gamma"], params["emb.ln.beta"], config.layer_norm_eps)
    return tn.dropout(x, config.dropout, rng)


def _dense(x: Tensor, params: dict[str, Tensor], name: str) -> Tensor:
    return x @ params[name + ".weight"] + params[name + ".bias"]


def self_attention(
    x: Tensor, params: dict[str, Tensor], prefix: str, config: EncoderConfig, mask: np.ndarray, rng
) -> Tensor:
    N, M, h = x.shape
    H = config.num_heads
    dh = h // H

    def heads(t: Tensor) -> Tensor:
        return tn.transpose(t.reshape(N, M, H, dh), (0, 2, 1, 3))

    q = heads(_dense(x, params, prefix + "attn.q"))
    k = heads(_dense(x, params, prefix + "attn.k"))
    v = heads(_dense(x, params, prefix + "attn.v"))
    scores = tn.scale(q @ tn.swapaxes(k, -1, -2), 1.0 / math.sqrt(dh))
    probs = tn.masked_softmax(scores, mask[:, None, None, :].astype(bool), axis=-1)
    probs = tn.dropout(probs, config.dropout, rng)
    ctx = tn.transpose(probs @ v, (0, 2, 1, 3)).reshape(N, M, h)
    return _dense(ctx, params, prefix + "attn.o")


def encoder_layer(x: Tensor, params, layer: int, config: EncoderConfig, mask: np.ndarray, rng) -> Tensor:
    pre = f"layer{layer}."
    eps = config.layer_norm_eps
    a = tn.dropout(self_attention(x, params, pre, config, mask, rng), config.dropout, rng)
    x = tn.layer_norm(x + a, params[pre + "attn.ln.gamma"], params[pre + "attn.ln.beta"], eps)
    f = _dense(tn.gelu(_dense(x, params, pre + "ffn.in")), params, pre + "ffn.out")
    f = tn.dropout(f, config.dropout, rng)
    return tn.layer_norm(x + f, params[pre + "ffn.ln.gamma"], params[pre + "ffn.ln.beta"], eps)


def pool_sequence(
    T: Tensor, mode: str, mask: Optional[np.ndarray] = None, params: Optional[dict[str, Tensor]] = None
) -> Tensor:
    """Collapse the token axis of ``T`` (``[..., M, h]``) to ``[..., h]``.

    ``average`` and ``max`` only look at positions where ``mask`` is set;
    ``cls_dense_tanh`` reads the first token through the dense ``pool.cls``
    layer.
    """
    if mode not in POOLING_MODES:
        raise ConfigError(f"unknown pooling mode {mode!r}; expected one of {POOLING_MODES}")
    if mask is None:
        mask = np.ones(T.shape[:-1], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mode == "cls_dense_tanh":
        first = T[..., 0, :]
        return tn.tanh(_dense(first, params, "pool.cls"))
    if mode == "average":
        weights = mask.astype(T.dtype)
        weights = weights / weights.sum(axis=-1, keepdims=True)
        return tn.sum_(T * Tensor(weights[..., None], dtype=T.dtype), axis=-2)
    penalty = Tensor((~mask)[..., None] * -tn.MASK_PENALTY, dtype=T.dtype)
    return tn.max_(T + penalty, axis=-2)


def encode(
    params: dict[str, Tensor],
    config: EncoderConfig,
    input_ids: np.ndarray,
    segment_ids: np.ndarray,
    position_ids: np.ndarray,
    poshae_ids: np.ndarray,
    attention_mask: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Tensor, Tensor]:
    """Token representations ``(N, M, h)`` and pooled sequence vectors ``(N, h)``.

    Inputs are ``(N, M)`` id arrays; a single ``(M,)`` sequence is promoted
    and the batch axis dropped again on return.
    """
    single = np.ndim(input_ids) == 1
    if single:
        input_ids, segment_ids, position_ids, poshae_ids, attention_mask = (
            np.asarray(a)[None] for a in (input_ids, segment_ids, position_ids, poshae_ids, attention_mask)
        )
    x = embed(params, config, input_ids, segment_ids, position_ids, poshae_ids, rng)
    for layer in range(config.num_layers):
        x = encoder_layer(x, params, layer, config, attention_mask, rng)
    s = pool_sequence(x, config.pooling, attention_mask, params)
    if single:
        return x[0], s[0]
    return x, s
