"""The full model: encoder -> history attention -> span and dialog-act heads."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from hamqa import tensor as tn
from hamqa.data.batching import Batch
from hamqa.encoder import EncoderConfig, encode, init_encoder_params
from hamqa.heads import (
    dialog_act_logits,
    dialog_act_loss,
    init_head_params,
    span_logits,
    span_loss_from_logits,
)
from hamqa.history_attention import (
    VariationStack,
    aggregate,
    attend_fine_grained,
    attend_sequence,
    uniform_weights,
)
from hamqa.tensor import Tensor


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fine_grained: bool = True
    history_attention: bool = True


@dataclass
class ForwardOutput:
    begin_logits: Tensor  # (G, M)
    end_logits: Tensor
    yesno_logits: Tensor  # (G, 3)
    followup_logits: Tensor
    sequence_weights: Tensor  # (G, I)
    token_weights: Optional[Tensor]  # (G, I, M) in fine-grained mode
    span_mask: np.ndarray


@dataclass
class Losses:
    span: Tensor
    yesno: Tensor
    followup: Tensor
    total: Tensor

    def values(self) -> dict[str, float]:
        return {
            "loss_ans": float(self.span.data),
            "loss_A": float(self.yesno.data),
            "loss_C": float(self.followup.data),
            "loss": float(self.total.data),
        }


def init_params(config: ModelConfig, seed: int) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    params = init_encoder_params(config.encoder, rng)
    params.update(init_head_params(config.encoder.hidden_size, rng))
    return params


def _gather_slots(x: Tensor, index: np.ndarray, mask: np.ndarray) -> Tensor:
    """Rows of ``x`` arranged as ``(G, I, ...)``; padded slots become zero."""
    picked = tn.getitem(x, index)
    shape = mask.shape + (1,) * (picked.ndim - mask.ndim)
    return picked * Tensor(mask.reshape(shape), dtype=x.dtype)


def forward(
    params: dict[str, Tensor], config: ModelConfig, batch: Batch, rng: Optional[np.random.Generator] = None
) -> ForwardOutput:
    enc = config.encoder
    T, s = encode(
        params,
        enc,
        batch.input_ids,
        batch.segment_ids,
        batch.position_ids,
        batch.poshae_ids,
        batch.attention_mask,
        rng,
    )
    stack = VariationStack(
        tokens=_gather_slots(T, batch.group_index, batch.group_mask),
        sequences=_gather_slots(s, batch.group_index, batch.group_mask),
        mask=batch.group_mask,
    )
    D = params["history.attention"]
    if config.history_attention:
        w = attend_sequence(stack.sequences, stack.mask, D)
    else:
        w = uniform_weights(stack.mask, dtype=T.dtype)
    T_hat, s_hat = aggregate(stack, w)
    token_w = None
    if config.fine_grained:
        fixed = None
        if not config.history_attention:
            fixed = uniform_weights(stack.mask, dtype=T.dtype, tokens=T.shape[-2])
        T_hat, token_w = attend_fine_grained(stack.tokens, stack.mask, D, weights=fixed)
    lb, le = span_logits(T_hat, params["span.begin"], params["span.end"])
    return ForwardOutput(
        begin_logits=lb,
        end_logits=le,
        yesno_logits=dialog_act_logits(s_hat, params["act.yesno.weight"], params["act.yesno.bias"]),
        followup_logits=dialog_act_logits(s_hat, params["act.followup.weight"], params["act.followup.bias"]),
        sequence_weights=w,
        token_weights=token_w,
        span_mask=batch.span_mask,
    )


def total_loss(loss_ans, loss_a, loss_c, mu: float, lam: float):
    """``mu * L_ans + lam * (L_A + L_C)`` for floats or tensors.

    Grouping the act terms keeps (2, 1, 1) at mu=0.8, lam=0.1 at exactly 1.8.
    """
    if isinstance(loss_ans, Tensor):
        return tn.scale(loss_ans, mu) + tn.scale(loss_a + loss_c, lam)
    return mu * loss_ans + lam * (loss_a + loss_c)


def compute_losses(out: ForwardOutput, batch: Batch, mu: float, lam: float) -> Losses:
    span = span_loss_from_logits(
        out.begin_logits, out.end_logits, out.span_mask, batch.start_positions, batch.end_positions
    )
    la = tn.neg(tn.mean(tn.pick(tn.masked_log_softmax(out.yesno_logits), batch.yesno)))
    lc = tn.neg(tn.mean(tn.pick(tn.masked_log_softmax(out.followup_logits), batch.followup)))
    return Losses(span, la, lc, total_loss(span, la, lc, mu, lam))


__all__ = [
    "ForwardOutput",
    "Losses",
    "ModelConfig",
    "compute_losses",
    "dialog_act_loss",
    "forward",
    "init_params",
    "total_loss",
]
