"""Soft selection over history-turn variations.

Stacks are padded to ``I`` slots on the variation axis; ``mask`` marks the
real ones. All functions accept an optional leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from hamqa import tensor as tn
from hamqa.tensor import Tensor


@dataclass
class VariationStack:
    tokens: Tensor  # (..., I, M, h)
    sequences: Tensor  # (..., I, h)
    mask: np.ndarray  # (..., I)


def _zero_padded(x: Tensor, mask: np.ndarray) -> Tensor:
    shape = mask.shape + (1,) * (x.ndim - mask.ndim)
    return tn.zero_where(x, mask.reshape(shape))


def attend_sequence(S: Tensor, mask, D: Tensor) -> Tensor:
    """Weights over the slot axis: masked softmax of ``D . s_i``."""
    mask = np.asarray(mask, dtype=bool)
    return tn.masked_softmax(S @ D, mask, axis=-1)


def uniform_weights(mask, dtype=None, tokens: Optional[int] = None) -> Tensor:
    """Equal weights over real slots (the no-attention ablation).

    With ``tokens`` set, the weights are repeated along a trailing token
    axis so they match the fine-grained layout ``(..., I, M)``.
    """
    mask = np.asarray(mask, dtype=bool)
    w = mask / mask.sum(axis=-1, keepdims=True)
    counts = mask.sum(axis=-1, keepdims=True)
    assert np.all(w[mask] == (1.0 / np.broadcast_to(counts, mask.shape))[mask])
    if tokens is not None:
        w = np.repeat(w[..., None], tokens, axis=-1)
    return Tensor(w, dtype=dtype)


def aggregate(stack: VariationStack, w: Tensor) -> tuple[Tensor, Tensor]:
    """Weighted sums over slots: ``T_hat = sum_i w_i T^i`` and ``s_hat = sum_i w_i s^i``."""
    tokens = _zero_padded(stack.tokens, stack.mask)
    seqs = _zero_padded(stack.sequences, stack.mask)
    wt = w.reshape(w.shape + (1, 1))
    T_hat = tn.sum_(tokens * wt, axis=-3)
    s_hat = tn.sum_(seqs * w.reshape(w.shape + (1,)), axis=-2)
    return T_hat, s_hat


def attend_fine_grained(tokens: Tensor, mask, D: Tensor, weights: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
    """Per-token attention across slots.

    Returns ``(T_hat, w)`` where ``w`` has shape ``(..., I, M)`` and every
    ``w[..., :, m]`` is a distribution over real slots. Passing ``weights``
    skips the learned scores (used by the equal-weights ablation).
    """
    mask = np.asarray(mask, dtype=bool)
    tokens = _zero_padded(tokens, mask)
    if weights is None:
        logits = tokens @ D  # (..., I, M)
        weights = tn.masked_softmax(logits, mask[..., None], axis=-2)
    T_hat = tn.sum_(tokens * weights.reshape(weights.shape + (1,)), axis=-3)
    return T_hat, weights


@dataclass
class AttentionRecord:
    """History attention weights of one (question, window) for inspection."""

    qid: str
    turn_index: int
    window_index: int
    weights: np.ndarray  # (I, M)
    slot_turns: list[int]  # history turn i per slot, -1 for padding
    relative_positions: list[int]  # k - i per slot, -1 for padding
    tokens: list[str] = field(default_factory=list)
    granularity: str = "fine_grained"

    def by_relative_position(self) -> np.ndarray:
        """Rows 0..k-1 indexed by relative history position.

        Row 0 is the current turn; it only carries weight for a first
        question, whose single variation has no history.
        """
        k = self.turn_index
        out = np.zeros((k, self.weights.shape[1]), dtype=np.float64)
        for slot, rel in enumerate(self.relative_positions):
            if 0 <= rel < k:
                out[rel] = self.weights[slot]
        return out


def attention_record(
    weights: np.ndarray,
    mask: np.ndarray,
    qid: str,
    turn_index: int,
    window_index: int,
    history_turns: Sequence[int],
    relative_positions: Sequence[int],
    tokens: Sequence[str] = (),
    max_seq_length: Optional[int] = None,
) -> AttentionRecord:
    """Build an ``I x M`` record from sequence-level ``(I,)`` or token-level ``(I, M)`` weights."""
    weights = np.asarray(weights, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    granularity = "fine_grained"
    if weights.ndim == 1:
        granularity = "sequence"
        M = max_seq_length if max_seq_length is not None else len(tokens)
        weights = np.repeat(weights[:, None], M, axis=1)
    weights = np.where(mask[:, None], weights, 0.0)
    I = len(mask)
    turns = list(history_turns) + [-1] * (I - len(history_turns))
    rels = list(relative_positions) + [-1] * (I - len(relative_positions))
    turns = [t if m else -1 for t, m in zip(turns, mask)]
    rels = [r if m else -1 for r, m in zip(rels, mask)]
    return AttentionRecord(qid, turn_index, window_index, weights, turns, rels, list(tokens), granularity)
