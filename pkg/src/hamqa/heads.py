"""Answer-span and dialog-act prediction on aggregated representations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from hamqa import tensor as tn
from hamqa.errors import ContractViolation
from hamqa.tensor import Tensor

NUM_YESNO = 3
NUM_FOLLOWUP = 3
LOG_FLOOR = 1e-300


def init_head_params(hidden_size: int, rng: np.random.Generator) -> dict[str, Tensor]:
    from hamqa.encoder import truncated_normal

    def w(*shape):
        return Tensor(truncated_normal(rng, shape), requires_grad=True)

    return {
        "span.begin": w(hidden_size),
        "span.end": w(hidden_size),
        "act.yesno.weight": w(NUM_YESNO, hidden_size),
        "act.yesno.bias": Tensor(np.zeros(NUM_YESNO), requires_grad=True),
        "act.followup.weight": w(NUM_FOLLOWUP, hidden_size),
        "act.followup.bias": Tensor(np.zeros(NUM_FOLLOWUP), requires_grad=True),
        "history.attention": w(hidden_size),
    }


def span_logits(T_hat: Tensor, begin: Tensor, end: Tensor) -> tuple[Tensor, Tensor]:
    return T_hat @ begin, T_hat @ end


def span_distributions(T_hat: Tensor, begin: Tensor, end: Tensor, mask) -> tuple[Tensor, Tensor]:
    """Begin/end distributions over the positions where ``mask`` is set."""
    lb, le = span_logits(T_hat, begin, end)
    mask = np.asarray(mask, dtype=bool)
    return tn.masked_softmax(lb, mask, axis=-1), tn.masked_softmax(le, mask, axis=-1)


def span_loss(p_begin: Tensor, p_end: Tensor, m_begin, m_end, mask=None) -> Tensor:
    """Mean over rows of ``(-log p_B[m_B] - log p_E[m_E]) / 2``."""
    m_begin = np.asarray(m_begin)
    m_end = np.asarray(m_end)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        rows = np.arange(mask.shape[0]) if mask.ndim > 1 else None
        ok_b = mask[rows, m_begin] if rows is not None else mask[m_begin]
        ok_e = mask[rows, m_end] if rows is not None else mask[m_end]
        if not (np.all(ok_b) and np.all(ok_e)):
            raise ContractViolation("span_loss: a gold label points at a masked position")
    lb = tn.neg(tn.log(tn.pick(p_begin, m_begin)))
    le = tn.neg(tn.log(tn.pick(p_end, m_end)))
    return tn.scale(tn.mean(lb + le), 0.5)


def span_loss_from_logits(logit_begin: Tensor, logit_end: Tensor, mask, m_begin, m_end) -> Tensor:
    """Same value as :func:`span_loss` via log-softmax (no underflow in float32)."""
    mask = np.asarray(mask, dtype=bool)
    rows = np.arange(mask.shape[0])
    if not (mask[rows, m_begin].all() and mask[rows, m_end].all()):
        raise ContractViolation("span_loss: a gold label points at a masked position")
    lb = tn.pick(tn.masked_log_softmax(logit_begin, mask, axis=-1), m_begin)
    le = tn.pick(tn.masked_log_softmax(logit_end, mask, axis=-1), m_end)
    return tn.scale(tn.mean(lb + le), -0.5)


def dialog_act_logits(s_hat: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = s_hat @ tn.transpose(weight)
    return out + bias if bias is not None else out


def dialog_act_loss(
    s_hat: Tensor, params: dict[str, Tensor], yesno, followup
) -> tuple[Tensor, Tensor]:
    """Cross-entropy of the affirmation and continuation classifiers (mean over rows)."""
    yesno = np.asarray(yesno)
    followup = np.asarray(followup)
    for name, labels, n in (("yesno", yesno, NUM_YESNO), ("followup", followup, NUM_FOLLOWUP)):
        if labels.size and (labels.min() < 0 or labels.max() >= n):
            raise IndexError(f"dialog_act_loss: {name} label outside [0, {n})")
    la = dialog_act_logits(s_hat, params["act.yesno.weight"], params["act.yesno.bias"])
    lc = dialog_act_logits(s_hat, params["act.followup.weight"], params["act.followup.bias"])
    loss_a = tn.neg(tn.mean(tn.pick(tn.masked_log_softmax(la, None), yesno)))
    loss_c = tn.neg(tn.mean(tn.pick(tn.masked_log_softmax(lc, None), followup)))
    return loss_a, loss_c


@dataclass
class SpanPrediction:
    begin: int
    end: int
    score: float
    answer_text: str = ""
    is_cannot_answer: bool = False
    window_index: int = 0


def decode_span(
    p_begin,
    p_end,
    passage_start: int,
    passage_end: int,
    max_answer_length: int = 40,
    cannot_answer_position: Optional[int] = None,
) -> SpanPrediction:
    """Best valid ``(b, e)`` by ``log p_B[b] + log p_E[e]``.

    Valid means ``passage_start <= b <= e <= passage_end`` and
    ``e - b + 1 <= max_answer_length``. When ``cannot_answer_position`` is
    given, the sentinel only forms the one-token span ``(c, c)``. Ties go to
    the smallest ``b``, then the smallest ``e``.
    """
    lb = np.log(np.maximum(np.asarray(p_begin, dtype=np.float64), LOG_FLOOR))
    le = np.log(np.maximum(np.asarray(p_end, dtype=np.float64), LOG_FLOOR))
    L = max_answer_length
    last = passage_end
    if cannot_answer_position is not None:
        last = cannot_answer_position - 1
    best = (-np.inf, -1, -1)
    if last >= passage_start:
        b = np.arange(passage_start, last + 1)
        offsets = np.arange(L)
        e = b[:, None] + offsets[None, :]
        valid = e <= last
        scores = np.where(valid, lb[b][:, None] + le[np.minimum(e, last)], -np.inf)
        flat = int(np.argmax(scores))
        i, j = divmod(flat, L)
        if np.isfinite(scores[i, j]):
            best = (float(scores[i, j]), int(b[i]), int(e[i, j]))
    if cannot_answer_position is not None:
        c = cannot_answer_position
        score = float(lb[c] + le[c])
        # (c, c) sorts after every span that ends before c
        if score > best[0]:
            best = (score, c, c)
    score, b0, e0 = best
    return SpanPrediction(b0, e0, score, is_cannot_answer=(cannot_answer_position is not None and b0 == cannot_answer_position))


def aggregate_windows(predictions: Sequence[SpanPrediction]) -> SpanPrediction:
    """Highest score across windows; ties prefer a real answer, then the earliest window and begin."""
    if not predictions:
        raise ContractViolation("aggregate_windows needs at least one prediction")

    def key(item):
        idx, p = item
        return (-p.score, p.is_cannot_answer, idx, p.begin)

    return min(enumerate(predictions), key=key)[1]
