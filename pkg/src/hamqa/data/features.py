"""Instance variations, sliding windows and packed token sequences.

A question at turn ``k`` with ``n`` passage windows expands into ``n*(k-1)``
sequences, one per (window, history turn). Each packed sequence looks like::

    [CLS] question [SEP] window-body CANNOTANSWER [SEP] [PAD] ...

Every window carries its own copy of the CANNOTANSWER sentinel so that a
window that misses the gold answer still has a valid span target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from hamqa.data.corpus import Dialog, Passage
from hamqa.data.tokenization import CLS, PAD, SEP, Offset, Vocabulary
from hamqa.errors import ConfigError

NUM_SPECIAL = 3  # [CLS], [SEP], [SEP]


@dataclass(frozen=True)
class InstanceVariation:
    """(current question, passage window, one history turn).

    ``history_turn`` is ``i`` in ``1..k-1``; the single zero-history
    variation of a first question uses ``history_turn = 0`` and
    ``relative_position = 0``.
    """

    dialog_id: str
    turn_index: int
    history_turn: int
    window_index: int
    relative_position: int


@dataclass
class TokenSequence:
    input_ids: np.ndarray
    segment_ids: np.ndarray
    position_ids: np.ndarray
    poshae_ids: np.ndarray
    attention_mask: np.ndarray
    token_offsets: np.ndarray  # (M, 2) passage char offsets, -1 outside the passage window
    passage_start: int  # first window token
    passage_end: int  # the window's CANNOTANSWER token
    start_position: int = -1
    end_position: int = -1

    @property
    def length(self) -> int:
        return int(self.attention_mask.sum())

    @property
    def cannot_answer_position(self) -> int:
        return self.passage_end

    def span_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.input_ids), dtype=bool)
        mask[self.passage_start : self.passage_end + 1] = True
        return mask


def slide_window(passage_tokens, capacity: int, stride: int) -> list[tuple[int, int]]:
    """``[start, end)`` windows over a token list (or a token count).

    Windows start at multiples of ``stride`` and generation stops at the
    first window that reaches the end of the passage.
    """
    if capacity < 1 or stride < 1:
        raise ConfigError(f"window capacity and stride must be >= 1, got {capacity} and {stride}")
    n = passage_tokens if isinstance(passage_tokens, int) else len(passage_tokens)
    if n == 0:
        return [(0, 0)]
    windows = []
    start = 0
    while True:
        end = min(start + capacity, n)
        windows.append((start, end))
        if end == n:
            return windows
        start += min(end - start, stride)


def build_variations(
    dialog: Dialog, k: int, n_windows: int = 1, max_history: Optional[int] = None
) -> list[InstanceVariation]:
    """All variations of turn ``k``, window-major then history-turn order.

    When more than ``max_history`` turns precede ``k``, only the most recent
    ``max_history`` are kept.
    """
    if not 1 <= k <= len(dialog.turns):
        raise IndexError(f"turn {k} outside 1..{len(dialog.turns)} for dialog {dialog.id}")
    if n_windows < 1:
        raise ConfigError("a passage has at least one window")
    first = 1
    if max_history is not None and k - 1 > max_history:
        first = k - max_history
    out = []
    for w in range(n_windows):
        if k == 1:
            out.append(InstanceVariation(dialog.id, 1, 0, w, 0))
            continue
        for i in range(first, k):
            out.append(InstanceVariation(dialog.id, k, i, w, k - i))
    return out


def _overlaps(span: Offset, other: Offset) -> bool:
    return span[0] < other[1] and other[0] < span[1]


def assign_poshae_ids(
    token_offsets: np.ndarray, history_answer: Optional[Offset], relative_position: int
) -> np.ndarray:
    """``relative_position`` on passage tokens overlapping the history answer, else 0.

    ``token_offsets`` holds one ``(start, end)`` character pair per sequence
    position; non-passage positions carry ``-1``.
    """
    ids = np.zeros(len(token_offsets), dtype=np.int32)
    if history_answer is None or relative_position == 0:
        return ids
    starts = token_offsets[:, 0]
    ends = token_offsets[:, 1]
    hit = (starts >= 0) & (starts < history_answer[1]) & (history_answer[0] < ends)
    ids[hit] = relative_position
    return ids


def answer_token_span(passage: Passage, span: Offset) -> tuple[int, int]:
    """Passage-level token range ``[first, last]`` covering a character span."""
    hits = [j for j, off in enumerate(passage.offsets) if _overlaps(off, span)]
    if not hits:
        raise ValueError(f"character span {span} covers no token of passage {passage.id}")
    return hits[0], hits[-1]


def pack_sequence(
    question_ids: Sequence[int],
    passage: Passage,
    window: tuple[int, int],
    vocabulary: Vocabulary,
    max_seq_length: int,
    gold_tokens: Optional[tuple[int, int]] = None,
    history_answer: Optional[Offset] = None,
    relative_position: int = 0,
) -> TokenSequence:
    """Lay out one variation as a fixed-length sequence.

    ``window`` indexes passage body tokens (the sentinel excluded);
    ``gold_tokens`` is the passage-level token range of the gold answer.
    Gold labels outside the window fall back to the window's sentinel.
    """
    M = max_seq_length
    body_start, body_end = window
    n_body = body_end - body_start
    length = len(question_ids) + n_body + 1 + NUM_SPECIAL
    if length > M:
        raise ConfigError(
            f"sequence of {length} tokens (question {len(question_ids)}, window {n_body + 1}) exceeds {M}"
        )
    sentinel = passage.body_length
    passage_ids = vocabulary.encode(passage.tokens[body_start:body_end]) + [vocabulary.id(passage.tokens[sentinel])]
    ids = [vocabulary.id(CLS)] + list(question_ids) + [vocabulary.id(SEP)]
    passage_start = len(ids)
    ids += passage_ids + [vocabulary.id(SEP)]
    passage_end = passage_start + n_body

    input_ids = np.full(M, vocabulary.id(PAD), dtype=np.int32)
    input_ids[: len(ids)] = ids
    segment_ids = np.zeros(M, dtype=np.int32)
    segment_ids[passage_start : len(ids)] = 1
    mask = np.zeros(M, dtype=np.uint8)
    mask[: len(ids)] = 1
    offsets = np.full((M, 2), -1, dtype=np.int32)
    if n_body:
        offsets[passage_start:passage_end] = passage.offsets[body_start:body_end]
    offsets[passage_end] = passage.offsets[sentinel]

    seq = TokenSequence(
        input_ids=input_ids,
        segment_ids=segment_ids,
        position_ids=np.arange(M, dtype=np.int32),
        poshae_ids=assign_poshae_ids(offsets, history_answer, relative_position),
        attention_mask=mask,
        token_offsets=offsets,
        passage_start=passage_start,
        passage_end=passage_end,
    )
    if gold_tokens is not None:
        first, last = gold_tokens
        if first == sentinel or not (body_start <= first and last < body_end):
            seq.start_position = seq.end_position = passage_end
        else:
            seq.start_position = passage_start + first - body_start
            seq.end_position = passage_start + last - body_start
    return seq


def unpack_span(passage: Passage, sequence: TokenSequence, begin: int, end: int) -> str:
    """Source text covered by sequence positions ``begin..end`` inclusive."""
    s = int(sequence.token_offsets[begin, 0])
    e = int(sequence.token_offsets[end, 1])
    return passage.text[s:e]
