"""Instance-aware batching.

All variations of one (question, window) group always land in the same
batch; different windows of one question may be split across batches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from hamqa.data.dataset import SEQ_FIELDS, CompiledDataset
from hamqa.errors import ConfigError


@dataclass
class Batch:
    batch_id: int
    rows: np.ndarray  # dataset rows, stacked in group order
    input_ids: np.ndarray  # (N, M)
    segment_ids: np.ndarray
    position_ids: np.ndarray
    poshae_ids: np.ndarray
    attention_mask: np.ndarray
    group_index: np.ndarray  # (G, I) positions into the N stacked rows
    group_mask: np.ndarray  # (G, I) True for real variations
    span_mask: np.ndarray  # (G, M) passage positions incl. the sentinel
    start_positions: np.ndarray  # (G,)
    end_positions: np.ndarray
    yesno: np.ndarray
    followup: np.ndarray
    question_index: np.ndarray
    window_index: np.ndarray

    @property
    def num_groups(self) -> int:
        return len(self.group_index)

    @property
    def num_sequences(self) -> int:
        return len(self.rows)


def pack_groups(sizes: Sequence[int], batch_size: int, order: Optional[Sequence[int]] = None) -> list[list[int]]:
    """Greedy next-fit packing of whole groups into batches of <= ``batch_size``."""
    order = range(len(sizes)) if order is None else order
    batches: list[list[int]] = []
    current: list[int] = []
    used = 0
    for g in order:
        size = sizes[g]
        if size > batch_size:
            raise ConfigError(
                f"group {g} has {size} variations but batch_size is {batch_size}; raise batch_size"
            )
        if used + size > batch_size and current:
            batches.append(current)
            current, used = [], 0
        current.append(g)
        used += size
    if current:
        batches.append(current)
    return batches


def collate(dataset: CompiledDataset, groups: list[np.ndarray], group_ids: Sequence[int], batch_id: int = 0) -> Batch:
    I = dataset.config.max_history
    a = dataset.arrays
    rows = np.concatenate([groups[g] for g in group_ids])
    G = len(group_ids)
    group_index = np.zeros((G, I), dtype=np.int64)
    group_mask = np.zeros((G, I), dtype=bool)
    cursor = 0
    first_rows = []
    for j, g in enumerate(group_ids):
        n = len(groups[g])
        group_index[j, :n] = np.arange(cursor, cursor + n)
        group_mask[j, :n] = True
        first_rows.append(groups[g][0])
        cursor += n
    first_rows = np.array(first_rows)
    M = dataset.config.max_seq_length
    pos = np.arange(M)
    span_mask = (pos[None, :] >= a["passage_start"][first_rows][:, None]) & (
        pos[None, :] <= a["passage_end"][first_rows][:, None]
    )
    q_index = a["question_index"][first_rows]
    return Batch(
        batch_id=batch_id,
        rows=rows,
        **{name: a[name][rows] for name in SEQ_FIELDS},
        group_index=group_index,
        group_mask=group_mask,
        span_mask=span_mask,
        start_positions=a["start_positions"][first_rows].astype(np.int64),
        end_positions=a["end_positions"][first_rows].astype(np.int64),
        yesno=np.array([dataset.questions[q].yesno for q in q_index], dtype=np.int64),
        followup=np.array([dataset.questions[q].followup for q in q_index], dtype=np.int64),
        question_index=q_index,
        window_index=a["window_index"][first_rows],
    )


def make_batches(
    dataset: CompiledDataset, batch_size: int, seed=None, groups: Optional[list[np.ndarray]] = None
) -> list[Batch]:
    """Shuffle groups with ``seed`` (no shuffle when None) and pack them."""
    groups = dataset.groups() if groups is None else groups
    sizes = [len(g) for g in groups]
    if any(s > dataset.config.max_history for s in sizes):
        raise ConfigError("a group has more variations than max_history slots")
    order = np.arange(len(groups))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(groups))
    plan = pack_groups(sizes, batch_size, order)
    return [collate(dataset, groups, ids, batch_id=b) for b, ids in enumerate(plan)]
