"""Prediction, evaluation and attention export on compiled datasets."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from hamqa import tensor as tn
from hamqa.data.batching import make_batches
from hamqa.data.corpus import FOLLOWUP_LABELS, YESNO_LABELS
from hamqa.data.dataset import CompiledDataset
from hamqa.heads import SpanPrediction, aggregate_windows, decode_span
from hamqa.history_attention import AttentionRecord, attention_record
from hamqa.metrics import EvalReport, GoldQuestion, evaluate
from hamqa.model import ModelConfig, forward
from hamqa.tensor import Tensor


def _softmax(x: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class QuestionPrediction:
    qid: str
    dialog_id: str
    answer_text: str
    yesno: str
    followup: str
    span: SpanPrediction
    yesno_probs: np.ndarray
    followup_probs: np.ndarray

    def as_dict(self) -> dict:
        return {
            "qid": self.qid,
            "dialog_id": self.dialog_id,
            "answer_text": self.answer_text,
            "yesno": self.yesno,
            "followup": self.followup,
        }


@dataclass
class _Accumulator:
    spans: list[SpanPrediction] = field(default_factory=list)
    yesno: list[np.ndarray] = field(default_factory=list)
    followup: list[np.ndarray] = field(default_factory=list)


def run_model(
    params: dict[str, Tensor],
    model_config: ModelConfig,
    dataset: CompiledDataset,
    batch_size: int = 24,
    max_answer_length: int = 40,
    keep_attention: bool = False,
):
    """Forward every (question, window) group once, without dropout.

    Returns ``(per-question accumulators, attention records)``.
    """
    acc: dict[int, _Accumulator] = {}
    records: list[AttentionRecord] = []
    a = dataset.arrays
    for batch in make_batches(dataset, max(batch_size, dataset.config.max_history)):
        out = forward(params, model_config, batch, rng=None)
        pb = _softmax(out.begin_logits.data, batch.span_mask)
        pe = _softmax(out.end_logits.data, batch.span_mask)
        py = _softmax(out.yesno_logits.data)
        pf = _softmax(out.followup_logits.data)
        for g in range(batch.num_groups):
            first = int(batch.rows[batch.group_index[g, 0]])
            start, end = int(a["passage_start"][first]), int(a["passage_end"][first])
            pred = decode_span(pb[g], pe[g], start, end, max_answer_length, cannot_answer_position=end)
            pred.window_index = int(batch.window_index[g])
            pred.answer_text = "CANNOTANSWER" if pred.is_cannot_answer else dataset.span_text(first, pred.begin, pred.end)
            q = int(batch.question_index[g])
            slot = acc.setdefault(q, _Accumulator())
            slot.spans.append(pred)
            slot.yesno.append(py[g])
            slot.followup.append(pf[g])
            if keep_attention:
                n = int(batch.group_mask[g].sum())
                rows = batch.rows[batch.group_index[g, :n]]
                weights = out.token_weights.data[g] if out.token_weights is not None else out.sequence_weights.data[g]
                meta = dataset.questions[q]
                records.append(
                    attention_record(
                        weights,
                        batch.group_mask[g],
                        meta.qid,
                        meta.turn_index,
                        pred.window_index,
                        [int(t) for t in a["history_turn"][rows]],
                        [int(r) for r in a["relative_position"][rows]],
                        tokens=dataset.vocabulary.decode(a["input_ids"][first]),
                        max_seq_length=dataset.config.max_seq_length,
                    )
                )
    return acc, records


def predict(
    params: dict[str, Tensor],
    model_config: ModelConfig,
    dataset: CompiledDataset,
    batch_size: int = 24,
    max_answer_length: int = 40,
) -> list[QuestionPrediction]:
    """One prediction per question: best span over windows, act probabilities averaged over windows."""
    acc, _ = run_model(params, model_config, dataset, batch_size, max_answer_length)
    out = []
    for q, meta in enumerate(dataset.questions):
        slot = acc[q]
        span = aggregate_windows(sorted(slot.spans, key=lambda p: p.window_index))
        yp = np.mean(slot.yesno, axis=0)
        fp = np.mean(slot.followup, axis=0)
        out.append(
            QuestionPrediction(
                qid=meta.qid,
                dialog_id=meta.dialog_id,
                answer_text=span.answer_text,
                yesno=YESNO_LABELS[int(np.argmax(yp))],
                followup=FOLLOWUP_LABELS[int(np.argmax(fp))],
                span=span,
                yesno_probs=yp,
                followup_probs=fp,
            )
        )
    return out


def gold_from_dataset(dataset: CompiledDataset) -> list[GoldQuestion]:
    return [
        GoldQuestion(q.qid, q.dialog_id, list(q.references), YESNO_LABELS[q.yesno], FOLLOWUP_LABELS[q.followup])
        for q in dataset.questions
    ]


def evaluate_dataset(params, model_config: ModelConfig, dataset: CompiledDataset, config=None) -> EvalReport:
    batch_size = getattr(config, "batch_size", 24)
    max_len = getattr(config, "max_answer_length", 40)
    preds = predict(params, model_config, dataset, batch_size, max_len)
    return evaluate({p.qid: p.as_dict() for p in preds}, gold_from_dataset(dataset))


def exact_match_rate(predictions: list[QuestionPrediction], dataset: CompiledDataset) -> float:
    """Share of questions whose predicted token span equals the gold span exactly."""
    from hamqa.metrics import normalize_answer

    hits = 0
    for p, q in zip(predictions, dataset.questions):
        hits += normalize_answer(p.answer_text) == normalize_answer(q.answer_text)
    return hits / len(predictions) if predictions else 0.0


# -- attention export -------------------------------------------------------------


def attention_records(params, model_config: ModelConfig, dataset: CompiledDataset, batch_size: int = 24):
    with tn.precision(params[next(iter(params))].dtype):
        _, records = run_model(params, model_config, dataset, batch_size, keep_attention=True)
    return records


def export_attention(records: list[AttentionRecord], dataset: CompiledDataset, out_dir) -> list[Path]:
    """Write one CSV and one JSON per (question, window).

    Rows are relative history positions ``0..k-1`` (``k - i`` for history turn
    ``i``), columns are token positions ``0..M-1``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_qid = {q.qid: q for q in dataset.questions}
    written = []
    for rec in records:
        matrix = rec.by_relative_position()
        meta = by_qid[rec.qid]
        stem = f"{_safe(rec.qid)}.w{rec.window_index}"
        row_labels = [f"k-i={r}" for r in range(matrix.shape[0])]
        csv_path = out / f"{stem}.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["relative_position \\ token_position"] + list(range(matrix.shape[1])))
            for label, row in zip(row_labels, matrix):
                writer.writerow([label] + [f"{v:.6g}" for v in row])
        dialog = [q for q in dataset.questions if q.dialog_id == meta.dialog_id and q.turn_index <= meta.turn_index]
        payload = {
            "qid": rec.qid,
            "turn": rec.turn_index,
            "window": rec.window_index,
            "granularity": rec.granularity,
            "row_axis": "relative history position (k - i)",
            "column_axis": "token position",
            "row_labels": row_labels,
            "tokens": rec.tokens,
            "weights": matrix.round(8).tolist(),
            "dialog": [
                {"turn": q.turn_index, "question": q.question, "answer": q.answer_text} for q in dialog
            ],
            "passage": dataset.passages[meta.dialog_id],
        }
        json_path = out / f"{stem}.json"
        json_path.write_text(json.dumps(payload, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
        written += [csv_path, json_path]
    return written


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)
