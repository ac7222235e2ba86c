"""Compiled datasets: flat per-variation arrays plus per-question metadata.

On disk a compiled dataset is a directory::

    manifest.json     format version, data config, field table (dtype, shape)
    vocab.txt         one token per line, line number = id
    questions.json    per-question metadata and passage texts
    <field>.bin       raw little-endian array, C order, one per field

Writing the same dataset twice produces byte-identical files.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from hamqa.data.corpus import Dialog
from hamqa.data.features import (
    NUM_SPECIAL,
    TokenSequence,
    answer_token_span,
    build_variations,
    pack_sequence,
    slide_window,
)
from hamqa.data.tokenization import Tokenizer, Vocabulary
from hamqa.errors import CheckpointError, ConfigError

CACHE_VERSION = 1

SEQ_FIELDS = ("input_ids", "segment_ids", "position_ids", "poshae_ids", "attention_mask")
ROW_FIELDS = (
    "start_positions",
    "end_positions",
    "passage_start",
    "passage_end",
    "question_index",
    "window_index",
    "history_turn",
    "relative_position",
)
FIELD_DTYPES = {name: "<i4" for name in SEQ_FIELDS + ROW_FIELDS + ("token_offsets",)}
FIELD_DTYPES["attention_mask"] = "|u1"


@dataclass
class DataConfig:
    max_seq_length: int = 384
    max_question_length: int = 64
    doc_stride: int = 128
    max_history: int = 11
    tokenizer: str = "whitespace"

    def validate(self) -> None:
        if self.max_seq_length < 8:
            raise ConfigError("max_seq_length must be >= 8")
        if self.max_history < 1:
            raise ConfigError("max_history must be >= 1")
        if self.max_question_length + NUM_SPECIAL + 2 > self.max_seq_length:
            raise ConfigError(
                f"question budget {self.max_question_length} leaves no passage room in {self.max_seq_length} tokens"
            )


@dataclass
class QuestionMeta:
    qid: str
    dialog_id: str
    turn_index: int
    question: str
    answer_text: str
    references: list[str]
    yesno: int
    followup: int
    n_windows: int
    history_answers: list[str] = field(default_factory=list)


@dataclass
class CompiledDataset:
    config: DataConfig
    vocabulary: Vocabulary
    arrays: dict[str, np.ndarray]
    questions: list[QuestionMeta]
    passages: dict[str, str]

    def __len__(self) -> int:
        return len(self.arrays["input_ids"])

    @property
    def num_questions(self) -> int:
        return len(self.questions)

    def groups(self) -> list[np.ndarray]:
        """Row indices of each (question, window) group, in dataset order."""
        q = self.arrays["question_index"]
        w = self.arrays["window_index"]
        if len(q) == 0:
            return []
        change = np.flatnonzero((np.diff(q) != 0) | (np.diff(w) != 0)) + 1
        return np.split(np.arange(len(q)), change)

    def sequence(self, row: int) -> TokenSequence:
        a = self.arrays
        return TokenSequence(
            input_ids=a["input_ids"][row],
            segment_ids=a["segment_ids"][row],
            position_ids=a["position_ids"][row],
            poshae_ids=a["poshae_ids"][row],
            attention_mask=a["attention_mask"][row],
            token_offsets=a["token_offsets"][row],
            passage_start=int(a["passage_start"][row]),
            passage_end=int(a["passage_end"][row]),
            start_position=int(a["start_positions"][row]),
            end_position=int(a["end_positions"][row]),
        )

    def span_text(self, row: int, begin: int, end: int) -> str:
        q = self.questions[int(self.arrays["question_index"][row])]
        offsets = self.arrays["token_offsets"][row]
        return self.passages[q.dialog_id][int(offsets[begin, 0]) : int(offsets[end, 1])]

    def subset_questions(self, question_ids) -> "CompiledDataset":
        """Dataset restricted to the given question indices (re-numbered)."""
        keep = sorted(set(int(i) for i in question_ids))
        remap = {old: new for new, old in enumerate(keep)}
        rows = np.flatnonzero(np.isin(self.arrays["question_index"], keep))
        arrays = {k: v[rows].copy() for k, v in self.arrays.items()}
        arrays["question_index"] = np.array([remap[int(i)] for i in arrays["question_index"]], dtype=np.int32)
        questions = [self.questions[i] for i in keep]
        passages = {q.dialog_id: self.passages[q.dialog_id] for q in questions}
        return CompiledDataset(self.config, self.vocabulary, arrays, questions, passages)


def compile_dialogs(
    dialogs: list[Dialog], vocabulary: Vocabulary, config: DataConfig
) -> CompiledDataset:
    """Tokenize, window and pack every question of every dialog."""
    config.validate()
    tokenizer = Tokenizer(vocabulary, config.tokenizer)
    rows: dict[str, list] = {name: [] for name in SEQ_FIELDS + ROW_FIELDS + ("token_offsets",)}
    questions: list[QuestionMeta] = []
    passages: dict[str, str] = {}
    for dialog in dialogs:
        passage = dialog.passage.tokenize(tokenizer)
        passages[dialog.id] = passage.text
        for turn in dialog.turns:
            q_tokens, _ = tokenizer(turn.question)
            q_ids = vocabulary.encode(q_tokens[: config.max_question_length])
            capacity = config.max_seq_length - len(q_ids) - NUM_SPECIAL - 1
            windows = slide_window(passage.body_length, capacity, config.doc_stride)
            gold = answer_token_span(passage, turn.answer_span)
            variations = build_variations(dialog, turn.turn_index, len(windows), config.max_history)
            q_index = len(questions)
            history = dialog.history(turn.turn_index)
            questions.append(
                QuestionMeta(
                    qid=turn.qid,
                    dialog_id=dialog.id,
                    turn_index=turn.turn_index,
                    question=turn.question,
                    answer_text=turn.answer_text,
                    references=list(turn.references),
                    yesno=turn.yesno_id,
                    followup=turn.followup_id,
                    n_windows=len(windows),
                    history_answers=[h.answer_text for h in history],
                )
            )
            for var in variations:
                answer = history[var.history_turn - 1].answer_span if var.history_turn else None
                seq = pack_sequence(
                    q_ids,
                    passage,
                    windows[var.window_index],
                    vocabulary,
                    config.max_seq_length,
                    gold_tokens=gold,
                    history_answer=answer,
                    relative_position=var.relative_position,
                )
                for name in SEQ_FIELDS:
                    rows[name].append(getattr(seq, name))
                rows["token_offsets"].append(seq.token_offsets)
                rows["start_positions"].append(seq.start_position)
                rows["end_positions"].append(seq.end_position)
                rows["passage_start"].append(seq.passage_start)
                rows["passage_end"].append(seq.passage_end)
                rows["question_index"].append(q_index)
                rows["window_index"].append(var.window_index)
                rows["history_turn"].append(var.history_turn)
                rows["relative_position"].append(var.relative_position)
    M = config.max_seq_length
    arrays = {}
    for name, values in rows.items():
        dtype = np.dtype(FIELD_DTYPES[name]).newbyteorder("=")
        if name == "token_offsets":
            arr = np.array(values, dtype=dtype).reshape(-1, M, 2)
        elif name in SEQ_FIELDS:
            arr = np.array(values, dtype=dtype).reshape(-1, M)
        else:
            arr = np.array(values, dtype=dtype)
        arrays[name] = arr
    return CompiledDataset(config, vocabulary, arrays, questions, passages)


def corpus_summary(dialogs: list[Dialog]) -> dict:
    """Dialog/question counts and the history-turn distribution."""
    hist = [t.turn_index - 1 for d in dialogs for t in d.turns]
    counts: dict[int, int] = {}
    for h in hist:
        counts[h] = counts.get(h, 0) + 1
    return {
        "dialogs": len(dialogs),
        "questions": len(hist),
        "history_turns": {
            "min": min(hist) if hist else 0,
            "avg": round(statistics.fmean(hist), 1) if hist else 0.0,
            "median": statistics.median(hist) if hist else 0,
            "max": max(hist) if hist else 0,
            "histogram": {str(k): counts[k] for k in sorted(counts)},
        },
    }


def save_dataset(dataset: CompiledDataset, directory) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    fields = {}
    for name in sorted(dataset.arrays):
        arr = np.ascontiguousarray(dataset.arrays[name], dtype=np.dtype(FIELD_DTYPES[name]))
        (out / f"{name}.bin").write_bytes(arr.tobytes(order="C"))
        fields[name] = {"dtype": FIELD_DTYPES[name], "shape": list(arr.shape)}
    manifest = {
        "format": "hamqa-dataset",
        "version": CACHE_VERSION,
        "config": asdict(dataset.config),
        "rows": len(dataset),
        "questions": dataset.num_questions,
        "fields": fields,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    dataset.vocabulary.save(out / "vocab.txt")
    meta = {
        "questions": [asdict(q) for q in dataset.questions],
        "passages": dataset.passages,
    }
    (out / "questions.json").write_text(json.dumps(meta, indent=1, sort_keys=True, ensure_ascii=False) + "\n")


def load_dataset(directory) -> CompiledDataset:
    src = Path(directory)
    try:
        manifest = json.loads((src / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{src}: unreadable dataset manifest ({exc})") from None
    if manifest.get("format") != "hamqa-dataset" or manifest.get("version") != CACHE_VERSION:
        raise CheckpointError(
            f"{src}: dataset cache version {manifest.get('version')} is not supported (expected {CACHE_VERSION})"
        )
    arrays = {}
    for name, info in manifest["fields"].items():
        raw = (src / f"{name}.bin").read_bytes()
        arr = np.frombuffer(raw, dtype=np.dtype(info["dtype"]))
        expected = int(np.prod(info["shape"]))
        if arr.size != expected:
            raise CheckpointError(f"{src}/{name}.bin holds {arr.size} values, manifest says {info['shape']}")
        arrays[name] = arr.reshape(info["shape"]).astype(np.dtype(info["dtype"]).newbyteorder("="))
    meta = json.loads((src / "questions.json").read_text(encoding="utf-8"))
    return CompiledDataset(
        config=DataConfig(**manifest["config"]),
        vocabulary=Vocabulary.from_file(src / "vocab.txt"),
        arrays=arrays,
        questions=[QuestionMeta(**q) for q in meta["questions"]],
        passages=meta["passages"],
    )


def build_vocabulary(dialogs: list[Dialog], mode: str, vocab_file: Optional[str] = None) -> Vocabulary:
    if vocab_file:
        return Vocabulary.from_file(vocab_file)
    if mode == "subword":
        raise ConfigError("subword tokenization needs --vocab-file")
    texts = []
    for d in dialogs:
        texts.append(d.passage.body)
        texts.extend(t.question for t in d.turns)
    return Vocabulary.from_texts(texts)
