"""Word-level F1, human-equivalence (HEQ) rates and dialog-act accuracy.

Answer normalisation, applied to both sides before comparing bags of words:

1. lower-case
2. delete ASCII punctuation characters
3. split on whitespace

Articles are kept, so "leave the light" against "leave the light on" has
precision 1, recall 3/4 and F1 6/7.

Unlike the official QuAC scorer, no question is dropped for low annotator
agreement: every question counts.
"""

from __future__ import annotations

import collections
import json
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from hamqa.data.corpus import FOLLOWUP_CODES, FOLLOWUP_LABELS, YESNO_CODES, YESNO_LABELS, Dialog
from hamqa.errors import ContractViolation, DataError

_PUNCT = set(string.punctuation)


def normalize_answer(s: str) -> str:
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    return " ".join(s.split())


def _f1_tokens(pred: list[str], gold: list[str]) -> float:
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    common = collections.Counter(pred) & collections.Counter(gold)
    same = sum(common.values())
    if same == 0:
        return 0.0
    precision = same / len(pred)
    recall = same / len(gold)
    return 2 * precision * recall / (precision + recall)


def word_f1(prediction: str, references: Sequence[str]) -> float:
    """Best bag-of-words F1 of ``prediction`` against any reference, in [0, 1]."""
    if not references:
        raise ContractViolation("word_f1 needs at least one reference")
    pred = normalize_answer(prediction).split()
    return max(_f1_tokens(pred, normalize_answer(r).split()) for r in references)


def human_f1(references: Sequence[str]) -> float:
    """Leave-one-out agreement among references; 1.0 for a single reference."""
    if not references:
        raise ContractViolation("human_f1 needs at least one reference")
    if len(references) == 1:
        return 1.0
    scores = [word_f1(ref, list(references[:j]) + list(references[j + 1 :])) for j, ref in enumerate(references)]
    return sum(scores) / len(scores)


def heq(
    system_f1: Sequence[float], human: Sequence[float], dialog_ids: Sequence[str]
) -> tuple[float, float]:
    """(HEQ-Q, HEQ-D) as percentages.

    A question passes when system F1 >= human F1; a dialog passes when all
    of its questions pass.
    """
    if not (len(system_f1) == len(human) == len(dialog_ids)):
        raise DataError(
            f"heq: misaligned inputs ({len(system_f1)} system, {len(human)} human, {len(dialog_ids)} dialog ids)"
        )
    if not system_f1:
        return 0.0, 0.0
    passed = [s >= h for s, h in zip(system_f1, human)]
    per_dialog: dict[str, bool] = {}
    for d, ok in zip(dialog_ids, passed):
        per_dialog[d] = per_dialog.get(d, True) and ok
    heq_q = 100.0 * sum(passed) / len(passed)
    heq_d = 100.0 * sum(per_dialog.values()) / len(per_dialog)
    return heq_q, heq_d


def act_accuracy(predicted: Sequence[Optional[str]], gold: Sequence[str], labels: Sequence[str]) -> float:
    """Fraction of exact matches; a missing prediction counts as wrong."""
    if len(predicted) != len(gold):
        raise DataError(f"act_accuracy: {len(predicted)} predictions for {len(gold)} gold labels")
    for lab in gold:
        if lab not in labels:
            raise DataError(f"gold label {lab!r} not in {list(labels)}")
    for lab in predicted:
        if lab and lab not in labels:
            raise DataError(f"predicted label {lab!r} not in {list(labels)}")
    if not gold:
        return 0.0
    return sum(1 for p, g in zip(predicted, gold) if p == g) / len(gold)


@dataclass
class QuestionScore:
    qid: str
    dialog_id: str
    prediction: str
    f1: float  # percent
    human_f1: float  # percent
    yesno_correct: bool
    followup_correct: bool


@dataclass
class EvalReport:
    f1: float
    heq_q: float
    heq_d: float
    yesno_accuracy: float
    followup_accuracy: float
    questions: int = 0
    dialogs: int = 0
    rows: list[QuestionScore] = field(default_factory=list)

    def to_json(self, with_rows: bool = True) -> dict:
        out = asdict(self)
        if not with_rows:
            out.pop("rows")
        return out

    def table(self) -> str:
        lines = [
            f"{'metric':<20}{'value':>10}",
            f"{'F1':<20}{self.f1:>10.2f}",
            f"{'HEQ-Q':<20}{self.heq_q:>10.2f}",
            f"{'HEQ-D':<20}{self.heq_d:>10.2f}",
            f"{'Yes/No acc':<20}{100 * self.yesno_accuracy:>10.2f}",
            f"{'Follow up acc':<20}{100 * self.followup_accuracy:>10.2f}",
            f"{'questions':<20}{self.questions:>10d}",
            f"{'dialogs':<20}{self.dialogs:>10d}",
        ]
        return "\n".join(lines)


@dataclass
class GoldQuestion:
    qid: str
    dialog_id: str
    references: list[str]
    yesno: str
    followup: str


def gold_from_dialogs(dialogs: Iterable[Dialog]) -> list[GoldQuestion]:
    return [
        GoldQuestion(t.qid, d.id, list(t.references), t.yesno, t.followup)
        for d in dialogs
        for t in d.turns
    ]


def evaluate(predictions: dict[str, dict], gold: Sequence[GoldQuestion]) -> EvalReport:
    """Score ``qid -> {answer_text, yesno, followup}`` against gold questions.

    Dialog-act labels in ``predictions`` are full label strings; a missing
    question scores F1 0 and wrong acts.
    """
    rows = []
    for q in gold:
        pred = predictions.get(q.qid, {})
        text = pred.get("answer_text", "")
        f1 = 100.0 * word_f1(text, q.references) if pred else 0.0
        rows.append(
            QuestionScore(
                qid=q.qid,
                dialog_id=q.dialog_id,
                prediction=text,
                f1=f1,
                human_f1=100.0 * human_f1(q.references),
                yesno_correct=pred.get("yesno") == q.yesno,
                followup_correct=pred.get("followup") == q.followup,
            )
        )
    heq_q, heq_d = heq([r.f1 for r in rows], [r.human_f1 for r in rows], [r.dialog_id for r in rows])
    ya = act_accuracy([predictions.get(q.qid, {}).get("yesno") for q in gold], [q.yesno for q in gold], YESNO_LABELS)
    fa = act_accuracy(
        [predictions.get(q.qid, {}).get("followup") for q in gold], [q.followup for q in gold], FOLLOWUP_LABELS
    )
    return EvalReport(
        f1=sum(r.f1 for r in rows) / len(rows) if rows else 0.0,
        heq_q=heq_q,
        heq_d=heq_d,
        yesno_accuracy=ya,
        followup_accuracy=fa,
        questions=len(rows),
        dialogs=len({r.dialog_id for r in rows}),
        rows=rows,
    )


# -- prediction files ---------------------------------------------------------
#
# One JSON object per line, one line per dialog:
#   {"dialog_id": str, "qid": [str], "answer_text": [str],
#    "yesno": ["y"|"n"|"x"], "followup": ["y"|"m"|"n"]}
# The lists are aligned; act labels use the QuAC single-letter codes.


def write_predictions(path, per_question: Sequence[dict]) -> None:
    """``per_question`` items carry dialog_id, qid, answer_text, yesno, followup (label strings)."""
    from hamqa.data.corpus import FOLLOWUP_TO_CODE, YESNO_TO_CODE

    by_dialog: dict[str, dict] = {}
    for p in per_question:
        entry = by_dialog.setdefault(
            p["dialog_id"], {"dialog_id": p["dialog_id"], "qid": [], "answer_text": [], "yesno": [], "followup": []}
        )
        entry["qid"].append(p["qid"])
        entry["answer_text"].append(p["answer_text"])
        entry["yesno"].append(YESNO_TO_CODE[p["yesno"]])
        entry["followup"].append(FOLLOWUP_TO_CODE[p["followup"]])
    with open(path, "w", encoding="utf-8") as fh:
        for entry in by_dialog.values():
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")


def read_predictions(path) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{n}: invalid JSON ({exc.msg})") from None
        try:
            for qid, text, yn, fu in zip(entry["qid"], entry["answer_text"], entry["yesno"], entry["followup"]):
                out[qid] = {
                    "answer_text": text,
                    "yesno": YESNO_CODES.get(yn, yn),
                    "followup": FOLLOWUP_CODES.get(fu, fu),
                }
        except KeyError as exc:
            raise DataError(f"{path}:{n}: missing field {exc}") from None
    return out
