"""QuAC v0.2 corpus parsing into dialogs, passages and question turns."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from hamqa.data.tokenization import CANNOTANSWER, Offset, Tokenizer
from hamqa.errors import CorpusParseError, DataIntegrityError

YESNO_LABELS = ("yes", "no", "neither")
FOLLOWUP_LABELS = ("follow up", "maybe follow up", "don't follow up")
YESNO_CODES = {"y": "yes", "n": "no", "x": "neither"}
FOLLOWUP_CODES = {"y": "follow up", "m": "maybe follow up", "n": "don't follow up"}
YESNO_TO_CODE = {v: k for k, v in YESNO_CODES.items()}
FOLLOWUP_TO_CODE = {v: k for k, v in FOLLOWUP_CODES.items()}


@dataclass
class Passage:
    """Passage text; ``tokens``/``offsets`` are filled by :meth:`tokenize`.

    The last token is always the CANNOTANSWER sentinel.
    """

    id: str
    text: str
    tokens: list[str] = field(default_factory=list)
    offsets: list[Offset] = field(default_factory=list)

    def __post_init__(self):
        stripped = self.text.rstrip()
        if not stripped.endswith(CANNOTANSWER):
            self.text = stripped + " " + CANNOTANSWER
        else:
            self.text = stripped

    @property
    def sentinel_span(self) -> Offset:
        return (len(self.text) - len(CANNOTANSWER), len(self.text))

    @property
    def body(self) -> str:
        return self.text[: self.sentinel_span[0]]

    def tokenize(self, tokenizer: Tokenizer) -> "Passage":
        tokens, offsets = tokenizer(self.body)
        self.tokens = tokens + [CANNOTANSWER]
        self.offsets = offsets + [self.sentinel_span]
        return self

    @property
    def body_length(self) -> int:
        """Number of tokens before the sentinel."""
        return len(self.tokens) - 1


@dataclass
class QuestionTurn:
    qid: str
    turn_index: int  # k, 1-based
    question: str
    answer_text: str
    answer_start: int
    yesno: str
    followup: str
    references: list[str] = field(default_factory=list)

    @property
    def answer_span(self) -> Offset:
        return (self.answer_start, self.answer_start + len(self.answer_text))

    @property
    def is_cannot_answer(self) -> bool:
        return self.answer_text == CANNOTANSWER

    @property
    def yesno_id(self) -> int:
        return YESNO_LABELS.index(self.yesno)

    @property
    def followup_id(self) -> int:
        return FOLLOWUP_LABELS.index(self.followup)


@dataclass
class Dialog:
    id: str
    passage: Passage
    turns: list[QuestionTurn]
    title: str = ""

    def history(self, k: int) -> list[QuestionTurn]:
        """H_k: the turns preceding turn ``k`` (1-based), oldest first."""
        return self.turns[: k - 1]


def _require(obj: Any, key: str, kind, path: str):
    if not isinstance(obj, dict):
        raise CorpusParseError("expected an object", path)
    if key not in obj:
        raise CorpusParseError(f"missing field {key!r}", path)
    value = obj[key]
    if not isinstance(value, kind):
        raise CorpusParseError(f"field {key!r} has type {type(value).__name__}", f"{path}.{key}")
    return value


def _parse_turn(qa: dict, k: int, passage: Passage, path: str) -> QuestionTurn:
    qid = _require(qa, "id", str, path)
    question = _require(qa, "question", str, path)
    orig = _require(qa, "orig_answer", dict, path)
    text = _require(orig, "text", str, f"{path}.orig_answer")
    start = _require(orig, "answer_start", int, f"{path}.orig_answer")
    yesno = _require(qa, "yesno", str, path)
    followup = _require(qa, "followup", str, path)
    if yesno not in YESNO_CODES:
        raise CorpusParseError(f"yesno code {yesno!r} not in {sorted(YESNO_CODES)}", f"{path}.yesno")
    if followup not in FOLLOWUP_CODES:
        raise CorpusParseError(
            f"followup code {followup!r} not in {sorted(FOLLOWUP_CODES)}", f"{path}.followup"
        )
    if text == CANNOTANSWER:
        start = passage.sentinel_span[0]
    elif passage.text[start : start + len(text)] != text:
        raise DataIntegrityError(
            f"question {qid}: answer text {text!r} does not match context at offset {start}"
        )
    answers = qa.get("answers", [])
    if not isinstance(answers, list):
        raise CorpusParseError("field 'answers' must be a list", f"{path}.answers")
    references = []
    for j, ans in enumerate(answers):
        references.append(_require(ans, "text", str, f"{path}.answers[{j}]"))
    if not references:
        references = [text]
    return QuestionTurn(
        qid=qid,
        turn_index=k,
        question=question,
        answer_text=text,
        answer_start=start,
        yesno=YESNO_CODES[yesno],
        followup=FOLLOWUP_CODES[followup],
        references=references,
    )


def parse_corpus(document: Union[dict, str, Path], limit: Optional[int] = None) -> list[Dialog]:
    """Parse a QuAC-format document (a dict, or a path to a JSON file).

    Each paragraph becomes one :class:`Dialog`. ``limit`` keeps only the
    first ``limit`` dialogs.
    """
    if not isinstance(document, dict):
        path = Path(document)
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", str(path))
        except OSError as exc:
            raise CorpusParseError(f"cannot read corpus: {exc}", str(path))
    data = _require(document, "data", list, "$")
    dialogs: list[Dialog] = []
    for a, article in enumerate(data):
        apath = f"$.data[{a}]"
        paragraphs = _require(article, "paragraphs", list, apath)
        title = article.get("title", "") if isinstance(article, dict) else ""
        for p, para in enumerate(paragraphs):
            if limit is not None and len(dialogs) >= limit:
                return dialogs
            ppath = f"{apath}.paragraphs[{p}]"
            context = _require(para, "context", str, ppath)
            qas = _require(para, "qas", list, ppath)
            if not qas:
                raise CorpusParseError("dialog has no questions", f"{ppath}.qas")
            dialog_id = para.get("id")
            if not isinstance(dialog_id, str):
                first = qas[0].get("id", "") if isinstance(qas[0], dict) else ""
                dialog_id = first.split("_q#")[0] if first else f"dialog{len(dialogs)}"
            passage = Passage(id=dialog_id, text=context)
            turns = [_parse_turn(qa, k + 1, passage, f"{ppath}.qas[{k}]") for k, qa in enumerate(qas)]
            dialogs.append(Dialog(id=dialog_id, passage=passage, turns=turns, title=title))
    return dialogs


def history_turn_counts(dialogs: list[Dialog]) -> list[int]:
    """Number of preceding turns for every question in the corpus."""
    return [turn.turn_index - 1 for d in dialogs for turn in d.turns]
