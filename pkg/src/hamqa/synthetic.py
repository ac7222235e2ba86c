"""Generated QuAC-format corpora for desk-scale experiments.

``toy_corpus``
    20 short dialogs of fact questions over random-word passages, a few of
    them unanswerable. Used as a sanity check that the whole stack can
    memorise its training set.

``topic_return_corpus``
    Dialogs whose last question only makes sense through a remote turn.
    The passage is a run of sentences ``h1 h2 h3 , t1 t2 .``. Turn 1 asks
    about part of the head of sentence A; turns 2..k-1 ask about different
    parts of the head of one other sentence B; turn k asks "what was the
    first topic again ?" and its answer repeats turn 1's answer.

    Every variation marks a plausible answer, and the recent turns all mark
    sentence B. Only the most remote variation marks the right span, so a
    plain average over variations is outvoted while learned attention can
    pick that one turn out.
"""

from __future__ import annotations

import itertools

import numpy as np

from hamqa.data.corpus import FOLLOWUP_TO_CODE, YESNO_TO_CODE

RETURN_QUESTION = "what was the first topic again ?"
# word ranges [lo, hi) inside a three-word sentence head
_SUBSPANS = ((0, 3), (0, 2), (1, 3), (0, 1), (1, 2), (2, 3))
_TOY_PREFIXES = ("what is", "who was", "where did", "when was", "how did", "why is")


def _words(rng: np.random.Generator, pool: list[str], n: int) -> list[str]:
    return [pool[int(i)] for i in rng.integers(0, len(pool), n)]


def _vocab_pool(size: int) -> list[str]:
    """Distinct pronounceable four-letter words (up to 4900)."""
    words = ["".join(w) for w in itertools.product("bdfgklmnprstvz", "aeiou", "bdfgklmnprstvz", "aeiou")]
    return words[:size]


def _qa(qid, question, text, start, yesno="x", followup="y"):
    return {
        "id": qid,
        "question": question,
        "orig_answer": {"text": text, "answer_start": start},
        "answers": [{"text": text, "answer_start": start}],
        "yesno": yesno,
        "followup": followup,
    }


class _Builder:
    """Accumulates passage text and remembers character spans of pieces."""

    def __init__(self):
        self.parts: list[str] = []
        self.length = 0

    def add(self, text: str) -> tuple[int, str]:
        if self.parts:
            self.parts.append(" ")
            self.length += 1
        start = self.length
        self.parts.append(text)
        self.length += len(text)
        return start, text

    def text(self) -> str:
        return "".join(self.parts) + " CANNOTANSWER"


def toy_corpus(n_dialogs: int = 20, turns: int = 5, seed: int = 0) -> dict:
    """Small memorisable corpus; every label is fixed by the generator seed."""
    rng = np.random.default_rng(seed)
    pool = _vocab_pool(400)
    yesno_codes = list(YESNO_TO_CODE.values())
    followup_codes = list(FOLLOWUP_TO_CODE.values())
    paragraphs = []
    for d in range(n_dialogs):
        b = _Builder()
        facts = []
        for s in range(turns + 1):
            lead = " ".join(_words(rng, pool, 3))
            b.add(lead)
            start, text = b.add(" ".join(_words(rng, pool, int(rng.integers(1, 4)))))
            b.add(".")
            facts.append((lead, start, text))
        context = b.text()
        qas = []
        for k in range(turns):
            qid = f"toy{d:03d}_q#{k}"
            lead, start, text = facts[k]
            question = f"{_TOY_PREFIXES[int(rng.integers(len(_TOY_PREFIXES)))]} {lead} ?"
            if rng.random() < 0.15:
                text, start = "CANNOTANSWER", len(context) - len("CANNOTANSWER")
                question = f"{_TOY_PREFIXES[0]} {' '.join(_words(rng, pool, 3))} ?"
            qas.append(
                _qa(
                    qid,
                    question,
                    text,
                    start,
                    yesno=yesno_codes[int(rng.integers(3))],
                    followup=followup_codes[int(rng.integers(3))],
                )
            )
        paragraphs.append({"id": f"toy{d:03d}", "context": context, "qas": qas})
    return {"version": "synthetic", "data": [{"title": "toy", "paragraphs": paragraphs}]}


def topic_return_corpus(
    n_dialogs: int = 1000,
    seed: int = 0,
    sentences: int = 8,
    min_turns: int = 3,
    max_turns: int = 7,
    vocabulary: int = 50,
) -> dict:
    """Dialogs whose final answer depends on the most remote history turn."""
    if max_turns - 2 > len(_SUBSPANS):
        raise ValueError(f"at most {len(_SUBSPANS) + 2} turns per dialog")
    rng = np.random.default_rng(seed)
    pool = _vocab_pool(vocabulary)
    paragraphs = []
    for d in range(n_dialogs):
        b = _Builder()
        layout = []
        for _ in range(sentences):
            head = [b.add(w) for w in _words(rng, pool, 3)]
            b.add(",")
            tail = b.add(" ".join(_words(rng, pool, 2)))
            b.add(".")
            layout.append((head, tail))
        context = b.text()
        k = int(rng.integers(min_turns, max_turns + 1))
        a, other = (int(x) for x in rng.choice(sentences, size=2, replace=False))

        def piece(sentence, lo, hi):
            head = layout[sentence][0]
            start = head[lo][0]
            return context[start : head[hi - 1][0] + len(head[hi - 1][1])], start

        first = piece(a, *_SUBSPANS[int(rng.integers(len(_SUBSPANS)))])
        qas = [_qa(f"tr{d:04d}_q#0", "tell me about this ?", *first)]
        for t, j in enumerate(rng.choice(len(_SUBSPANS), size=k - 2, replace=False), start=1):
            qas.append(_qa(f"tr{d:04d}_q#{t}", "and anything else ?", *piece(other, *_SUBSPANS[int(j)])))
        qas.append(_qa(f"tr{d:04d}_q#{k - 1}", RETURN_QUESTION, *first))
        paragraphs.append({"id": f"tr{d:04d}", "context": context, "qas": qas})
    return {"version": "synthetic", "data": [{"title": "topic return", "paragraphs": paragraphs}]}


def return_question_ids(dataset) -> list[int]:
    """Indices of the final topic-return questions in a compiled dataset."""
    return [i for i, q in enumerate(dataset.questions) if q.question == RETURN_QUESTION]
