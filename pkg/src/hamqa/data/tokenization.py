"""Lower-casing tokenizers that keep a character offset for every token.

Two modes share one pre-split: text is cut on whitespace, and every
punctuation character becomes its own token. ``whitespace`` mode stops
there; ``subword`` mode further splits each word greedily into the longest
vocabulary pieces, marking word-internal pieces with ``##``.
"""

from __future__ import annotations

import collections
import unicodedata
from pathlib import Path
from typing import Iterable, Optional, Sequence

from hamqa.errors import ConfigError

PAD = "[PAD]"
UNK = "[UNK]"
CLS = "[CLS]"
SEP = "[SEP]"
CANNOTANSWER = "CANNOTANSWER"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, CANNOTANSWER)

MODES = ("whitespace", "subword")
MAX_WORD_CHARS = 100

Offset = tuple[int, int]


def _is_punctuation(ch: str) -> bool:
    cp = ord(ch)
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def split_words(text: str) -> list[Offset]:
    """Character spans of whitespace-delimited words, punctuation split off."""
    spans: list[Offset] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                spans.append((start, i))
                start = None
        elif _is_punctuation(ch):
            if start is not None:
                spans.append((start, i))
                start = None
            spans.append((i, i + 1))
        elif start is None:
            start = i
    if start is not None:
        spans.append((start, len(text)))
    return spans


class Vocabulary:
    """Bidirectional token <-> id map; special tokens always present."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        for special in SPECIAL_TOKENS:
            if special not in tokens:
                tokens.append(special)
        self.tokens = tokens
        self.index = {tok: i for i, tok in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ConfigError("vocabulary contains duplicate entries")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @classmethod
    def from_file(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        tokens = [line.strip() for line in lines if line.strip()]
        if not tokens:
            raise ConfigError(f"vocabulary file {path} is empty")
        return cls(tokens)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def from_texts(cls, texts: Iterable[str], min_count: int = 1) -> "Vocabulary":
        """Corpus-driven word vocabulary: specials first, then by frequency."""
        counts: collections.Counter = collections.Counter()
        for text in texts:
            counts.update(text[s:e].lower() for s, e in split_words(text))
        words = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
        return cls(list(SPECIAL_TOKENS) + [w for w in words if w not in SPECIAL_TOKENS])


def _wordpiece(word: str, start: int, vocabulary: Vocabulary) -> tuple[list[str], list[Offset]]:
    if len(word) > MAX_WORD_CHARS:
        return [UNK], [(start, start + len(word))]
    pieces: list[str] = []
    offsets: list[Offset] = []
    i = 0
    while i < len(word):
        j = len(word)
        found = None
        while i < j:
            piece = word[i:j] if i == 0 else "##" + word[i:j]
            if piece in vocabulary:
                found = piece
                break
            j -= 1
        if found is None:
            return [UNK], [(start, start + len(word))]
        pieces.append(found)
        offsets.append((start + i, start + j))
        i = j
    return pieces, offsets


def tokenize(
    text: str, vocabulary: Optional[Vocabulary] = None, mode: str = "whitespace"
) -> tuple[list[str], list[Offset]]:
    """Lower-cased tokens and their ``[start, end)`` character offsets."""
    if mode not in MODES:
        raise ConfigError(f"unknown tokenizer mode {mode!r}; expected one of {MODES}")
    if mode == "subword" and (vocabulary is None or len(vocabulary) <= len(SPECIAL_TOKENS)):
        raise ConfigError("subword tokenization needs a non-empty vocabulary")
    tokens: list[str] = []
    offsets: list[Offset] = []
    for s, e in split_words(text):
        word = text[s:e].lower()
        if mode == "whitespace":
            tokens.append(word)
            offsets.append((s, e))
        else:
            pieces, spans = _wordpiece(word, s, vocabulary)
            tokens.extend(pieces)
            offsets.extend(spans)
    return tokens, offsets


class Tokenizer:
    """A tokenizer mode bound to a vocabulary."""

    def __init__(self, vocabulary: Vocabulary, mode: str = "whitespace"):
        if mode not in MODES:
            raise ConfigError(f"unknown tokenizer mode {mode!r}; expected one of {MODES}")
        self.vocabulary = vocabulary
        self.mode = mode

    def __call__(self, text: str) -> tuple[list[str], list[Offset]]:
        return tokenize(text, self.vocabulary, self.mode)
