from hamqa.data.batching import Batch, collate, make_batches, pack_groups
from hamqa.data.corpus import (
    FOLLOWUP_LABELS,
    YESNO_LABELS,
    Dialog,
    Passage,
    QuestionTurn,
    parse_corpus,
)
from hamqa.data.dataset import (
    CompiledDataset,
    DataConfig,
    build_vocabulary,
    compile_dialogs,
    corpus_summary,
    load_dataset,
    save_dataset,
)
from hamqa.data.features import (
    InstanceVariation,
    TokenSequence,
    assign_poshae_ids,
    build_variations,
    pack_sequence,
    slide_window,
    unpack_span,
)
from hamqa.data.tokenization import CANNOTANSWER, Tokenizer, Vocabulary, tokenize

__all__ = [
    "Batch",
    "CANNOTANSWER",
    "CompiledDataset",
    "DataConfig",
    "Dialog",
    "FOLLOWUP_LABELS",
    "InstanceVariation",
    "Passage",
    "QuestionTurn",
    "TokenSequence",
    "Tokenizer",
    "Vocabulary",
    "YESNO_LABELS",
    "assign_poshae_ids",
    "build_variations",
    "build_vocabulary",
    "collate",
    "compile_dialogs",
    "corpus_summary",
    "load_dataset",
    "make_batches",
    "pack_groups",
    "pack_sequence",
    "parse_corpus",
    "save_dataset",
    "slide_window",
    "tokenize",
    "unpack_span",
]
