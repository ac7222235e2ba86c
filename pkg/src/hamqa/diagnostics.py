"""Gradient check of the full composed loss on a tiny model."""

from __future__ import annotations

import time
from dataclasses import dataclass

from hamqa import tensor as tn
from hamqa.data import build_vocabulary, compile_dialogs, make_batches, parse_corpus
from hamqa.data.dataset import DataConfig
from hamqa.encoder import EncoderConfig
from hamqa.model import ModelConfig, compute_losses, forward, init_params
from hamqa.synthetic import topic_return_corpus


@dataclass
class GradCheckResult:
    fine_grained: bool
    max_relative_error: float
    parameters: int
    seconds: float


def composed_grad_check(
    fine_grained: bool = True,
    hidden_size: int = 8,
    num_layers: int = 1,
    max_seq_length: int = 16,
    max_history: int = 3,
    seed: int = 0,
    mu: float = 0.8,
    lam: float = 0.1,
) -> GradCheckResult:
    """Central differences against backprop for every parameter of the model.

    Runs in float64 without dropout on one batch of a generated corpus that
    has real multi-window, multi-history groups.
    """
    dialogs = parse_corpus(topic_return_corpus(2, seed=seed, sentences=3, min_turns=4, max_turns=4))
    data_config = DataConfig(
        max_seq_length=max_seq_length, max_question_length=4, doc_stride=4, max_history=max_history
    )
    vocab = build_vocabulary(dialogs, "whitespace")
    dataset = compile_dialogs(dialogs, vocab, data_config)
    batch = make_batches(dataset, 4 * max_history, seed=seed)[0]
    config = ModelConfig(
        encoder=EncoderConfig(
            hidden_size=hidden_size,
            num_layers=num_layers,
            num_heads=2,
            ffn_size=2 * hidden_size,
            max_seq_length=max_seq_length,
            vocab_size=len(vocab),
            max_history=max_history,
            dropout=0.0,
        ),
        fine_grained=fine_grained,
    )
    started = time.perf_counter()
    with tn.precision("float64"):
        params = init_params(config, seed)
        # larger scale than the 0.02 init so every path carries a visible gradient
        for name, p in params.items():
            if not name.endswith((".gamma", ".beta", ".bias")):
                p.data *= 10.0

        def loss():
            return compute_losses(forward(params, config, batch, rng=None), batch, mu, lam).total

        worst = tn.grad_check(loss, list(params.values()))
    return GradCheckResult(
        fine_grained=fine_grained,
        max_relative_error=worst,
        parameters=sum(p.size for p in params.values()),
        seconds=time.perf_counter() - started,
    )
