"""Desk-scale training experiments shared by the scripts and the acceptance suite.

``toy_overfit``
    Full HAM on the 20-dialog toy corpus, scored on its own training set.

``topic_return_ablation``
    Full HAM against the equal-weights ablation on the topic-return corpus.
    Both variants start from the same initialisation and batch order and
    are scored by held-out F1 on the topic-return questions.
"""

from __future__ import annotations

import time

from hamqa.data import build_vocabulary, compile_dialogs, parse_corpus
from hamqa.inference import evaluate_dataset, exact_match_rate, gold_from_dataset, predict
from hamqa.metrics import evaluate
from hamqa.synthetic import return_question_ids, toy_corpus, topic_return_corpus
from hamqa.training import TrainConfig, train

TOY = dict(
    hidden_size=64,
    num_layers=2,
    num_heads=4,
    ffn_size=256,
    max_seq_length=128,
    max_question_length=16,
    total_steps=2000,
    learning_rate=1e-3,
    dropout=0.0,
    log_every=100,
)

TOPIC_RETURN = dict(
    hidden_size=32,
    num_layers=2,
    num_heads=2,
    ffn_size=128,
    max_seq_length=80,
    max_question_length=12,
    max_history=6,
    total_steps=1000,
    learning_rate=1e-3,
    dropout=0.0,
    log_every=250,
)


def toy_overfit(seed: int = 0, steps: int = 2000, out_dir=None) -> dict:
    config = TrainConfig(**{**TOY, "seed": seed, "total_steps": steps})
    dialogs = parse_corpus(toy_corpus())
    vocab = build_vocabulary(dialogs, config.tokenizer)
    dataset = compile_dialogs(dialogs, vocab, config.data_config())
    started = time.perf_counter()
    state = train(config, dataset, out_dir=out_dir)
    elapsed = time.perf_counter() - started
    model_config = config.model_config(len(vocab))
    preds = predict(state.params, model_config, dataset, config.batch_size, config.max_answer_length)
    report = evaluate({p.qid: p.as_dict() for p in preds}, gold_from_dataset(dataset))
    return {
        "seed": seed,
        "steps": state.step,
        "seconds": round(elapsed, 1),
        "exact_match": exact_match_rate(preds, dataset),
        "f1": report.f1,
        "yesno_accuracy": report.yesno_accuracy,
        "followup_accuracy": report.followup_accuracy,
        "final_span_loss": state.running.get("loss_ans"),
    }


def topic_return_datasets(seed: int, n_train: int = 1000, n_heldout: int = 100):
    """(train, held-out) compiled datasets restricted to the topic-return questions."""
    train_dialogs = parse_corpus(topic_return_corpus(n_train, seed=1000 + seed))
    heldout_dialogs = parse_corpus(topic_return_corpus(n_heldout, seed=5000 + seed))
    base = TrainConfig(**TOPIC_RETURN)
    vocab = build_vocabulary(train_dialogs + heldout_dialogs, base.tokenizer)
    out = []
    for dialogs in (train_dialogs, heldout_dialogs):
        ds = compile_dialogs(dialogs, vocab, base.data_config())
        out.append(ds.subset_questions(return_question_ids(ds)))
    return out


def topic_return_ablation(seed: int, steps: int = 1000) -> dict:
    train_ds, heldout_ds = topic_return_datasets(seed)
    result = {"seed": seed}
    for name, flags in (("ham", {}), ("equal_weights", {"history_attention": False})):
        config = TrainConfig(**{**TOPIC_RETURN, "seed": seed, "total_steps": steps, **flags})
        started = time.perf_counter()
        state = train(config, train_ds)
        report = evaluate_dataset(state.params, config.model_config(len(train_ds.vocabulary)), heldout_ds, config)
        result[name] = round(report.f1, 2)
        result[f"{name}_seconds"] = round(time.perf_counter() - started, 1)
    return result
