"""``hamqa`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure, 5 checkpoint or cache load error.

Settings resolve as defaults < ``--config`` JSON < ``HAMQA_*`` environment
variables (e.g. ``HAMQA_LEARNING_RATE=1e-4``) < explicit flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from hamqa.errors import CheckpointError, ConfigError, DataError, NumericError

logger = logging.getLogger("hamqa")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_LOAD = 5


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of TrainConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--ablation", action="append", default=[], help="repeatable: no-fine-grained, no-history-attention, no-poshae, no-dialog-act, no-span")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--limit", type=int, help="only use the first N dialogs")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config field")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hamqa", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile-data", help="tokenize, window and pack a QuAC-format corpus")
    p.add_argument("corpus")
    p.add_argument("--vocab", help="existing vocab.txt (required for subword mode)")
    _common(p)

    p = sub.add_parser("train", help="train on a compiled dataset")
    p.add_argument("--data", required=True, help="compiled dataset directory")
    p.add_argument("--eval-data", help="held-out compiled dataset for periodic F1")
    p.add_argument("--resume", help="checkpoint directory to continue from")
    _common(p)

    p = sub.add_parser("predict", help="write a prediction file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    _common(p)

    p = sub.add_parser("eval", help="score a prediction file, or a checkpoint on a compiled dataset")
    p.add_argument("--predictions", help="prediction JSONL file")
    p.add_argument("--corpus", help="gold QuAC-format corpus (with --predictions)")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    _common(p)

    p = sub.add_parser("export-attention", help="write history-attention matrices")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    _common(p)

    p = sub.add_parser("grad-check", help="finite-difference check of the composed loss")
    _common(p)
    return parser


def _overrides(args) -> dict:
    values = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    if args.seed is not None:
        values["seed"] = args.seed
    return values


def _resolve(args):
    from hamqa.training import TrainConfig

    config = TrainConfig.resolve(args.config, overrides=_overrides(args), ablations=tuple(args.ablation))
    logger.info("resolved configuration %s", json.dumps(config.to_dict(), sort_keys=True))
    return config


def _limit(dataset, limit):
    if limit is None:
        return dataset
    keep = []
    seen: list[str] = []
    for i, q in enumerate(dataset.questions):
        if q.dialog_id not in seen:
            if len(seen) == limit:
                break
            seen.append(q.dialog_id)
        keep.append(i)
    return dataset.subset_questions(keep)


def _load_data(path, limit):
    from hamqa.data import load_dataset

    return _limit(load_dataset(path), limit)


def _load_model(checkpoint, dataset):
    from hamqa.training import load_checkpoint

    ckpt = load_checkpoint(checkpoint)
    enc = ckpt.model_config.encoder
    if enc.max_seq_length != dataset.config.max_seq_length or enc.max_history != dataset.config.max_history:
        raise CheckpointError(
            f"checkpoint expects M={enc.max_seq_length}, I={enc.max_history}; dataset has "
            f"M={dataset.config.max_seq_length}, I={dataset.config.max_history}"
        )
    if ckpt.vocabulary is not None and ckpt.vocabulary != dataset.vocabulary:
        raise CheckpointError("checkpoint vocabulary differs from the dataset vocabulary")
    return ckpt


def cmd_compile(args) -> int:
    from hamqa.data import build_vocabulary, compile_dialogs, corpus_summary, parse_corpus, save_dataset

    config = _resolve(args)
    if not args.out:
        raise ConfigError("compile-data needs --out DIR")
    dialogs = parse_corpus(args.corpus, limit=args.limit)
    vocab = build_vocabulary(dialogs, config.tokenizer, args.vocab)
    dataset = compile_dialogs(dialogs, vocab, config.data_config())
    save_dataset(dataset, args.out)
    summary = corpus_summary(dialogs)
    summary["sequences"] = len(dataset)
    summary["vocabulary"] = len(vocab)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_train(args) -> int:
    from hamqa import tensor as tn
    from hamqa.training import load_checkpoint, new_state, train

    config = _resolve(args)
    dataset = _load_data(args.data, args.limit)
    if dataset.config != config.data_config():
        raise ConfigError(f"dataset was compiled with {dataset.config}, run config asks for {config.data_config()}")
    eval_data = _load_data(args.eval_data, args.limit) if args.eval_data else None
    state = None
    if args.resume:
        expected, _ = new_state(config, len(dataset.vocabulary))
        with tn.precision(config.precision):
            state = load_checkpoint(args.resume, expected=expected.params).state
    out = args.out or "runs/train"
    state = train(config, dataset, eval_data, out_dir=out, state=state)
    print(json.dumps({"step": state.step, "out": str(out), **state.running}))
    return 0


def _predictions(args):
    from hamqa.inference import predict

    dataset = _load_data(args.data, args.limit)
    ckpt = _load_model(args.checkpoint, dataset)
    cfg = ckpt.train_config
    return dataset, predict(ckpt.state.params, ckpt.model_config, dataset, cfg.batch_size, cfg.max_answer_length)


def cmd_predict(args) -> int:
    from hamqa.metrics import write_predictions

    _resolve(args)
    _, preds = _predictions(args)
    out = args.out or "predictions.jsonl"
    write_predictions(out, [p.as_dict() for p in preds])
    print(json.dumps({"questions": len(preds), "out": out}))
    return 0


def cmd_eval(args) -> int:
    from hamqa.data import parse_corpus
    from hamqa.inference import gold_from_dataset
    from hamqa.metrics import evaluate, gold_from_dialogs, read_predictions

    _resolve(args)
    if args.predictions:
        if not args.corpus:
            raise ConfigError("eval --predictions needs --corpus")
        gold = gold_from_dialogs(parse_corpus(args.corpus, limit=args.limit))
        report = evaluate(read_predictions(args.predictions), gold)
    elif args.checkpoint and args.data:
        dataset, preds = _predictions(args)
        report = evaluate({p.qid: p.as_dict() for p in preds}, gold_from_dataset(dataset))
    else:
        raise ConfigError("eval needs --predictions/--corpus or --checkpoint/--data")
    print(report.table())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_json(), indent=1) + "\n")
    return 0


def cmd_export(args) -> int:
    from hamqa import tensor as tn
    from hamqa.inference import attention_records, export_attention

    _resolve(args)
    dataset = _load_data(args.data, args.limit)
    ckpt = _load_model(args.checkpoint, dataset)
    with tn.precision(ckpt.train_config.precision):
        records = attention_records(ckpt.state.params, ckpt.model_config, dataset, ckpt.train_config.batch_size)
    written = export_attention(records, dataset, args.out or "attention")
    print(json.dumps({"records": len(records), "files": len(written), "out": args.out or "attention"}))
    return 0


def cmd_grad_check(args) -> int:
    from hamqa.diagnostics import composed_grad_check

    config = _resolve(args)
    worst = 0.0
    for fine in (True, False):
        result = composed_grad_check(fine_grained=fine, seed=config.seed)
        worst = max(worst, result.max_relative_error)
        print(json.dumps(result.__dict__))
    if worst > 1e-3:
        raise NumericError(f"gradient check failed: max relative error {worst:.3g}")
    return 0


COMMANDS = {
    "compile-data": cmd_compile,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "export-attention": cmd_export,
    "grad-check": cmd_grad_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except NumericError as exc:
        logger.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except CheckpointError as exc:
        logger.error("load error: %s", exc)
        return EXIT_LOAD


if __name__ == "__main__":
    sys.exit(main())
