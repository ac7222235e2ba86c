import csv
import json

import numpy as np
import pytest

from hamqa.cli import EXIT_CONFIG, EXIT_DATA, EXIT_LOAD, main
from hamqa.synthetic import toy_corpus

SMALL = {
    "hidden_size": 16,
    "num_layers": 1,
    "num_heads": 2,
    "ffn_size": 32,
    "max_seq_length": 48,
    "max_question_length": 8,
    "doc_stride": 16,
    "max_history": 7,
    "batch_size": 14,
    "total_steps": 4,
    "learning_rate": 1e-3,
    "eval_every": 1000,
    "log_every": 1000,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "corpus.json").write_text(json.dumps(toy_corpus(3, turns=7, seed=4)))
    (root / "small.json").write_text(json.dumps(SMALL))
    assert main(["compile-data", str(root / "corpus.json"), "--config", str(root / "small.json"), "--out", str(root / "data")]) == 0
    for name, extra in (("fine", []), ("seq", ["--ablation", "no-fine-grained"])):
        argv = ["train", "--data", str(root / "data"), "--config", str(root / "small.json"), "--out", str(root / name)]
        assert main(argv + extra) == 0
    return root


def config_echo(caplog):
    for rec in caplog.records:
        if rec.getMessage().startswith("resolved configuration "):
            return json.loads(rec.getMessage().split(" ", 2)[2])
    raise AssertionError("configuration was not logged")


def test_default_config_echo(tmp_path, caplog):
    caplog.set_level("INFO", logger="hamqa")
    assert main(["train", "--data", str(tmp_path / "missing")]) == EXIT_LOAD
    c = config_echo(caplog)
    assert (c["max_seq_length"], c["batch_size"], c["learning_rate"], c["total_steps"], c["lam"], c["mu"]) == (
        384, 24, 3e-5, 30000, 0.1, 0.8
    )
    assert c["history_attention"] is True


def test_ablation_echo(tmp_path, caplog):
    caplog.set_level("INFO", logger="hamqa")
    main(["train", "--data", str(tmp_path / "missing"), "--ablation", "no-history-attention"])
    assert config_echo(caplog)["history_attention"] is False


def test_env_and_flag_precedence(tmp_path, caplog, monkeypatch):
    caplog.set_level("INFO", logger="hamqa")
    monkeypatch.setenv("HAMQA_SEED", "11")
    monkeypatch.setenv("HAMQA_LEARNING_RATE", "1e-4")
    main(["train", "--data", str(tmp_path / "missing"), "--seed", "12"])
    c = config_echo(caplog)
    assert (c["seed"], c["learning_rate"]) == (12, 1e-4)


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--data", "x", "--set", "batch_size"],
        ["train", "--data", "x", "--set", "lambda=-1"],
        ["train", "--data", "x", "--ablation", "no-such-thing"],
        ["eval"],
    ],
)
def test_config_errors(argv):
    assert main(argv) == EXIT_CONFIG


def test_data_error_names_json_path(tmp_path, caplog):
    doc = toy_corpus(1, turns=2)
    del doc["data"][0]["paragraphs"][0]["qas"][1]["question"]
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    assert main(["compile-data", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert "qas[1]" in caplog.text


def test_compile_is_deterministic(workspace, tmp_path):
    assert main(["compile-data", str(workspace / "corpus.json"), "--config", str(workspace / "small.json"), "--out", str(tmp_path / "d")]) == 0
    for path in (workspace / "data").iterdir():
        assert path.read_bytes() == (tmp_path / "d" / path.name).read_bytes(), path.name


def test_compile_summary(workspace, tmp_path, capsys):
    main(["compile-data", str(workspace / "corpus.json"), "--config", str(workspace / "small.json"), "--out", str(tmp_path / "d")])
    summary = json.loads(capsys.readouterr().out)
    assert summary["dialogs"] == 3 and summary["questions"] == 21


def test_train_outputs(workspace):
    records = [json.loads(l) for l in (workspace / "fine" / "metrics.jsonl").read_text().splitlines()]
    assert records[-1]["step"] == 4
    assert (workspace / "fine" / "last" / "manifest.json").exists()


def test_predict_and_eval(workspace, tmp_path, capsys):
    pred = tmp_path / "pred.jsonl"
    ckpt = str(workspace / "fine" / "last")
    assert main(["predict", "--checkpoint", ckpt, "--data", str(workspace / "data"), "--out", str(pred)]) == 0
    lines = [json.loads(l) for l in pred.read_text().splitlines()]
    assert len(lines) == 3
    assert set(lines[0]) == {"dialog_id", "qid", "answer_text", "yesno", "followup"}
    capsys.readouterr()
    report = tmp_path / "report.json"
    assert main(["eval", "--predictions", str(pred), "--corpus", str(workspace / "corpus.json"), "--out", str(report)]) == 0
    table = capsys.readouterr().out
    assert "HEQ-Q" in table
    via_ckpt = tmp_path / "report2.json"
    assert main(["eval", "--checkpoint", ckpt, "--data", str(workspace / "data"), "--out", str(via_ckpt)]) == 0
    a, b = json.loads(report.read_text()), json.loads(via_ckpt.read_text())
    assert a["f1"] == pytest.approx(b["f1"])


def test_predict_is_deterministic(workspace, tmp_path):
    ckpt = str(workspace / "fine" / "last")
    for name in ("a", "b"):
        main(["predict", "--checkpoint", ckpt, "--data", str(workspace / "data"), "--out", str(tmp_path / name)])
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def read_matrix(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [r[0] for r in rows[1:]], np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def test_export_fine_grained(workspace, tmp_path):
    out = tmp_path / "att"
    assert main(["export-attention", "--checkpoint", str(workspace / "fine" / "last"), "--data", str(workspace / "data"), "--out", str(out)]) == 0
    header, labels, m = read_matrix(next(out.glob("toy000_q_6.w0.csv")))
    assert labels == [f"k-i={r}" for r in range(7)]
    assert m.shape == (7, 48) and len(header) == 49
    assert not m[0].any()
    np.testing.assert_allclose(m.sum(axis=0), 1, atol=1e-6)
    payload = json.loads((out / "toy000_q_6.w0.json").read_text())
    assert len(payload["dialog"]) == 7 and payload["passage"]
    assert len(payload["tokens"]) == 48


def test_export_sequence_level_columns_identical(workspace, tmp_path):
    out = tmp_path / "att"
    main(["export-attention", "--checkpoint", str(workspace / "seq" / "last"), "--data", str(workspace / "data"), "--out", str(out)])
    _, _, m = read_matrix(out / "toy001_q_4.w0.csv")
    assert np.all(m == m[:, :1])


def test_checkpoint_mismatch(workspace, tmp_path):
    other = dict(SMALL, max_seq_length=40)
    (tmp_path / "c.json").write_text(json.dumps(other))
    main(["compile-data", str(workspace / "corpus.json"), "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "d")])
    argv = ["predict", "--checkpoint", str(workspace / "fine" / "last"), "--data", str(tmp_path / "d"), "--out", str(tmp_path / "p")]
    assert main(argv) == EXIT_LOAD


def test_resume_with_other_shape(workspace, tmp_path):
    argv = ["train", "--data", str(workspace / "data"), "--config", str(workspace / "small.json"), "--set", "hidden_size=8",
            "--set", "ffn_size=16", "--resume", str(workspace / "fine" / "last"), "--out", str(tmp_path)]
    assert main(argv) == EXIT_LOAD


def test_grad_check(capsys):
    assert main(["grad-check"]) == 0
    results = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert [r["fine_grained"] for r in results] == [True, False]
    assert all(r["max_relative_error"] <= 1e-3 for r in results)
