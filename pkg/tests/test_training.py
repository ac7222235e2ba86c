import filecmp
import json
import math

import numpy as np
import pytest

from hamqa import tensor as tn
from hamqa.data import build_vocabulary, compile_dialogs, make_batches, parse_corpus
from hamqa.errors import CheckpointError, ConfigError, NumericError
from hamqa.model import compute_losses, forward, init_params, total_loss
from hamqa.synthetic import toy_corpus
from hamqa.tensor import Tensor
from hamqa.training import (
    BatchStream,
    TrainConfig,
    TrainState,
    clip_gradients,
    global_norm,
    load_checkpoint,
    lr_schedule,
    new_state,
    save_checkpoint,
    train,
    train_step,
)

SMALL = dict(
    hidden_size=16,
    num_layers=1,
    num_heads=2,
    ffn_size=32,
    max_seq_length=48,
    max_question_length=8,
    doc_stride=16,
    max_history=4,
    batch_size=8,
    total_steps=6,
    learning_rate=1e-3,
    eval_every=1000,
    log_every=1000,
)


def small_config(**extra) -> TrainConfig:
    config = TrainConfig()
    config.update({**SMALL, **extra})
    config.validate()
    return config


def compile_toy(config, n_dialogs=4, turns=4, seed=0):
    dialogs = parse_corpus(toy_corpus(n_dialogs, turns=turns, seed=seed))
    vocab = build_vocabulary(dialogs, "whitespace")
    return compile_dialogs(dialogs, vocab, config.data_config())


@pytest.fixture(scope="module")
def toy():
    return compile_toy(small_config())


def run_losses(config, dataset, **kw):
    losses = []
    train(config, dataset, on_step=lambda r: losses.append((r["step"], r["loss"])), **kw)
    return losses


class TestTotalLoss:
    def test_default_weights(self):
        assert total_loss(2.0, 1.0, 1.0, 0.8, 0.1) == 1.8

    def test_no_dialog_act(self):
        config = TrainConfig()
        config.apply_ablation("no-dialog-act")
        mu, lam = config.loss_weights()
        assert (mu, lam) == (1.0, 0.0)
        assert total_loss(2.5, 1.0, 3.0, mu, lam) == 2.5

    def test_no_span(self):
        config = TrainConfig(lam=0.2)
        config.apply_ablation("no-span")
        mu, lam = config.loss_weights()
        assert (mu, lam) == (0.0, 0.2)
        assert total_loss(2.5, 1.0, 3.0, mu, lam) == pytest.approx(0.2 * 4.0)

    def test_tensor_route(self, f64):
        out = total_loss(Tensor(2.0), Tensor(1.0), Tensor(1.0), 0.8, 0.1)
        assert out.item() == 1.8

    def test_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(lam=0.0, mu=0.0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(lam=-1.0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(warmup_fraction=1.0).validate()


class TestSchedule:
    def test_default_schedule_points(self):
        assert lr_schedule(0, 30000, 3e-5, 0.1) == 0.0
        assert lr_schedule(3000, 30000, 3e-5, 0.1) == pytest.approx(3e-5, rel=1e-12)
        assert lr_schedule(30000, 30000, 3e-5, 0.1) == 0.0

    def test_shape(self):
        lrs = [lr_schedule(s, 100, 1.0, 0.2) for s in range(101)]
        assert lrs[10] == pytest.approx(0.5)
        assert max(lrs) == lrs[20] == 1.0
        assert all(a <= b for a, b in zip(lrs[:20], lrs[1:21]))
        assert all(a >= b for a, b in zip(lrs[20:], lrs[21:]))

    def test_no_warmup(self):
        assert lr_schedule(0, 10, 1.0, 0.0) == 1.0


class TestClipping:
    def test_scales_down(self, f64):
        params = {"a": Tensor([3.0], requires_grad=True), "b": Tensor([4.0], requires_grad=True)}
        params["a"].grad = np.array([3.0])
        params["b"].grad = np.array([4.0])
        norm, clipped = clip_gradients(params, 1.0)
        assert norm == 5.0
        assert clipped == pytest.approx(1.0)
        np.testing.assert_allclose(params["a"].grad, [0.6])

    def test_leaves_small(self):
        params = {"a": Tensor([1.0], requires_grad=True)}
        params["a"].grad = np.array([0.5], dtype=np.float32)
        assert clip_gradients(params, 1.0) == (0.5, 0.5)

    def test_every_step_bounded(self, toy):
        config = small_config(learning_rate=1e-2)
        seen = []
        train(config, toy, on_step=lambda r: seen.append((r["grad_norm"], r["clipped_norm"])))
        assert all(c <= 1.0 + 1e-6 for _, c in seen)
        assert global_norm([np.ones(4)]) == 2.0


class TestDeterminism:
    def test_identical_runs(self, toy):
        config = small_config(dropout=0.1)
        assert run_losses(config, toy) == run_losses(config, toy)

    def test_seed_matters(self, toy):
        assert run_losses(small_config(seed=1), toy) != run_losses(small_config(seed=2), toy)

    def test_batch_stream_wraps_epochs(self, toy):
        stream = BatchStream(toy, 8, seed=3)
        n = len(stream.epoch(0))
        a = stream(n)
        b = make_batches(toy, 8, seed=[3, 1])[0]
        np.testing.assert_array_equal(a.rows, b.rows)

    def test_equal_weights_matches_ham_with_one_history_turn(self):
        config = small_config(max_history=1, batch_size=4)
        data = compile_toy(config, n_dialogs=3, turns=3)
        assert data.arrays["history_turn"].size and np.bincount(
            [len(g) for g in data.groups()]
        ).nonzero()[0].tolist() == [1]
        ham = run_losses(config, data)
        equal = run_losses(small_config(max_history=1, batch_size=4, history_attention=False), data)
        np.testing.assert_allclose([l for _, l in ham], [l for _, l in equal], rtol=0, atol=1e-6)

    def test_non_finite_loss_names_batch(self, toy):
        config = small_config()
        state, mc = new_state(config, len(toy.vocabulary))
        state.params["span.begin"].data[:] = np.nan
        batch = BatchStream(toy, 8, 0)(0)
        with pytest.raises(NumericError, match=f"batch {batch.batch_id}"):
            train_step(batch, state, config, mc)


class TestPosHAEAblation:
    def test_binary_invariant_to_relative_position(self, f64, toy):
        config = small_config(poshae=False, precision="float64")
        mc = config.model_config(len(toy.vocabulary))
        params = init_params(mc, 0)
        batch = make_batches(toy, 8, seed=0)[1]
        ids = batch.poshae_ids
        assert len(np.unique(ids[ids > 0])) >= 2
        mu, lam = config.loss_weights()
        base = compute_losses(forward(params, mc, batch), batch, mu, lam).total.item()
        swapped = ids.copy()
        a, b = np.unique(ids[ids > 0])[:2]
        swapped[ids == a], swapped[ids == b] = b, a
        batch.poshae_ids = swapped
        after = compute_losses(forward(params, mc, batch), batch, mu, lam).total.item()
        assert abs(base - after) <= 1e-6

    def test_positional_is_sensitive(self, f64, toy):
        config = small_config(precision="float64")
        mc = config.model_config(len(toy.vocabulary))
        params = init_params(mc, 0)
        params["emb.poshae"].data *= 50
        batch = make_batches(toy, 8, seed=0)[1]
        mu, lam = config.loss_weights()
        base = compute_losses(forward(params, mc, batch), batch, mu, lam).total.item()
        ids = batch.poshae_ids
        a, b = np.unique(ids[ids > 0])[:2]
        swapped = ids.copy()
        swapped[ids == a], swapped[ids == b] = b, a
        batch.poshae_ids = swapped
        assert compute_losses(forward(params, mc, batch), batch, mu, lam).total.item() != pytest.approx(base, abs=1e-6)


class TestCheckpoint:
    def test_save_load_save_identical(self, tmp_path, toy):
        config = small_config()
        state = train(config, toy, out_dir=tmp_path / "run", stop_at=2)
        ckpt = load_checkpoint(tmp_path / "run" / "last")
        save_checkpoint(ckpt.state, tmp_path / "again", ckpt.train_config, ckpt.model_config, ckpt.vocabulary)
        cmp = filecmp.dircmp(tmp_path / "run" / "last", tmp_path / "again")
        files = [p.relative_to(tmp_path / "again") for p in (tmp_path / "again").rglob("*") if p.is_file()]
        for rel in files:
            assert (tmp_path / "run" / "last" / rel).read_bytes() == (tmp_path / "again" / rel).read_bytes(), rel
        assert not cmp.left_only and not cmp.right_only
        for name, p in state.params.items():
            np.testing.assert_array_equal(p.data, ckpt.state.params[name].data)
        assert ckpt.state.step == 2

    def test_mismatched_hidden_size(self, tmp_path, toy):
        config = small_config()
        state, mc = new_state(config, len(toy.vocabulary))
        save_checkpoint(state, tmp_path / "c", config, mc, toy.vocabulary)
        other, _ = new_state(small_config(hidden_size=8, ffn_size=16), len(toy.vocabulary))
        with pytest.raises(CheckpointError, match=r"\(16,\).*\(8,\)|\(\d+, 16\).*\(\d+, 8\)"):
            load_checkpoint(tmp_path / "c", expected=other.params)

    def test_bad_version(self, tmp_path, toy):
        config = small_config()
        state, mc = new_state(config, len(toy.vocabulary))
        save_checkpoint(state, tmp_path / "c", config, mc)
        manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
        manifest["version"] = 99
        (tmp_path / "c" / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(CheckpointError, match="version 99"):
            load_checkpoint(tmp_path / "c")

    def test_resume_matches_uninterrupted(self, tmp_path, toy):
        config = small_config(dropout=0.1)
        full = run_losses(config, toy)
        first = run_losses(config, toy, out_dir=tmp_path / "part", stop_at=3)
        resumed = load_checkpoint(tmp_path / "part" / "last").state
        rest = run_losses(config, toy, state=resumed)
        assert first + rest == full

    def test_metrics_log(self, tmp_path, toy):
        config = small_config(log_every=2, eval_every=3)
        train(config, toy, eval_dataset=toy, out_dir=tmp_path)
        records = [json.loads(l) for l in (tmp_path / "metrics.jsonl").read_text().splitlines()]
        assert all(set(r) == {"step", "lr", "loss_ans", "loss_A", "loss_C", "f1"} for r in records)
        assert [r["step"] for r in records] == [2, 3, 4, 6]
        assert records[1]["f1"] is not None and records[0]["f1"] is None
        assert (tmp_path / "best" / "manifest.json").exists()


class TestConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.max_seq_length, c.batch_size, c.learning_rate, c.total_steps, c.lam, c.mu) == (
            384, 24, 3e-5, 30000, 0.1, 0.8
        )

    def test_precedence(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"learning_rate": 1e-4, "seed": 5, "lambda": 0.3}))
        env = {"HAMQA_LEARNING_RATE": "2e-4", "HAMQA_SEED": "6", "OTHER": "x"}
        c = TrainConfig.resolve(str(path), env={}, overrides={})
        assert (c.learning_rate, c.seed, c.lam) == (1e-4, 5, 0.3)
        c = TrainConfig.resolve(str(path), env=env)
        assert (c.learning_rate, c.seed) == (2e-4, 6)
        c = TrainConfig.resolve(str(path), env=env, overrides={"seed": 7})
        assert (c.learning_rate, c.seed) == (2e-4, 7)

    def test_ablations(self):
        c = TrainConfig.resolve(env={}, ablations=("no-history-attention", "no-poshae", "no-fine-grained"))
        assert not c.history_attention and not c.poshae and not c.fine_grained
        assert c.model_config(100).encoder.poshae_mode == "binary"

    def test_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown setting"):
            TrainConfig.resolve(env={"HAMQA_NOPE": "1"})
        with pytest.raises(ConfigError, match="expects int"):
            TrainConfig.resolve(env={}, overrides={"batch_size": "2.5"})
        with pytest.raises(ConfigError, match="unknown ablation"):
            TrainConfig.resolve(env={}, ablations=("no-everything",))
        with pytest.raises(ConfigError):
            TrainConfig.resolve(env={}, overrides={"batch_size": 4})


def test_loss_trend_alert(toy, caplog, monkeypatch):
    import hamqa.training as training

    monkeypatch.setattr(training, "LOSS_WINDOW", 1)
    caplog.set_level("WARNING", logger="hamqa")
    losses = [l for _, l in run_losses(small_config(learning_rate=5e-2), toy)]
    rises = sum(b > a for a, b in zip(losses, losses[1:]))
    warnings = [r for r in caplog.records if "mean loss rose" in r.getMessage()]
    assert rises > 0
    assert len(warnings) == rises
