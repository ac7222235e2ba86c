"""Multi-task training: loss weighting, warmup schedule, AdamW, checkpoints.

Everything random is derived from ``(seed, step)`` so a run restored from a
checkpoint at step ``t`` continues exactly like an uninterrupted run.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from hamqa import tensor as tn
from hamqa.data.batching import Batch, make_batches
from hamqa.data.dataset import CompiledDataset, DataConfig
from hamqa.data.tokenization import Vocabulary
from hamqa.encoder import EncoderConfig
from hamqa.errors import CheckpointError, ConfigError, NumericError
from hamqa.model import ModelConfig, compute_losses, forward, init_params, total_loss
from hamqa.tensor import Tensor

logger = logging.getLogger(__name__)

ENV_PREFIX = "HAMQA_"
CHECKPOINT_VERSION = 1
# steps per window of the loss-trend alert
LOSS_WINDOW = 200

ABLATIONS = {
    "no-fine-grained": ("fine_grained", False),
    "no-history-attention": ("history_attention", False),
    "no-poshae": ("poshae", False),
    "no-dialog-act": ("dialog_act_task", False),
    "no-span": ("span_task", False),
}


@dataclass
class TrainConfig:
    """Flat run configuration; the JSON config file uses these field names."""

    # loss weights
    lam: float = 0.1
    mu: float = 0.8
    # optimisation
    batch_size: int = 24
    total_steps: int = 30000
    learning_rate: float = 3e-5
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-6
    clip_norm: float = 1.0
    seed: int = 0
    precision: str = "float32"
    # ablation switches
    fine_grained: bool = True
    history_attention: bool = True
    poshae: bool = True
    span_task: bool = True
    dialog_act_task: bool = True
    # encoder
    pooling: str = "max"
    hidden_size: int = 768
    num_layers: int = 12
    num_heads: int = 12
    ffn_size: int = 3072
    dropout: float = 0.1
    # data
    max_seq_length: int = 384
    max_question_length: int = 64
    doc_stride: int = 128
    max_answer_length: int = 40
    max_history: int = 11
    tokenizer: str = "whitespace"
    # bookkeeping
    eval_every: int = 500
    log_every: int = 50

    def validate(self) -> None:
        if self.lam < 0 or self.mu < 0:
            raise ConfigError("lam and mu must be non-negative")
        mu, lam = self.loss_weights()
        if mu == 0 and lam == 0:
            raise ConfigError("at least one task must carry a non-zero loss weight")
        if not 0 <= self.warmup_fraction < 1:
            raise ConfigError("warmup_fraction must lie in [0, 1)")
        if self.batch_size < self.max_history:
            raise ConfigError(
                f"batch_size {self.batch_size} cannot hold a full group of {self.max_history} variations"
            )
        if self.precision not in ("float32", "float64"):
            raise ConfigError("precision must be float32 or float64")
        self.data_config().validate()

    def loss_weights(self) -> tuple[float, float]:
        """Effective ``(mu, lam)`` after the task switches."""
        mu, lam = self.mu, self.lam
        if not self.dialog_act_task:
            mu, lam = 1.0, 0.0
        if not self.span_task:
            mu = 0.0
        return mu, lam

    def apply_ablation(self, name: str) -> None:
        try:
            key, value = ABLATIONS[name]
        except KeyError:
            raise ConfigError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}") from None
        setattr(self, key, value)

    def data_config(self) -> DataConfig:
        return DataConfig(
            max_seq_length=self.max_seq_length,
            max_question_length=self.max_question_length,
            doc_stride=self.doc_stride,
            max_history=self.max_history,
            tokenizer=self.tokenizer,
        )

    def model_config(self, vocab_size: int) -> ModelConfig:
        enc = EncoderConfig(
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            ffn_size=self.ffn_size,
            max_seq_length=self.max_seq_length,
            vocab_size=vocab_size,
            max_history=self.max_history,
            dropout=self.dropout,
            pooling=self.pooling,
            poshae_mode="positional" if self.poshae else "binary",
        )
        enc.validate()
        return ModelConfig(encoder=enc, fine_grained=self.fine_grained, history_attention=self.history_attention)

    # -- loading -----------------------------------------------------------
    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: type(f.default) for f in dataclasses.fields(cls)}

    def update(self, values: dict, source: str = "config") -> None:
        types = self.field_types()
        for key, raw in values.items():
            key = "lam" if key == "lambda" else key
            if key not in types:
                raise ConfigError(f"{source}: unknown setting {key!r}")
            setattr(self, key, _coerce(raw, types[key], key, source))

    @classmethod
    def resolve(
        cls,
        path: Optional[str] = None,
        env: Optional[dict] = None,
        overrides: Optional[dict] = None,
        ablations: tuple = (),
    ) -> "TrainConfig":
        """Defaults < JSON file < ``HAMQA_*`` environment < explicit overrides."""
        config = cls()
        if path:
            try:
                values = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            if not isinstance(values, dict):
                raise ConfigError(f"config {path} must be a JSON object")
            config.update(values, source=str(path))
        env = os.environ if env is None else env
        env_values = {
            k[len(ENV_PREFIX) :].lower(): v for k, v in env.items() if k.startswith(ENV_PREFIX)
        }
        if env_values:
            config.update(env_values, source="environment")
        if overrides:
            config.update({k: v for k, v in overrides.items() if v is not None}, source="command line")
        for name in ablations:
            config.apply_ablation(name)
        config.validate()
        return config

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(raw, kind: type, key: str, source: str):
    if isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
        return raw
    try:
        if kind is bool:
            if isinstance(raw, str):
                lowered = raw.strip().lower()
                if lowered in ("1", "true", "yes", "on"):
                    return True
                if lowered in ("0", "false", "no", "off"):
                    return False
                raise ValueError(raw)
            return bool(raw)
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError(raw)
            return int(value)
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{source}: {key} expects {kind.__name__}, got {raw!r}") from None


def lr_schedule(step: int, total_steps: int, base_lr: float, warmup_fraction: float) -> float:
    """Linear warmup from 0 to ``base_lr``, then linear decay to 0 at ``total_steps``."""
    warmup = int(round(warmup_fraction * total_steps))
    if warmup > 0 and step < warmup:
        return base_lr * step / warmup
    if total_steps <= warmup:
        return 0.0
    return base_lr * max(0.0, (total_steps - step) / (total_steps - warmup))


def _decays(name: str) -> bool:
    return not (name.endswith(".bias") or name.endswith(".gamma") or name.endswith(".beta"))


@dataclass
class TrainState:
    step: int
    params: dict[str, Tensor]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    running: dict[str, float] = field(default_factory=dict)

    @classmethod
    def fresh(cls, params: dict[str, Tensor]) -> "TrainState":
        return cls(
            step=0,
            params=params,
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def global_norm(grads: list[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> tuple[float, float]:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params.values() if p.grad is not None]
    norm = global_norm(grads)
    if norm > max_norm > 0:
        factor = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * p.grad.dtype.type(factor)
        return norm, global_norm([p.grad for p in params.values() if p.grad is not None])
    return norm, norm


def adamw_update(state: TrainState, lr: float, config: TrainConfig) -> None:
    """Adam with bias correction and decoupled weight decay (skipped for biases and norms)."""
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    t = state.step + 1
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in state.params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        if config.weight_decay and _decays(name):
            update = update + config.weight_decay * p.data
        p.data -= (lr * update).astype(p.data.dtype)


class BatchStream:
    """Deterministic batch for every global step: epoch ``e`` is shuffled with ``(seed, e)``."""

    def __init__(self, dataset: CompiledDataset, batch_size: int, seed: int):
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self._groups = dataset.groups()
        self._epoch_starts = [0]
        self._cache: tuple[int, list[Batch]] = (-1, [])

    def epoch(self, e: int) -> list[Batch]:
        if self._cache[0] != e:
            self._cache = (e, make_batches(self.dataset, self.batch_size, seed=[self.seed, e], groups=self._groups))
        return self._cache[1]

    def locate(self, step: int) -> tuple[int, int]:
        e = 0
        start = 0
        while True:
            n = len(self.epoch(e)) if e >= len(self._epoch_starts) - 1 else None
            if n is None:
                n = self._epoch_starts[e + 1] - self._epoch_starts[e]
            elif len(self._epoch_starts) == e + 1:
                self._epoch_starts.append(start + n)
            if step < start + n:
                return e, step - start
            start += n
            e += 1

    def __call__(self, step: int) -> Batch:
        e, i = self.locate(step)
        return self.epoch(e)[i]


def train_step(
    batch: Batch, state: TrainState, config: TrainConfig, model_config: ModelConfig
) -> dict[str, float]:
    """One forward/backward/update; returns the step's losses and diagnostics."""
    rng = np.random.default_rng([config.seed, state.step, 7])
    mu, lam = config.loss_weights()
    out = forward(state.params, model_config, batch, rng)
    losses = compute_losses(out, batch, mu, lam)
    values = losses.values()
    if not all(math.isfinite(v) for v in values.values()):
        raise NumericError(f"non-finite loss {values} at step {state.step} on batch {batch.batch_id}")
    for p in state.params.values():
        p.grad = None
    tn.backward(losses.total)
    norm, clipped = clip_gradients(state.params, config.clip_norm)
    lr = lr_schedule(state.step, config.total_steps, config.learning_rate, config.warmup_fraction)
    adamw_update(state, lr, config)
    for key in ("loss_ans", "loss_A", "loss_C"):
        prev = state.running.get(key)
        state.running[key] = values[key] if prev is None else 0.98 * prev + 0.02 * values[key]
    state.step += 1
    values.update(lr=lr, grad_norm=norm, clipped_norm=clipped, batch_id=batch.batch_id)
    return values


# -- checkpoints ----------------------------------------------------------------


def save_checkpoint(
    state: TrainState,
    path,
    config: TrainConfig,
    model_config: ModelConfig,
    vocabulary: Optional[Vocabulary] = None,
) -> None:
    """Directory with ``manifest.json`` and one little-endian ``.bin`` per array."""
    out = Path(path)
    (out / "params").mkdir(parents=True, exist_ok=True)
    (out / "optimizer").mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(state.params):
        data = state.params[name].data
        dtype = "<f4" if data.dtype == np.float32 else "<f8"
        (out / "params" / f"{name}.bin").write_bytes(np.ascontiguousarray(data, dtype=dtype).tobytes())
        (out / "optimizer" / f"{name}.m.bin").write_bytes(
            np.ascontiguousarray(state.m[name], dtype=dtype).tobytes()
        )
        (out / "optimizer" / f"{name}.v.bin").write_bytes(
            np.ascontiguousarray(state.v[name], dtype=dtype).tobytes()
        )
        entries.append({"name": name, "shape": list(data.shape), "dtype": dtype})
    manifest = {
        "format": "hamqa-checkpoint",
        "version": CHECKPOINT_VERSION,
        "step": state.step,
        "running": state.running,
        "train_config": config.to_dict(),
        "model_config": {
            "encoder": asdict(model_config.encoder),
            "fine_grained": model_config.fine_grained,
            "history_attention": model_config.history_attention,
        },
        "parameters": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if vocabulary is not None:
        vocabulary.save(out / "vocab.txt")


@dataclass
class Checkpoint:
    state: TrainState
    train_config: TrainConfig
    model_config: ModelConfig
    vocabulary: Optional[Vocabulary]


def load_checkpoint(path, expected: Optional[dict[str, Tensor]] = None) -> Checkpoint:
    """Restore a checkpoint; ``expected`` parameters (if given) must match in name and shape."""
    src = Path(path)
    try:
        manifest = json.loads((src / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{src}: unreadable checkpoint manifest ({exc})") from None
    if manifest.get("format") != "hamqa-checkpoint" or manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{src}: checkpoint version {manifest.get('version')} not supported (expected {CHECKPOINT_VERSION})"
        )
    params, m, v = {}, {}, {}
    for entry in manifest["parameters"]:
        name, shape, dtype = entry["name"], tuple(entry["shape"]), np.dtype(entry["dtype"])
        if expected is not None:
            if name not in expected:
                raise CheckpointError(f"{src}: checkpoint parameter {name} is unknown to the model")
            if tuple(expected[name].shape) != shape:
                raise CheckpointError(
                    f"{src}: parameter {name} has shape {shape} in the checkpoint but {tuple(expected[name].shape)} in the model"
                )

        def read(rel):
            arr = np.frombuffer((src / rel).read_bytes(), dtype=dtype)
            if arr.size != int(np.prod(shape)):
                raise CheckpointError(f"{src}/{rel}: {arr.size} values, manifest says shape {shape}")
            return arr.reshape(shape).astype(dtype.newbyteorder("="))

        params[name] = Tensor(read(f"params/{name}.bin"), requires_grad=True, dtype=dtype.newbyteorder("="))
        m[name] = read(f"optimizer/{name}.m.bin")
        v[name] = read(f"optimizer/{name}.v.bin")
    if expected is not None and set(expected) - set(params):
        missing = sorted(set(expected) - set(params))
        raise CheckpointError(f"{src}: checkpoint lacks parameters {missing[:5]}")
    train_config = TrainConfig()
    train_config.update(manifest["train_config"], source=str(src))
    mc = manifest["model_config"]
    model_config = ModelConfig(
        encoder=EncoderConfig(**mc["encoder"]),
        fine_grained=mc["fine_grained"],
        history_attention=mc["history_attention"],
    )
    vocab_path = src / "vocab.txt"
    vocabulary = Vocabulary.from_file(vocab_path) if vocab_path.exists() else None
    state = TrainState(step=manifest["step"], params=params, m=m, v=v, running=dict(manifest.get("running", {})))
    return Checkpoint(state, train_config, model_config, vocabulary)


# -- training loop ------------------------------------------------------------------


def new_state(config: TrainConfig, vocab_size: int) -> tuple[TrainState, ModelConfig]:
    model_config = config.model_config(vocab_size)
    with tn.precision(config.precision):
        params = init_params(model_config, config.seed)
    return TrainState.fresh(params), model_config


def train(
    config: TrainConfig,
    dataset: CompiledDataset,
    eval_dataset: Optional[CompiledDataset] = None,
    out_dir=None,
    state: Optional[TrainState] = None,
    on_step: Optional[Callable[[dict], None]] = None,
    stop_at: Optional[int] = None,
) -> TrainState:
    """Run (or resume) training up to ``config.total_steps`` (or ``stop_at``).

    With ``out_dir`` set, writes ``metrics.jsonl`` records
    ``{step, lr, loss_ans, loss_A, loss_C, f1}``, a ``last`` checkpoint and,
    when ``eval_dataset`` is given, the ``best`` checkpoint by F1.
    """
    from hamqa.inference import evaluate_dataset

    config.validate()
    model_config = config.model_config(len(dataset.vocabulary))
    if state is None:
        state, _ = new_state(config, len(dataset.vocabulary))
    stream = BatchStream(dataset, config.batch_size, config.seed)
    out = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_fh = open(out / "metrics.jsonl", "a", encoding="utf-8")
    best_f1 = -1.0
    window: list[float] = []
    previous_mean: Optional[float] = None
    end = config.total_steps if stop_at is None else min(stop_at, config.total_steps)
    try:
        with tn.precision(config.precision):
            while state.step < end:
                values = train_step(stream(state.step), state, config, model_config)
                window.append(values["loss"])
                if len(window) == LOSS_WINDOW:
                    mean = sum(window) / LOSS_WINDOW
                    if previous_mean is not None and mean > previous_mean:
                        logger.warning(
                            "mean loss rose from %.4f to %.4f over steps %d-%d",
                            previous_mean, mean, state.step - LOSS_WINDOW + 1, state.step,
                        )
                    previous_mean, window = mean, []
                record = {
                    "step": state.step,
                    "lr": values["lr"],
                    "loss_ans": values["loss_ans"],
                    "loss_A": values["loss_A"],
                    "loss_C": values["loss_C"],
                    "f1": None,
                }
                evaluate_now = eval_dataset is not None and (
                    state.step % config.eval_every == 0 or state.step == end
                )
                if evaluate_now:
                    report = evaluate_dataset(state.params, model_config, eval_dataset, config)
                    record["f1"] = report.f1
                    if out is not None and report.f1 > best_f1:
                        save_checkpoint(state, out / "best", config, model_config, dataset.vocabulary)
                    best_f1 = max(best_f1, report.f1)
                if on_step is not None:
                    on_step({**values, **record})
                if log_fh is not None and (state.step % config.log_every == 0 or evaluate_now or state.step == end):
                    log_fh.write(json.dumps(record) + "\n")
                    log_fh.flush()
                if state.step % config.log_every == 0:
                    logger.info(
                        "step %d lr %.2e loss_ans %.4f loss_A %.4f loss_C %.4f",
                        state.step,
                        values["lr"],
                        values["loss_ans"],
                        values["loss_A"],
                        values["loss_C"],
                    )
    finally:
        if log_fh is not None:
            log_fh.close()
    if out is not None:
        save_checkpoint(state, out / "last", config, model_config, dataset.vocabulary)
    return state


__all__ = [
    "ABLATIONS",
    "BatchStream",
    "Checkpoint",
    "TrainConfig",
    "TrainState",
    "adamw_update",
    "clip_gradients",
    "load_checkpoint",
    "lr_schedule",
    "new_state",
    "save_checkpoint",
    "total_loss",
    "train",
    "train_step",
]
