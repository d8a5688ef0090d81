"""Mini-batch training loop: row-sparse optimizers, early stopping, resumable state.

All randomness is drawn from counter-keyed streams — init from
(seed, 0), the epoch-e shuffle from (seed, 1, e), negatives for example i
at step s from (seed, 2, s, i) — so (seed, worker count, config) fully
determine the run and a resumed run continues bit-identically without
serializing generator state.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import (
    CheckpointMismatchError,
    load_model,
    read_array,
    read_manifest,
    save_model,
    verify_vocab,
    write_array,
)
from .data import Dataset, TrainingExample, directed_examples
from .evaluation import evaluate
from .loss import GradientMap, LossConfig, batch_loss
from .models import EmbeddingStore, KGEModel, ModelConfig
from .subsampling import compute_weights

log = logging.getLogger(__name__)

_INIT_STREAM, _SHUFFLE_STREAM, _NOISE_STREAM = 0, 1, 2


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the step, learning rate, and batch ids."""

    def __init__(self, step: int, lr: float, example_ids: list[int]):
        super().__init__(
            f"non-finite loss at step {step} (lr={lr!r}); batch example ids: {example_ids}"
        )
        self.step = step
        self.lr = lr
        self.example_ids = example_ids


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_decay: float = 1.0  # multiplier applied every lr_decay_steps (1.0 = constant)
    lr_decay_steps: int = 0
    batch_size: int = 128
    max_steps: int = 1000
    eval_every: int = 0  # 0 disables validation (and early stopping)
    patience: int = 0  # evaluations without improvement before stopping; 0 = never
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_steps < 1:
            raise ValueError("learning rate, batch size, and max steps must be positive")
        if not 0 < self.lr_decay <= 1.0 or self.lr_decay_steps < 0:
            raise ValueError("lr decay must be in (0, 1] with a non-negative step interval")
        if self.eval_every < 0 or self.patience < 0 or self.workers < 1:
            raise ValueError("eval cadence and patience must be >= 0, workers >= 1")

    def lr_at(self, step: int) -> float:
        if self.lr_decay_steps <= 0:
            return self.learning_rate
        return self.learning_rate * self.lr_decay ** ((step - 1) // self.lr_decay_steps)


@dataclass
class TrainState:
    step: int = 0
    best_mrr: float = -1.0
    best_step: int = 0
    evals_since_improvement: int = 0


class SparseSGD:
    """Plain SGD on exactly the rows a batch touched."""

    kind = "sgd"

    def apply(self, store: EmbeddingStore, grads: GradientMap, step: int, lr: float) -> None:
        for (table, row), g in sorted(grads.items()):
            getattr(store, table)[row] -= lr * g

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        pass


class SparseAdam:
    """Adam over embedding rows, with moments kept only for touched rows.

    A row touched at step t after last being touched at step t0 first
    catches up the decay it missed:

        m <- beta1^(t - t0 - 1) * m        v <- beta2^(t - t0 - 1) * v

    then takes the standard update with global-step bias corrections:

        m <- beta1 * m + (1 - beta1) * g
        v <- beta2 * v + (1 - beta2) * g^2
        row -= lr * (m / (1 - beta1^t)) / (sqrt(v / (1 - beta2^t)) + eps)

    The parameter drift dense Adam would apply to untouched rows (their
    momentum is nonzero for a while) is skipped — the usual lazy variant,
    which keeps a step's cost proportional to the batch, not the vocabulary.
    """

    kind = "adam"

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        # (table, row) -> [m, v, last_touched_step]
        self.state: dict[tuple[str, int], list] = {}

    def apply(self, store: EmbeddingStore, grads: GradientMap, step: int, lr: float) -> None:
        bc1 = 1.0 - self.beta1**step
        bc2 = 1.0 - self.beta2**step
        for key, g in sorted(grads.items()):
            entry = self.state.get(key)
            if entry is None:
                entry = [np.zeros_like(g), np.zeros_like(g), 0]
                self.state[key] = entry
            m, v, last = entry
            skipped = step - last - 1
            if skipped > 0:
                m *= self.beta1**skipped
                v *= self.beta2**skipped
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            entry[2] = step
            table, row = key
            getattr(store, table)[row] -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for table in ("entity", "relation"):
            keys = sorted(row for (t, row) in self.state if t == table)
            out[f"{table}_rows"] = np.asarray(keys, dtype=np.int64)
            if keys:
                out[f"{table}_m"] = np.stack([self.state[(table, r)][0] for r in keys])
                out[f"{table}_v"] = np.stack([self.state[(table, r)][1] for r in keys])
                out[f"{table}_last"] = np.asarray(
                    [self.state[(table, r)][2] for r in keys], dtype=np.int64
                )
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.state = {}
        for table in ("entity", "relation"):
            rows = arrays.get(f"{table}_rows")
            if rows is None or rows.size == 0:
                continue
            m, v, last = arrays[f"{table}_m"], arrays[f"{table}_v"], arrays[f"{table}_last"]
            for i, row in enumerate(rows):
                self.state[(table, int(row))] = [m[i].copy(), v[i].copy(), int(last[i])]


def _make_optimizer(config: TrainConfig):
    if config.optimizer == "adam":
        return SparseAdam(config.adam_beta1, config.adam_beta2, config.adam_eps)
    return SparseSGD()


@dataclass
class TrainResult:
    model: KGEModel  # final-step parameters
    best_store: EmbeddingStore  # best-validation snapshot (final if never evaluated)
    log: list[dict]
    state: TrainState

    def best_model(self) -> KGEModel:
        from .models import model_from_store

        return model_from_store(self.model.kind, self.best_store, **self.model.constants())


def train(
    dataset: Dataset,
    model_config: ModelConfig,
    loss_config: LossConfig,
    train_config: TrainConfig,
    checkpoint_dir: str | Path | None = None,
    config_echo: dict | None = None,
) -> TrainResult:
    """Train from scratch; returns the best-validation model and the step log.

    Each log record holds the step, the mean batch loss, and (on
    evaluation steps) the filtered validation MRR.
    """
    model = model_config.build(
        dataset.n_entities,
        dataset.n_relations,
        seed=(train_config.seed, _INIT_STREAM),
        gamma=loss_config.gamma,
    )
    optimizer = _make_optimizer(train_config)
    state = TrainState()
    return _run(
        dataset,
        model,
        optimizer,
        state,
        loss_config,
        train_config,
        best_store=None,
        checkpoint_dir=checkpoint_dir,
        config_echo=config_echo,
    )


def _run(
    dataset: Dataset,
    model: KGEModel,
    optimizer,
    state: TrainState,
    loss_config: LossConfig,
    train_config: TrainConfig,
    best_store: EmbeddingStore | None,
    checkpoint_dir: str | Path | None,
    config_echo: dict | None,
) -> TrainResult:
    examples = directed_examples(dataset, "train")
    weights = compute_weights(loss_config.subsampling, dataset)
    seed = train_config.seed
    n = len(examples)
    batch_size = min(train_config.batch_size, n)
    steps_per_epoch = n // batch_size

    if train_config.eval_every and len(dataset.valid) == 0:
        raise ValueError("validation cadence set but the valid split is empty")

    perm = None
    perm_epoch = -1
    records: list[dict] = []

    for step in range(state.step + 1, train_config.max_steps + 1):
        epoch, slot = divmod(step - 1, steps_per_epoch)
        if epoch != perm_epoch:
            perm = np.random.default_rng((seed, _SHUFFLE_STREAM, epoch)).permutation(n)
            perm_epoch = epoch
        batch = [examples[i] for i in perm[slot * batch_size : (slot + 1) * batch_size]]

        lr = train_config.lr_at(step)
        value, grads = batch_loss(
            model, batch, weights, loss_config, dataset, noise_key=(seed, _NOISE_STREAM, step)
        )
        if not np.isfinite(value):
            raise TrainingDiverged(step, lr, [ex.index for ex in batch[:16]])
        optimizer.apply(model.store, grads, step, lr)
        state.step = step
        record = {"step": step, "loss": value}

        if train_config.eval_every and step % train_config.eval_every == 0:
            report = evaluate(model, dataset, "valid")
            record["valid_mrr"] = report.mrr
            if report.mrr > state.best_mrr:
                state.best_mrr = report.mrr
                state.best_step = step
                state.evals_since_improvement = 0
                best_store = model.store.copy()
            else:
                state.evals_since_improvement += 1
                if train_config.patience and state.evals_since_improvement >= train_config.patience:
                    records.append(record)
                    log.info("early stop at step %d (best MRR %.4f at step %d)",
                             step, state.best_mrr, state.best_step)
                    break
        records.append(record)

    if best_store is None:
        best_store = model.store.copy()
    result = TrainResult(model, best_store, records, state)
    if checkpoint_dir is not None:
        save_train_state(
            checkpoint_dir, result, optimizer, dataset, loss_config, train_config, config_echo
        )
    return result


def save_train_state(
    out_dir: str | Path,
    result: TrainResult,
    optimizer,
    dataset: Dataset,
    loss_config: LossConfig,
    train_config: TrainConfig,
    config_echo: dict | None = None,
) -> Path:
    """Write the best model checkpoint plus everything needed to resume.

    The primary checkpoint (manifest + entity/relation matrices) holds the
    best-validation parameters; ``state.json`` and the ``final_*`` /
    optimizer sidecars carry the final-step parameters and moments.
    """
    out = Path(out_dir)
    best = result.best_model()
    save_model(out, best, dataset, config_echo=config_echo, seed=train_config.seed)
    write_array(out / "final_entity.f64", result.model.store.entity.astype("<f8"))
    write_array(out / "final_relation.f64", result.model.store.relation.astype("<f8"))
    opt_arrays = optimizer.state_arrays()
    for name, arr in opt_arrays.items():
        dtype = "<i8" if arr.dtype.kind == "i" else "<f8"
        write_array(out / f"opt_{name}.{dtype[1:]}", arr.astype(dtype))
    state_payload = {
        "state": dataclasses.asdict(result.state),
        "optimizer": {
            "kind": optimizer.kind,
            "arrays": {name: [list(arr.shape), str(arr.dtype.kind)] for name, arr in opt_arrays.items()},
        },
        "loss_config": _loss_config_dict(loss_config),
        "train_config": dataclasses.asdict(train_config),
    }
    with open(out / "state.json", "w", encoding="utf-8") as f:
        json.dump(state_payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return out


def _loss_config_dict(loss_config: LossConfig) -> dict:
    return dataclasses.asdict(loss_config)


def resume(
    checkpoint_dir: str | Path,
    dataset: Dataset,
    train_config: TrainConfig,
) -> TrainResult:
    """Continue a checkpointed run; bit-identical to never having stopped.

    Only ``max_steps`` may differ from the checkpointed configuration —
    anything else (batch size, seed, optimizer, cadence...) changes the
    stream layout and is rejected, as is a vocabulary mismatch.
    """
    ckpt = Path(checkpoint_dir)
    manifest = read_manifest(ckpt)
    verify_vocab(manifest, dataset)
    state_path = ckpt / "state.json"
    if not state_path.is_file():
        raise CheckpointMismatchError(f"{ckpt} has no state.json; cannot resume from it")
    with open(state_path, encoding="utf-8") as f:
        payload = json.load(f)

    stored_tc = payload["train_config"]
    requested = dataclasses.asdict(train_config)
    mismatched = [
        key for key in requested
        if key != "max_steps" and requested[key] != stored_tc.get(key)
    ]
    if mismatched:
        raise CheckpointMismatchError(
            f"resume config differs from checkpoint on {mismatched}; only max_steps may change"
        )
    state = TrainState(**payload["state"])
    if train_config.max_steps < state.step:
        raise CheckpointMismatchError(
            f"checkpoint is already at step {state.step} > max_steps {train_config.max_steps}"
        )

    loss_config = _loss_config_from_dict(payload["loss_config"])
    best, _ = load_model(ckpt)
    spec = manifest["model"]
    final_entity = read_array(ckpt / "final_entity.f64", "<f8", tuple(spec["entity_shape"]))
    final_relation = read_array(ckpt / "final_relation.f64", "<f8", tuple(spec["relation_shape"]))
    from .models import model_from_store

    model = model_from_store(
        spec["kind"],
        EmbeddingStore(final_entity, final_relation, spec["init_range"]),
        **spec.get("constants", {}),
    )
    opt_meta = payload["optimizer"]
    if opt_meta["kind"] != train_config.optimizer:
        raise CheckpointMismatchError(
            f"checkpoint optimizer {opt_meta['kind']!r} != requested {train_config.optimizer!r}"
        )
    optimizer = _make_optimizer(train_config)
    arrays = {}
    for name, (shape, kind) in opt_meta["arrays"].items():
        dtype = "<i8" if kind == "i" else "<f8"
        arrays[name] = read_array(ckpt / f"opt_{name}.{dtype[1:]}", dtype, tuple(shape))
    optimizer.load_state_arrays(arrays)

    return _run(
        dataset,
        model,
        optimizer,
        state,
        loss_config,
        train_config,
        best_store=best.store,
        checkpoint_dir=checkpoint_dir,
        config_echo=manifest.get("config") or None,
    )


def _loss_config_from_dict(payload: dict) -> LossConfig:
    from .sampler import NoiseConfig
    from .subsampling import SubsamplingConfig

    return LossConfig(
        gamma=payload["gamma"],
        subsampling=SubsamplingConfig(**payload["subsampling"]),
        noise=NoiseConfig(**payload["noise"]),
    )
