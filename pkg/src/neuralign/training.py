"""AdamW training of a modality encoder against fixed image embeddings.

The image side is frozen: only encoder parameters move. Batching, parameter
updates and therefore final checkpoints are fully determined by
(seed, config, dataset).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contrastive import contrastive_loss
from .encoders import ModalityEncoder, backward_from_cache, encode_batch, forward_with_cache
from .errors import DimensionError, ManifestError


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    weight_decay: float = 1e-3
    batch_size: int = 256
    epochs: int = 30
    temperature: float = 1.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


@dataclass
class AdamWState:
    """First/second moment estimates per parameter plus the step counter."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adamw_state(params: dict[str, np.ndarray]) -> AdamWState:
    return AdamWState(step=0,
                      m={k: np.zeros_like(p) for k, p in params.items()},
                      v={k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: AdamWState, config: TrainConfig) -> tuple[dict[str, np.ndarray], AdamWState]:
    """One decoupled-weight-decay Adam update, in place.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
    """
    if set(grads) != set(params):
        raise DimensionError("gradient keys do not match parameter keys")
    state.step += 1
    t = state.step
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise DimensionError(
                f"gradient shape {g.shape} != parameter shape {theta.shape} for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + config.eps_adam)
        update += config.weight_decay * theta
        theta -= config.learning_rate * update
    return params, state


def make_batches(num_samples: int, batch_size: int, epoch_index: int,
                 seed: int) -> list[np.ndarray]:
    """Chunk a (seed, epoch)-determined permutation of 0..num_samples-1.

    The final partial batch is kept; callers that cannot use singleton batches
    skip them.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch_index)]))
    perm = rng.permutation(num_samples)
    return [perm[i:i + batch_size] for i in range(0, num_samples, batch_size)]


def _image_embedding_matrix(dataset, samples) -> np.ndarray:
    rows = []
    for s in samples:
        record = dataset.stimuli.get(s.stimulus_id)
        if record is None:
            raise ManifestError(
                f"sample {s.sample_id!r} references unknown stimulus {s.stimulus_id!r}")
        rows.append(record.embedding)
    return np.stack(rows)


def train_epoch(encoder: ModalityEncoder, dataset, state: AdamWState,
                config: TrainConfig, epoch_index: int = 0) -> float:
    """One pass over the training split; returns the mean per-batch loss.

    Per batch: encode, pair with the matching frozen image embeddings, take
    the symmetric contrastive loss, backpropagate into the encoder, AdamW
    step. Batches of size 1 are skipped (their contrastive loss is
    identically zero and carries no gradient).
    """
    samples = dataset.train_samples()
    z_img = _image_embedding_matrix(dataset, samples)
    losses = []
    for batch in make_batches(len(samples), config.batch_size, epoch_index, config.seed):
        if batch.size < 2:
            continue
        batch_samples = [samples[i] for i in batch]
        z_neural, cache = forward_with_cache(encoder, batch_samples)
        loss, d_z_neural, _ = contrastive_loss(z_neural, z_img[batch], config.temperature)
        grads = backward_from_cache(encoder, cache, d_z_neural)
        adamw_step(encoder.params, grads, state, config)
        losses.append(loss)
    return float(np.mean(losses)) if losses else float("nan")


def evaluation_loss(encoder: ModalityEncoder, dataset, config: TrainConfig,
                    split: str = "train") -> float:
    """Mean contrastive loss over sequential (unshuffled) batches, no updates."""
    samples = dataset.split_samples(split)
    z_img = _image_embedding_matrix(dataset, samples)
    losses = []
    for start in range(0, len(samples), config.batch_size):
        idx = np.arange(start, min(start + config.batch_size, len(samples)))
        if idx.size < 2:
            continue
        z_neural = encode_batch(encoder, [samples[i] for i in idx])
        loss, _, _ = contrastive_loss(z_neural, z_img[idx], config.temperature)
        losses.append(loss)
    return float(np.mean(losses)) if losses else float("nan")


def fit(encoder: ModalityEncoder, dataset, config: TrainConfig,
        state: AdamWState | None = None) -> tuple[ModalityEncoder, AdamWState, list[float]]:
    """Run config.epochs training epochs; returns the per-epoch loss curve."""
    if state is None:
        state = init_adamw_state(encoder.params)
    curve = [train_epoch(encoder, dataset, state, config, epoch_index=e)
             for e in range(config.epochs)]
    return encoder, state, curve


def loss_curve_csv(curve: list[float]) -> str:
    """Render a loss curve as deterministic 'epoch,mean_loss' CSV text."""
    lines = ["epoch,mean_loss"]
    lines += [f"{e},{loss!r}" for e, loss in enumerate(curve)]
    return "\n".join(lines) + "\n"
