"""Deterministic minibatch training with logcosh loss and Adam.

All randomness flows from one integer seed: parameter initialization,
epoch shuffling and dropout masks draw from separate child streams of the
same seed sequence (spawn order init, shuffle, dropout), so two runs with
equal seed and data produce bit-identical losses and weights.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import Model, ModelConfig, build_model
from .nn import Adam, logcosh_loss

log = logging.getLogger(__name__)


def train_model(
    model: Model,
    pairs,
    epochs: int,
    batch_size: int,
    rng_shuffle,
    rng_dropout,
    lr: float = 1e-3,
    log_every: int = 0,
) -> list[float]:
    """Run the update loop; returns the mean loss per epoch."""
    if not pairs:
        raise ValidationError("no training pairs")
    if epochs < 1 or batch_size < 1:
        raise ValidationError(
            f"epochs and batch size must be positive, got {epochs}, {batch_size}"
        )
    if lr <= 0.0:
        raise ValidationError(f"learning rate must be positive, got {lr}")
    inputs = np.stack([np.asarray(p.input, dtype=np.float64) for p in pairs])[..., None]
    targets = np.stack([np.asarray(p.target, dtype=np.float64) for p in pairs])[..., None]
    count = len(pairs)
    optimizer = Adam(lr=lr)
    params = model.parameters()
    epoch_losses: list[float] = []
    for epoch in range(1, epochs + 1):
        order = rng_shuffle.permutation(count)
        total = 0.0
        for start in range(0, count, batch_size):
            chosen = order[start : start + batch_size]
            predicted = model.forward(inputs[chosen], training=True, rng=rng_dropout)
            loss, dloss = logcosh_loss(predicted, targets[chosen])
            model.backward(dloss)
            optimizer.step(params, model.gradients())
            total += loss * chosen.size
        epoch_losses.append(total / count)
        if log_every and epoch % log_every == 0:
            log.info("epoch %d/%d loss %.6f", epoch, epochs, epoch_losses[-1])
    return epoch_losses


def train_from_pairs(
    cfg: ModelConfig,
    pairs,
    epochs: int,
    batch_size: int,
    seed: int,
    lr: float = 1e-3,
    loss_csv=None,
    log_every: int = 0,
) -> tuple[Model, list[float]]:
    """Build a fresh model and train it, all seeded from `seed`."""
    init_seq, shuffle_seq, dropout_seq = np.random.SeedSequence(seed).spawn(3)
    model = build_model(cfg, rng=np.random.default_rng(init_seq))
    losses = train_model(
        model, pairs, epochs, batch_size,
        rng_shuffle=np.random.default_rng(shuffle_seq),
        rng_dropout=np.random.default_rng(dropout_seq),
        lr=lr, log_every=log_every,
    )
    if loss_csv is not None:
        write_loss_csv(loss_csv, losses)
    return model, losses


def write_loss_csv(path, losses) -> None:
    """CSV with header `epoch,loss`; loss formatted with full precision so
    identical runs produce identical files."""
    lines = ["epoch,loss"]
    lines.extend(f"{epoch},{value!r}" for epoch, value in enumerate(losses, start=1))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
