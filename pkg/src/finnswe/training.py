"""Multi-topography supervised training of the stencil networks.

Every sequence is rolled out with its own true H; only the surface frames
are supervised.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .errors import ShapeError, SweError
from .finn import DEFAULT_HIDDEN, FinnParams, finn_rollout, param_names, sequence_loss
from .optim import clip_global_norm, make_optimizer
from .rng import SplitMix64
from .scenario import DatasetManifest, Sequence, read_sequence, write_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    train_window: int | None = None
    seed: int = 0
    hidden_width: int = DEFAULT_HIDDEN
    clip_norm: float = 1.0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class TrainResult:
    params: FinnParams
    losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = math.inf
    aborted: bool = False

    def log_lines(self) -> list[str]:
        return [f"epoch={i} loss={loss!r}" for i, loss in enumerate(self.losses)]


def load_sequences(data) -> list[Sequence]:
    """Accept a manifest, a list of sequences, or a list of paths."""
    if isinstance(data, DatasetManifest):
        return [data.load(i) for i in range(len(data))]
    return [s if isinstance(s, Sequence) else read_sequence(s) for s in data]


def window_of(seq: Sequence, window: int | None) -> int:
    T = seq.steps if window is None else min(window, seq.steps)
    if T < 1:
        raise ShapeError("training window must cover at least one step")
    return T


def sequence_grad(params: FinnParams, seq: Sequence, window: int | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and parameter gradients for one sequence on a private tape."""
    T = window_of(seq, window)
    tape = Tape()
    pv = params.on_tape(tape)
    frames = finn_rollout(tape, seq.eta[0], seq.H, pv, seq.cfg, T)
    loss = sequence_loss(frames, seq.eta[: T + 1])
    grads = tape.backward(loss, [pv[n].id for n in param_names()])
    return float(loss.value), {n: grads[pv[n].id] for n in param_names()}


def batch_grad(params: FinnParams, batch: list[Sequence], window: int | None = None):
    """Batch-mean loss and gradients, reduced in batch order."""
    total_loss = 0.0
    total = {n: np.zeros_like(params.arrays[n]) for n in param_names()}
    for seq in batch:
        loss, g = sequence_grad(params, seq, window)
        total_loss += loss
        for n in total:
            total[n] += g[n]
    k = len(batch)
    return total_loss / k, {n: g / k for n, g in total.items()}


def check_grid(seqs: list[Sequence]) -> None:
    shapes = {s.H.shape for s in seqs}
    if len(shapes) != 1:
        raise ShapeError(f"dataset mixes grid shapes {sorted(shapes)}")


def train(
    data,
    cfg: TrainConfig,
    init: FinnParams | None = None,
    checkpoint_path=None,
    log_path=None,
) -> TrainResult:
    """Mini-batch training; returns the lowest-loss parameters seen.

    The epoch loss is the mean of the batch losses of that epoch. A
    non-finite loss ends training early with the best parameters so far.
    """
    seqs = load_sequences(data)
    if not seqs:
        raise ValueError("empty dataset")
    check_grid(seqs)
    params = (init.copy() if init is not None else FinnParams.init(cfg.seed, cfg.hidden_width))
    if params.hidden_width != cfg.hidden_width:
        raise ShapeError(f"initial params have hidden width {params.hidden_width}, config says {cfg.hidden_width}")
    log.info("training %d sequences, %d parameters", len(seqs), params.count)
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    result = TrainResult(params=params.copy())
    log_fh = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(cfg.epochs):
            order = SplitMix64(cfg.seed, "epoch", epoch).permutation(len(seqs))
            batch_losses = []
            for start in range(0, len(order), cfg.batch_size):
                batch = [seqs[i] for i in order[start:start + cfg.batch_size]]
                try:
                    loss, grads = batch_grad(params, batch, cfg.train_window)
                except SweError as exc:
                    log.warning("epoch %d: rollout failed (%s); stopping", epoch, exc)
                    loss, grads = math.nan, None
                if not math.isfinite(loss):
                    result.aborted = True
                    break
                batch_losses.append(loss)
                clip_global_norm(grads, cfg.clip_norm)
                opt.step(params.arrays, grads)
            if result.aborted:
                log.warning("non-finite loss in epoch %d; keeping best epoch %d", epoch, result.best_epoch)
                break
            epoch_loss = float(np.mean(batch_losses))
            result.losses.append(epoch_loss)
            if log_fh is not None:
                log_fh.write(f"epoch={epoch} loss={epoch_loss!r}\n")
                log_fh.flush()
            log.info("epoch %d loss %.6e", epoch, epoch_loss)
            # snapshot taken at the end of the epoch with the lowest batch-averaged loss
            if epoch_loss < result.best_loss:
                result.best_loss = epoch_loss
                result.best_epoch = epoch
                result.params = params.copy()
                if checkpoint_path is not None:
                    write_checkpoint(checkpoint_path, result.params)
            if cfg.checkpoint_every and checkpoint_path is not None and (epoch + 1) % cfg.checkpoint_every == 0:
                write_checkpoint(Path(f"{checkpoint_path}.epoch{epoch + 1}"), params)
    finally:
        if log_fh is not None:
            log_fh.close()
    if cfg.epochs == 0 and checkpoint_path is not None:
        write_checkpoint(checkpoint_path, result.params)
    return result


def sequence_mse(params: FinnParams, seq: Sequence, H=None, window: int | None = None) -> float:
    """Rollout MSE of one sequence, optionally under a replacement topography."""
    topo = seq.H if H is None else np.asarray(H, dtype=np.float64)
    if topo.shape != seq.H.shape:
        raise ShapeError(f"provided H {topo.shape} does not match grid {seq.H.shape}")
    T = window_of(seq, window)
    tape = Tape(record=False)
    frames = finn_rollout(tape, seq.eta[0], topo, params.on_tape(tape), seq.cfg, T)
    return float(sequence_loss(frames, seq.eta[: T + 1]).value)


def evaluate(data, params: FinnParams, H=None, window: int | None = None, batch_size: int = 8) -> float:
    """Batch-averaged rollout MSE without gradient recording.

    ``H`` replaces every sequence's stored topography when given.
    """
    seqs = load_sequences(data)
    batch_losses = []
    for start in range(0, len(seqs), batch_size):
        batch = seqs[start:start + batch_size]
        total = 0.0
        for seq in batch:
            total += sequence_mse(params, seq, H, window)
        batch_losses.append(total / len(batch))
    return sum(batch_losses) / len(batch_losses)
