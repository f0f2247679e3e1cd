"""Topography inference with frozen stencil networks.

The depth grid H is the only trainable quantity. The objective is the
batch-mean rollout MSE plus two quadratic regularisers: one on differences
between neighbouring cells, one pulling border cells towards their inward
neighbours.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var
from .errors import DomainError, ShapeError, SweError
from .finn import FinnParams, finn_rollout, sequence_loss
from .optim import Adam
from .rng import SplitMix64
from .scenario import Sequence
from .training import load_sequences, window_of

log = logging.getLogger(__name__)


@dataclass
class InverseConfig:
    iterations: int = 1600
    lambda_smooth: float = 5e-7
    lambda_edge: float = 5e-7
    h_init_m: float = 70.0
    learning_rate: float = 1e-2
    batch_size: int = 8
    seed: int = 0
    clamp_min_m: float = 0.1
    window: int | None = None
    snapshot_every: int = 0

    def __post_init__(self):
        if self.lambda_smooth < 0 or self.lambda_edge < 0:
            raise DomainError("regularisation weights must be non-negative")
        if not self.h_init_m > 0:
            raise DomainError("h_init_m must be positive")
        if self.iterations < 0:
            raise DomainError("iterations must be >= 0")


def smoothness_penalty(H: Var) -> Var:
    """Sum of squared differences over all horizontally and vertically adjacent pairs."""
    nx, ny = H.shape
    total = None
    if nx > 1:
        d = H[1:, :] - H[:-1, :]
        total = ad.sum_(ad.square(d))
    if ny > 1:
        d = H[:, 1:] - H[:, :-1]
        s = ad.sum_(ad.square(d))
        total = s if total is None else total + s
    if total is None:
        return H.tape.var(0.0) * 0.0
    return total


def edge_penalty(H: Var) -> Var:
    """Squared differences between every border cell and its inward neighbour(s).

    Side cells contribute one term; corner cells contribute two, one per
    inward direction.
    """
    nx, ny = H.shape
    if nx < 3 or ny < 3:
        raise DomainError(f"edge penalty needs a grid of at least 3x3, got {nx}x{ny}")
    terms = [
        H[0:1, :] - H[1:2, :],            # top row, inward along axis 0
        H[nx - 1:nx, :] - H[nx - 2:nx - 1, :],
        H[:, 0:1] - H[:, 1:2],            # left column, inward along axis 1
        H[:, ny - 1:ny] - H[:, ny - 2:ny - 1],
    ]
    total = ad.sum_(ad.square(terms[0]))
    for t in terms[1:]:
        total = total + ad.sum_(ad.square(t))
    return total


def smoothness_value(H: np.ndarray) -> float:
    return float(np.sum(np.diff(H, axis=0) ** 2) + np.sum(np.diff(H, axis=1) ** 2))


def edge_value(H: np.ndarray) -> float:
    return float(
        np.sum((H[0, :] - H[1, :]) ** 2)
        + np.sum((H[-1, :] - H[-2, :]) ** 2)
        + np.sum((H[:, 0] - H[:, 1]) ** 2)
        + np.sum((H[:, -1] - H[:, -2]) ** 2)
    )


@dataclass
class IterationLog:
    iteration: int
    data: float
    smooth: float
    edge: float
    objective: float

    def line(self) -> str:
        return f"iter={self.iteration} data={self.data!r} smooth={self.smooth!r} edge={self.edge!r}"


@dataclass
class InverseResult:
    H: np.ndarray
    best_iteration: int
    inference_error: float
    history: list[IterationLog] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    clamp_events: int = 0
    aborted: bool = False
    final_H: np.ndarray | None = None


def objective(
    params: FinnParams, batch: list[Sequence], H: np.ndarray, cfg: InverseConfig
) -> tuple[IterationLog, np.ndarray]:
    """Objective terms and the gradient w.r.t. H for one batch.

    Each sequence is rolled out on its own tape; per-sequence gradients are
    summed in batch order.
    """
    k = len(batch)
    data_total = 0.0
    grad = np.zeros_like(H)
    for seq in batch:
        T = window_of(seq, cfg.window)
        tape = Tape()
        pv = params.on_tape(tape)
        Hv = tape.var(H)
        frames = finn_rollout(tape, seq.eta[0], Hv, pv, seq.cfg, T)
        loss = sequence_loss(frames, seq.eta[: T + 1])
        data_total += float(loss.value)
        grad += tape.backward(loss, [Hv.id])[Hv.id]
    data = data_total / k
    grad /= k

    tape = Tape()
    Hv = tape.var(H)
    sm = smoothness_penalty(Hv)
    ed = edge_penalty(Hv)
    reg = sm * cfg.lambda_smooth + ed * cfg.lambda_edge
    grad += tape.backward(reg, [Hv.id])[Hv.id]
    smooth, edge = float(sm.value), float(ed.value)
    total = data + cfg.lambda_smooth * smooth + cfg.lambda_edge * edge
    return IterationLog(-1, data, smooth, edge, total), grad


class _BatchSampler:
    """Sampling without replacement; reshuffles when a pass is exhausted."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.seed = seed
        self.epoch = 0
        self.order: list[int] = []

    def next(self) -> list[int]:
        if len(self.order) < self.batch_size:
            self.order = SplitMix64(self.seed, "infer-epoch", self.epoch).permutation(self.n)
            self.epoch += 1
        out, self.order = self.order[: self.batch_size], self.order[self.batch_size:]
        return out


def infer_topography(
    data,
    params: FinnParams,
    cfg: InverseConfig,
    H_init: np.ndarray | None = None,
    log_path=None,
) -> InverseResult:
    """Gradient descent on H through the unrolled rollout.

    Iteration ``k`` evaluates the objective at the H obtained after ``k``
    updates, so ``iterations`` updates give ``iterations + 1`` log entries.
    The returned H is the snapshot with the lowest data term.
    """
    seqs = load_sequences(data)
    if not seqs:
        raise ValueError("empty dataset")
    shape = seqs[0].H.shape
    if H_init is None:
        H = np.full(shape, cfg.h_init_m)
    else:
        H = np.array(H_init, dtype=np.float64)
        if H.shape != shape:
            raise ShapeError(f"initial H {H.shape} does not match grid {shape}")

    frozen = params.copy()
    opt = Adam(cfg.learning_rate)
    sampler = _BatchSampler(len(seqs), cfg.batch_size, cfg.seed)
    result = InverseResult(H=H.copy(), best_iteration=-1, inference_error=math.inf)
    log_fh = open(log_path, "w") if log_path is not None else None
    try:
        for it in range(cfg.iterations + 1):
            batch = [seqs[i] for i in sampler.next()]
            try:
                entry, grad = objective(frozen, batch, H, cfg)
            except SweError as exc:
                log.warning("iteration %d: rollout failed (%s); stopping", it, exc)
                result.aborted = True
                break
            if not (math.isfinite(entry.objective) and np.all(np.isfinite(grad))):
                log.warning("iteration %d: non-finite objective; stopping", it)
                result.aborted = True
                break
            entry.iteration = it
            result.history.append(entry)
            if log_fh is not None:
                log_fh.write(entry.line() + "\n")
            if cfg.snapshot_every and it % cfg.snapshot_every == 0:
                result.snapshots[it] = H.copy()
            if entry.data < result.inference_error:
                result.inference_error = entry.data
                result.best_iteration = it
                result.H = H.copy()
            if it == cfg.iterations:
                break
            state = {"H": H}
            opt.step(state, {"H": grad})
            low = H < cfg.clamp_min_m
            if np.any(low):
                result.clamp_events += int(low.sum())
                log.info("iteration %d: clamped %d cells to %g m", it, int(low.sum()), cfg.clamp_min_m)
                H[low] = cfg.clamp_min_m
    finally:
        if log_fh is not None:
            log_fh.close()
    result.final_H = H.copy()
    return result


def reconstruction_error(H_inferred: np.ndarray, H_true: np.ndarray, mode: str = "full") -> float:
    """Root-mean-square depth error in metres.

    ``inner`` drops two cells on every side (28x28 of a 32x32 grid).
    """
    if H_inferred.shape != H_true.shape:
        raise ShapeError(f"shapes differ: {H_inferred.shape} vs {H_true.shape}")
    d = H_inferred - H_true
    if mode == "inner":
        nx, ny = d.shape
        if nx < 5 or ny < 5:
            raise DomainError("inner mode needs a grid of at least 5x5")
        d = d[2:-2, 2:-2]
    elif mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    return float(np.sqrt(np.mean(d * d)))
