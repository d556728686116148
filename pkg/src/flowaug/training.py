"""Dequantization, the exact NLL objective, and the flow training loop."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import Adam, Tensor, clip_grad_norm, gradient, make_rng, warmup_polynomial_lr
from .flows.model import MultiScaleFlow

LN2 = math.log(2.0)


class Dequantizer:
    """Turns grid-valued pixels into a continuous variable x + u, u ~ U(0, a).

    a is the discretization level (1/256 for 8-bit data scaled to [0, 1)).
    The constant c = -M * log(a) converts continuous-model NLL into the
    discrete bits-per-dimension convention; it depends on the per-sample
    dimensionality M, so it is recomputed per shape.
    """

    def __init__(self, a: float = 1.0 / 256.0):
        if not a > 0:
            raise ValueError(f"discretization level must be positive, got {a}")
        self.a = float(a)

    def c(self, m: int) -> float:
        return -m * math.log(self.a)

    def dequantize(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """x + u elementwise; x must lie on the discretization grid."""
        x = np.asarray(x, dtype=np.float64)
        ticks = x / self.a
        if not np.allclose(ticks, np.round(ticks), atol=1e-9):
            raise ValueError(f"input values are not on the {self.a} discretization grid")
        return x + rng.uniform(0.0, self.a, size=x.shape)


@dataclass
class LossReport:
    """One training step's objective values. bits_per_dim folds in the
    dequantization constant: (nll_nats + c) / (M * ln 2)."""

    step: int
    nll_nats: float
    bits_per_dim: float
    lr: float = 0.0


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    warmup_steps: int = 500
    max_lr: float = 1e-3
    lr_power: float = 1.0
    gradient_clip_norm: float = 50.0
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.max_lr <= 0:
            raise ValueError(f"max_lr must be positive, got {self.max_lr}")
        if self.lr_power <= 0:
            raise ValueError(f"lr_power must be positive, got {self.lr_power}")
        if self.gradient_clip_norm <= 0:
            raise ValueError(f"gradient_clip_norm must be positive, got {self.gradient_clip_norm}")


class TrainingDiverged(RuntimeError):
    """Raised when the loss sits above 10x its initial value for 100
    consecutive steps. Carries the loss history collected so far."""

    def __init__(self, message: str, history: list[LossReport]):
        super().__init__(message)
        self.history = history


class DivergenceMonitor:
    """Counts consecutive steps with nll above factor * initial."""

    factor = 10.0
    patience = 100

    def __init__(self):
        self.initial: float | None = None
        self.run = 0

    def update(self, nll: float) -> bool:
        if self.initial is None:
            self.initial = nll
            return False
        # abs() keeps the threshold meaningful in the degenerate case of a
        # negative initial nll (continuous densities can go below zero)
        if nll > self.factor * abs(self.initial):
            self.run += 1
        else:
            self.run = 0
        return self.run >= self.patience


def _param_diagnostics(model: MultiScaleFlow) -> str:
    worst = max(model.parameters(), key=lambda p: float(np.abs(p.data).max()))
    return f"largest parameter {worst.name} has max |value| {float(np.abs(worst.data).max()):.3e}"


def nll_loss(
    model: MultiScaleFlow,
    batch: Tensor,
    dequantizer: Dequantizer | None = None,
    step: int = 0,
) -> tuple[Tensor, LossReport]:
    """Mean negative log-likelihood over an (already dequantized) batch.

    Returns the differentiable loss tensor together with the report; the
    report's bits_per_dim includes the dequantization constant when a
    dequantizer is given, and is plain nats / (M ln 2) otherwise.
    """
    try:
        log_prob = model.log_prob(batch)
    except ArithmeticError as exc:
        raise ArithmeticError(
            f"non-finite loss at step {step}: {exc}; {_param_diagnostics(model)}"
        ) from exc
    loss = -log_prob.mean()
    nll = float(loss.item())
    m = int(np.prod(batch.shape[1:]))
    c = dequantizer.c(m) if dequantizer is not None else 0.0
    return loss, LossReport(step=step, nll_nats=nll, bits_per_dim=(nll + c) / (m * LN2))


def fit(
    model: MultiScaleFlow,
    data: np.ndarray,
    config: TrainConfig,
    dequantizer: Dequantizer | None = None,
) -> list[LossReport]:
    """Train the flow in place; returns the per-step loss history.

    The first (shuffled) batch drives the data-dependent actnorm init if the
    model is not initialized yet. Epoch shuffling and dequantization noise
    derive from config.seed, so the run is fully deterministic.
    """
    config.validate()
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 4 or data.shape[0] == 0:
        raise ValueError(f"dataset must be a nonempty BHWC array, got shape {data.shape}")
    n = data.shape[0]
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    if total_steps > 0 and config.warmup_steps >= total_steps:
        raise ValueError(
            f"warmup_steps {config.warmup_steps} must be below the "
            f"{total_steps} total steps ({config.epochs} epochs x {steps_per_epoch})"
        )

    if not model.initialized:
        order = make_rng(config.seed, "train", "shuffle", "epoch0").permutation(n)
        init_batch = data[order[: config.batch_size]]
        if dequantizer is not None:
            init_batch = dequantizer.dequantize(
                init_batch, make_rng(config.seed, "train", "dequant", "init")
            )
        model.initialize(init_batch)

    params = model.parameters()
    optimizer = Adam(params)
    monitor = DivergenceMonitor()
    history: list[LossReport] = []
    step = 0
    for epoch in range(config.epochs):
        order = make_rng(config.seed, "train", "shuffle", f"epoch{epoch}").permutation(n)
        for start in range(0, n, config.batch_size):
            batch = data[order[start : start + config.batch_size]]
            if dequantizer is not None:
                batch = dequantizer.dequantize(
                    batch, make_rng(config.seed, "train", "dequant", f"step{step}")
                )
            loss, report = nll_loss(model, Tensor(batch), dequantizer, step)
            report.lr = warmup_polynomial_lr(
                step, config.warmup_steps, config.max_lr, total_steps, config.lr_power
            )
            gradient(loss, params)
            clip_grad_norm(params, config.gradient_clip_norm)
            optimizer.step(report.lr)
            history.append(report)
            if monitor.update(report.nll_nats):
                raise TrainingDiverged(
                    f"loss {report.nll_nats:.3f} above {monitor.factor}x initial "
                    f"{monitor.initial:.3f} for {monitor.patience} consecutive steps "
                    f"(step {step})",
                    history,
                )
            step += 1
    return history


def write_loss_curve(path, history: list[LossReport]) -> None:
    """Persist a loss history as CSV rows (step, nll_nats, bits_per_dim, lr)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "nll_nats", "bits_per_dim", "lr"])
        for r in history:
            writer.writerow([r.step, f"{r.nll_nats:.10g}", f"{r.bits_per_dim:.10g}", f"{r.lr:.10g}"])
