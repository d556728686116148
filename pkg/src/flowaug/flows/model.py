"""Multi-scale composition of the invertible layers.

Each level squeezes space into channels, runs `steps_per_level` steps of
[actnorm -> 1x1 mixing -> affine coupling], then factors half of the
channels out to the latent code; the last level emits everything. Factored
tensors are scored against a standard Gaussian prior, so the model defines
an exact log-density via the change of variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import Parameter, Tensor, make_rng
from .layers import (
    ActNorm,
    AffineCoupling,
    AttentionStack,
    ConvStack,
    InvConv1x1,
    factor_out,
    merge,
    squeeze,
    squeeze_array,
    unsqueeze_array,
)

LOG_TWO_PI = math.log(2.0 * math.pi)

_ATTENTION_MODES = ("last", "last-two", "none")


@dataclass
class FlowConfig:
    """Architecture knobs for the multi-scale flow.

    attention picks which scale levels use the self-attention conditioner:
    "last" (default), "last-two", or "none" (all-convolutional). squeeze can
    be disabled for 1x1-spatial toy data, in which case levels must be 1.
    """

    levels: int = 2
    steps_per_level: int = 4
    filters: int = 32
    attention: str = "last"
    attention_heads: int = 4
    squeeze: bool = True

    def validate(self) -> None:
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.steps_per_level < 1:
            raise ValueError(f"steps_per_level must be >= 1, got {self.steps_per_level}")
        if self.filters < 1:
            raise ValueError(f"filters must be >= 1, got {self.filters}")
        if self.attention not in _ATTENTION_MODES:
            raise ValueError(f"attention must be one of {_ATTENTION_MODES}, got {self.attention!r}")
        if not self.squeeze and self.levels != 1:
            raise ValueError("multi-level models need squeeze; set levels=1 to disable it")


@dataclass
class LatentCode:
    """Ordered latent parts, one per factor-out point plus the final level
    output. Shapes are per-sample and recorded for inversion."""

    parts: list
    shapes: list = field(default_factory=list)

    def __post_init__(self):
        if not self.shapes:
            self.shapes = [tuple(_part_data(p).shape[1:]) for p in self.parts]

    def total_size(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes)

    def to_flat(self) -> np.ndarray:
        """Concatenate all parts into one (batch, total_size) array."""
        b = _part_data(self.parts[0]).shape[0]
        return np.concatenate([_part_data(p).reshape(b, -1) for p in self.parts], axis=1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, shapes: list) -> "LatentCode":
        total = sum(int(np.prod(s)) for s in shapes)
        if flat.ndim != 2 or flat.shape[1] != total:
            raise ValueError(f"flat latent must be (batch, {total}), got shape {flat.shape}")
        parts = []
        start = 0
        for s in shapes:
            n = int(np.prod(s))
            parts.append(flat[:, start : start + n].reshape(flat.shape[0], *s))
            start += n
        return cls(parts=parts, shapes=[tuple(s) for s in shapes])


def _part_data(part) -> np.ndarray:
    return part.data if isinstance(part, Tensor) else np.asarray(part, dtype=np.float64)


class FlowStep:
    """One actnorm -> invertible 1x1 conv -> affine coupling unit."""

    def __init__(
        self,
        name: str,
        channels: int,
        filters: int,
        seed: int,
        *,
        attention: bool,
        heads: int,
        identity_init: bool,
    ):
        self.name = name
        self.actnorm = ActNorm(f"{name}/actnorm", channels, identity_init=identity_init)
        self.invconv = InvConv1x1(
            f"{name}/invconv",
            channels,
            make_rng(seed, name, "invconv"),
            identity_init=identity_init,
        )
        half = channels // 2
        net_rng = make_rng(seed, name, "net")
        if attention:
            net = AttentionStack(f"{name}/coupling/net", half, channels, filters, net_rng, heads)
        else:
            net = ConvStack(f"{name}/coupling/net", half, channels, filters, net_rng)
        self.coupling = AffineCoupling(f"{name}/coupling", channels, net)

    def parameters(self) -> list[Parameter]:
        return self.actnorm.parameters() + self.invconv.parameters() + self.coupling.parameters()

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        y, ld0 = self.actnorm.forward(x)
        y, ld1 = self.invconv.forward(y)
        y, ld2 = self.coupling.forward(y)
        return y, ld0 + ld1 + ld2

    def inverse(self, y: np.ndarray) -> np.ndarray:
        return self.actnorm.inverse(self.invconv.inverse(self.coupling.inverse(y)))


class MultiScaleFlow:
    """The full bijector together with its Gaussian prior.

    Bijectivity bookkeeping guarantees the concatenated latent size equals
    the input size. ActNorm layers need a data-dependent `initialize` pass
    before the first forward unless built with identity_init=True.
    """

    def __init__(
        self,
        config: FlowConfig,
        input_shape: tuple[int, int, int],
        seed: int,
        *,
        identity_init: bool = False,
    ):
        config.validate()
        h, w, c = input_shape
        if config.squeeze:
            div = 2**config.levels
            if h % div or w % div:
                raise ValueError(
                    f"input spatial dims {h}x{w} must be divisible by {div} "
                    f"for {config.levels} levels"
                )
        self.config = config
        self.input_shape = (h, w, c)
        self.seed = seed
        self.levels: list[list[FlowStep]] = []
        self.latent_shapes: list[tuple[int, int, int]] = []

        last = config.levels - 1
        for level in range(config.levels):
            if config.squeeze:
                h, w, c = h // 2, w // 2, c * 4
            if c % 2:
                raise ValueError(f"level {level} would run couplings on odd channel count {c}")
            attend = (config.attention == "last" and level == last) or (
                config.attention == "last-two" and level >= last - 1
            )
            steps = [
                FlowStep(
                    f"level{level}/step{i}",
                    c,
                    config.filters,
                    seed,
                    attention=attend,
                    heads=config.attention_heads,
                    identity_init=identity_init,
                )
                for i in range(config.steps_per_level)
            ]
            self.levels.append(steps)
            if level < last:
                self.latent_shapes.append((h, w, c - c // 2))
                c = c // 2
            else:
                self.latent_shapes.append((h, w, c))
        assert sum(int(np.prod(s)) for s in self.latent_shapes) == int(np.prod(self.input_shape))

    def parameters(self) -> list[Parameter]:
        return [p for steps in self.levels for step in steps for p in step.parameters()]

    @property
    def initialized(self) -> bool:
        return all(step.actnorm.initialized for steps in self.levels for step in steps)

    def initialize(self, batch: np.ndarray) -> None:
        """Data-dependent init of every actnorm, each on the activations
        that actually reach it."""
        out = np.asarray(batch, dtype=np.float64)
        self._check_input_shape(out.shape)
        for level, steps in enumerate(self.levels):
            if self.config.squeeze:
                out = squeeze_array(out)
            for step in steps:
                step.actnorm.initialize(out)
                y, _ = step.forward(Tensor(out))
                out = y.data
            if level < len(self.levels) - 1:
                out = out[..., : out.shape[3] // 2]

    def _check_input_shape(self, shape) -> None:
        if len(shape) != 4 or tuple(shape[1:]) != self.input_shape:
            raise ValueError(f"expected BHWC input shaped (*, {self.input_shape}), got {tuple(shape)}")

    def forward(self, x: Tensor) -> tuple[LatentCode, Tensor]:
        """Map data to latent parts; total logdet is the sum over layers."""
        self._check_input_shape(x.shape)
        out = x
        total = Tensor(np.zeros(x.shape[0]))
        parts = []
        for level, steps in enumerate(self.levels):
            if self.config.squeeze:
                out = squeeze(out)
            for step in steps:
                out, ld = step.forward(out)
                total = total + ld
            if level < len(self.levels) - 1:
                out, emitted = factor_out(out)
                parts.append(emitted)
        parts.append(out)
        return LatentCode(parts=parts, shapes=list(self.latent_shapes)), total

    def inverse(self, latent: LatentCode) -> np.ndarray:
        """Map a latent code back to data space; exact inverse of forward."""
        if len(latent.parts) != len(self.latent_shapes):
            raise ValueError(
                f"latent has {len(latent.parts)} parts, model expects {len(self.latent_shapes)}"
            )
        parts = [_part_data(p) for p in latent.parts]
        for part, shape in zip(parts, self.latent_shapes):
            if tuple(part.shape[1:]) != shape:
                raise ValueError(f"latent part shaped {part.shape[1:]} does not match model {shape}")
        out = parts[-1]
        for level in range(len(self.levels) - 1, -1, -1):
            if level < len(self.levels) - 1:
                out = merge(out, parts[level])
            for step in reversed(self.levels[level]):
                out = step.inverse(out)
            if self.config.squeeze:
                out = unsqueeze_array(out)
        return out

    def log_prob(self, x: Tensor) -> Tensor:
        """Per-item log-density: Gaussian prior over every latent part plus
        the total log-determinant."""
        latent, logdet = self.forward(x)
        lp = logdet
        for part in latent.parts:
            m = int(np.prod(part.shape[1:]))
            sq = (part * part).sum(axis=tuple(range(1, part.ndim)))
            lp = lp + sq * -0.5 + (-0.5 * m * LOG_TWO_PI)
        return lp

    def sample(self, n: int, rng: np.random.Generator, temperature: float = 1.0) -> np.ndarray:
        """Draw n samples by inverting Gaussian latents; temperature scales
        the prior (0 collapses every draw to the decoded origin)."""
        if temperature < 0:
            raise ValueError(f"temperature must be non-negative, got {temperature}")
        parts = [rng.normal(scale=temperature, size=(n, *s)) for s in self.latent_shapes]
        return self.inverse(LatentCode(parts=parts, shapes=list(self.latent_shapes)))
