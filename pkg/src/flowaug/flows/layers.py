"""Invertible building blocks of the flow.

Every layer exposes three things: `forward(x) -> (y, logdet)` where both
outputs are autodiff tensors and `logdet` is shaped (batch,), `inverse(y)`
on plain arrays for the sampling path, and `parameters()`. Inputs are BHWC.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from ..core import (
    Parameter,
    Tensor,
    concat,
    conv2d,
    layer_norm,
    logabsdet,
    multi_head_self_attention,
    narrow,
)

# softplus(-2) == -log(sigmoid(2)); see _squash_scale
_SOFTPLUS_NEG2 = float(np.log1p(np.exp(-2.0)))

_DET_FLOOR = 1e-12


def _squash_scale(raw: Tensor) -> Tensor:
    """Bound the coupling log-scale: s = log(sigmoid(raw + 2) / sigmoid(2)).

    A raw output of 0 maps to exactly s = 0 (the two softplus terms cancel
    bit-for-bit), so a zero-initialized subnetwork yields an exact identity.
    exp(s) stays in (0, 1/sigmoid(2) ~ 1.135), keeping training stable.
    """
    return _SOFTPLUS_NEG2 - (-(raw + 2.0)).softplus()


def _squash_scale_np(raw: np.ndarray) -> np.ndarray:
    """Array twin of _squash_scale, kept bit-identical for exact inverses."""
    z = -(raw + 2.0)
    softplus = np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)
    return _SOFTPLUS_NEG2 - softplus


def couple(x2: Tensor, s: Tensor, t: Tensor) -> tuple[Tensor, Tensor]:
    """y2 = x2 * exp(s) + t; per-item logdet is the sum of s over the
    transformed elements (the Jacobian is triangular with diag exp(s))."""
    y2 = x2 * s.exp() + t
    logdet = s.sum(axis=tuple(range(1, s.ndim)))
    return y2, logdet


def uncouple(y2: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Exact inverse of couple: x2 = (y2 - t) * exp(-s)."""
    return (y2 - t) * np.exp(-s)


def _he_filters(rng: np.random.Generator, kh: int, kw: int, c_in: int, c_out: int) -> np.ndarray:
    return rng.normal(scale=math.sqrt(2.0 / (kh * kw * c_in)), size=(kh, kw, c_in, c_out))


class ActNorm:
    """Per-channel affine y = s * x + b with data-dependent initialization.

    The scale is stored as log(s), which keeps s above zero throughout
    training and makes the log-determinant h * w * sum(log_scale).
    """

    def __init__(self, name: str, channels: int, *, identity_init: bool = False):
        self.name = name
        self.channels = channels
        self.log_scale = Parameter(f"{name}/log_scale", np.zeros(channels))
        self.bias = Parameter(f"{name}/bias", np.zeros(channels))
        self.initialized = identity_init

    def parameters(self) -> list[Parameter]:
        return [self.log_scale, self.bias]

    def initialize(self, batch: np.ndarray) -> None:
        """Set s and b so this batch comes out per-channel zero mean, unit
        variance. Constant channels get an epsilon floor and a warning."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 4 or batch.shape[3] != self.channels:
            raise ValueError(
                f"{self.name}: init batch must be BHWC with {self.channels} channels, "
                f"got shape {batch.shape}"
            )
        if batch.shape[0] < 2:
            raise ValueError(f"{self.name}: data-dependent init needs at least 2 samples")
        mean = batch.mean(axis=(0, 1, 2))
        std = batch.std(axis=(0, 1, 2))
        degenerate = std == 0.0
        if degenerate.any():
            warnings.warn(
                f"{self.name}: zero-variance channel(s) "
                f"{np.flatnonzero(degenerate).tolist()}; adding epsilon 1e-6"
            )
            std = std + degenerate * 1e-6
        self.log_scale.data = -np.log(std)
        self.bias.data = -mean / std
        self.initialized = True

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if not self.initialized:
            raise RuntimeError(f"{self.name}: forward pass before data-dependent initialization")
        b, h, w, _ = x.shape
        y = x * self.log_scale.exp() + self.bias
        logdet = self.log_scale.sum() * float(h * w) * Tensor(np.ones(b))
        return y, logdet

    def inverse(self, y: np.ndarray) -> np.ndarray:
        if not self.initialized:
            raise RuntimeError(f"{self.name}: inverse pass before data-dependent initialization")
        return (y - self.bias.data) * np.exp(-self.log_scale.data)


class InvConv1x1:
    """Channel mixing by an invertible c x c matrix at every position.

    W starts as a random rotation (det +1, so the initial log-det is zero) and
    is optimized as a dense matrix; each pass checks it stays non-singular.
    """

    def __init__(
        self,
        name: str,
        channels: int,
        rng: np.random.Generator | None = None,
        *,
        identity_init: bool = False,
    ):
        self.name = name
        self.channels = channels
        if identity_init or rng is None:
            w = np.eye(channels)
        else:
            q, r = np.linalg.qr(rng.normal(size=(channels, channels)))
            q = q * np.sign(np.diag(r))
            if np.linalg.det(q) < 0:
                q[:, 0] = -q[:, 0]
            w = q
        self.weight = Parameter(f"{name}/weight", w)

    def parameters(self) -> list[Parameter]:
        return [self.weight]

    def _check_invertible(self) -> None:
        sign, lad = np.linalg.slogdet(self.weight.data)
        if sign == 0.0 or lad < math.log(_DET_FLOOR):
            raise ArithmeticError(
                f"{self.name}: weight matrix is numerically singular (|det| <= {_DET_FLOOR})"
            )

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        self._check_invertible()
        b, h, w, c = x.shape
        if c != self.channels:
            raise ValueError(f"{self.name}: expected {self.channels} channels, got shape {x.shape}")
        y = x @ self.weight
        logdet = logabsdet(self.weight) * float(h * w) * Tensor(np.ones(b))
        return y, logdet

    def inverse(self, y: np.ndarray) -> np.ndarray:
        self._check_invertible()
        return y @ np.linalg.inv(self.weight.data)


class ConvStack:
    """Convolutional coupling conditioner: 3x3 -> 1x1 -> layer norm -> 3x3,
    ReLU on the two hidden layers, last convolution zero-initialized so the
    enclosing coupling starts as the identity."""

    def __init__(self, name: str, c_in: int, c_out: int, filters: int, rng: np.random.Generator):
        self.name = name
        self.w0 = Parameter(f"{name}/conv0/weight", _he_filters(rng, 3, 3, c_in, filters))
        self.b0 = Parameter(f"{name}/conv0/bias", np.zeros(filters))
        self.w1 = Parameter(f"{name}/conv1/weight", _he_filters(rng, 1, 1, filters, filters))
        self.b1 = Parameter(f"{name}/conv1/bias", np.zeros(filters))
        self.norm_gain = Parameter(f"{name}/norm/gain", np.ones(filters))
        self.norm_bias = Parameter(f"{name}/norm/bias", np.zeros(filters))
        self.w2 = Parameter(f"{name}/conv2/weight", np.zeros((3, 3, filters, c_out)))
        self.b2 = Parameter(f"{name}/conv2/bias", np.zeros(c_out))

    def parameters(self) -> list[Parameter]:
        return [self.w0, self.b0, self.w1, self.b1, self.norm_gain, self.norm_bias, self.w2, self.b2]

    def __call__(self, x: Tensor) -> Tensor:
        h = conv2d(x, self.w0, self.b0).relu()
        h = conv2d(h, self.w1, self.b1).relu()
        h = layer_norm(h, self.norm_gain, self.norm_bias)
        return conv2d(h, self.w2, self.b2)


class AttentionStack:
    """Self-attention coupling conditioner for the coarsest level(s):
    content-only multi-head attention over row-major flattened positions
    (no positional encoding), layer norm, a 3x3 ReLU convolution, and a
    zero-initialized 3x3 convolution."""

    def __init__(
        self,
        name: str,
        c_in: int,
        c_out: int,
        filters: int,
        rng: np.random.Generator,
        heads: int = 4,
    ):
        if c_in % heads:
            raise ValueError(
                f"{name}: {c_in} conditioner channels not divisible by {heads} attention heads; "
                "use more levels or a convolutional conditioner"
            )
        self.name = name
        self.heads = heads
        scale = 1.0 / math.sqrt(c_in)
        self.wq = Parameter(f"{name}/attn/wq", rng.normal(scale=scale, size=(c_in, c_in)))
        self.wk = Parameter(f"{name}/attn/wk", rng.normal(scale=scale, size=(c_in, c_in)))
        self.wv = Parameter(f"{name}/attn/wv", rng.normal(scale=scale, size=(c_in, c_in)))
        self.wo = Parameter(f"{name}/attn/wo", rng.normal(scale=scale, size=(c_in, c_in)))
        self.norm_gain = Parameter(f"{name}/norm/gain", np.ones(c_in))
        self.norm_bias = Parameter(f"{name}/norm/bias", np.zeros(c_in))
        self.w0 = Parameter(f"{name}/conv0/weight", _he_filters(rng, 3, 3, c_in, filters))
        self.b0 = Parameter(f"{name}/conv0/bias", np.zeros(filters))
        self.w1 = Parameter(f"{name}/conv1/weight", np.zeros((3, 3, filters, c_out)))
        self.b1 = Parameter(f"{name}/conv1/bias", np.zeros(c_out))

    def parameters(self) -> list[Parameter]:
        return [
            self.wq, self.wk, self.wv, self.wo,
            self.norm_gain, self.norm_bias,
            self.w0, self.b0, self.w1, self.b1,
        ]

    def __call__(self, x: Tensor) -> Tensor:
        b, h, w, c = x.shape
        seq = x.reshape(b, h * w, c)
        attended = multi_head_self_attention(seq, self.heads, self.wq, self.wk, self.wv, self.wo)
        attended = layer_norm(attended, self.norm_gain, self.norm_bias)
        img = attended.reshape(b, h, w, c)
        hidden = conv2d(img, self.w0, self.b0).relu()
        return conv2d(hidden, self.w1, self.b1)


class AffineCoupling:
    """Affine coupling: the first half of the channels passes through
    untouched and conditions a per-element affine transform of the second
    half. Freshly constructed (zero-init conditioner) it is the identity
    with exactly zero log-det."""

    def __init__(self, name: str, channels: int, net):
        if channels % 2:
            raise ValueError(f"{name}: coupling needs an even channel count, got {channels}")
        self.name = name
        self.channels = channels
        self.half = channels // 2
        self.net = net

    def parameters(self) -> list[Parameter]:
        return self.net.parameters()

    def _conditioner(self, x1: Tensor) -> tuple[Tensor, Tensor]:
        try:
            raw = self.net(x1)
        except ArithmeticError as exc:
            raise ArithmeticError(f"{self.name}/net produced a non-finite value: {exc}") from exc
        s = _squash_scale(narrow(raw, 3, 0, self.half))
        t = narrow(raw, 3, self.half, self.half)
        return s, t

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[3] != self.channels:
            raise ValueError(f"{self.name}: expected {self.channels} channels, got shape {x.shape}")
        x1 = narrow(x, 3, 0, self.half)
        x2 = narrow(x, 3, self.half, self.half)
        s, t = self._conditioner(x1)
        y2, logdet = couple(x2, s, t)
        return concat([x1, y2], axis=3), logdet

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y1 = y[..., : self.half]
        y2 = y[..., self.half :]
        s, t = self._conditioner(Tensor(y1))
        x2 = uncouple(y2, s.data, t.data)
        return np.concatenate([y1, x2], axis=3)


def squeeze(x: Tensor) -> Tensor:
    """Trade space for channels: every 2x2xC patch becomes 1x1x4C. Output
    channel k*C + c holds sub-pixel k of channel c, k ordered (top-left,
    top-right, bottom-left, bottom-right). Pure rearrangement, log-det 0."""
    b, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"squeeze needs even spatial dims, got shape {x.shape}")
    r = x.reshape(b, h // 2, 2, w // 2, 2, c)
    return r.transpose((0, 1, 3, 2, 4, 5)).reshape(b, h // 2, w // 2, 4 * c)


def unsqueeze(y: Tensor) -> Tensor:
    """Exact inverse of squeeze."""
    b, h, w, c4 = y.shape
    if c4 % 4:
        raise ValueError(f"unsqueeze needs channels divisible by 4, got shape {y.shape}")
    r = y.reshape(b, h, w, 2, 2, c4 // 4)
    return r.transpose((0, 1, 3, 2, 4, 5)).reshape(b, 2 * h, 2 * w, c4 // 4)


def squeeze_array(x: np.ndarray) -> np.ndarray:
    b, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"squeeze needs even spatial dims, got shape {x.shape}")
    r = x.reshape(b, h // 2, 2, w // 2, 2, c)
    return r.transpose(0, 1, 3, 2, 4, 5).reshape(b, h // 2, w // 2, 4 * c)


def unsqueeze_array(y: np.ndarray) -> np.ndarray:
    b, h, w, c4 = y.shape
    if c4 % 4:
        raise ValueError(f"unsqueeze needs channels divisible by 4, got shape {y.shape}")
    r = y.reshape(b, h, w, 2, 2, c4 // 4)
    return r.transpose(0, 1, 3, 2, 4, 5).reshape(b, 2 * h, 2 * w, c4 // 4)


def factor_out(x: Tensor) -> tuple[Tensor, Tensor]:
    """Split channels in half: (kept, emitted) = (first half, second half).
    The emitted half leaves the flow and is scored against the Gaussian
    prior. Pure split, log-det 0; the ordering is a fixed convention."""
    c = x.shape[3]
    if c % 2:
        raise ValueError(f"factor_out needs an even channel count, got shape {x.shape}")
    return narrow(x, 3, 0, c // 2), narrow(x, 3, c // 2, c // 2)


def merge(kept: np.ndarray, emitted: np.ndarray) -> np.ndarray:
    """Exact inverse of factor_out."""
    return np.concatenate([kept, emitted], axis=3)
