"""Neural-network operations on the autodiff tensors.

Layout conventions: images are BHWC, sequences are (batch, position,
channel). Convolutions are stride-1 with 1x1 or 3x3 kernels, matching
what the flow and the baseline classifier need.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor

__all__ = [
    "conv2d",
    "layer_norm",
    "logabsdet",
    "softmax",
    "log_softmax",
    "multi_head_self_attention",
    "avg_pool2x2",
]


def conv2d(x: Tensor, filters: Tensor, bias: Tensor | None = None, *, same_padding: bool = True) -> Tensor:
    """2-D convolution over a BHWC tensor.

    `filters` has shape (kh, kw, c_in, c_out). This is mathematical
    convolution (kernel spatially flipped), so a unit impulse reproduces the
    kernel itself. With same-padding the output keeps the input's spatial
    extent; without it the output shrinks by (kh - 1, kw - 1).
    """
    if x.ndim != 4:
        raise ValueError(f"conv2d expects a BHWC input, got shape {x.shape}")
    if filters.ndim != 4:
        raise ValueError(f"conv2d expects (kh, kw, c_in, c_out) filters, got shape {filters.shape}")
    b, h, w, c = x.shape
    kh, kw, cin, cout = filters.shape
    if kh not in (1, 3) or kw not in (1, 3):
        raise ValueError(f"unsupported kernel size {kh}x{kw}; only 1 and 3 are supported")
    if cin != c:
        raise ValueError(
            f"channel mismatch: input shape {x.shape} has {c} channels, "
            f"filters shape {filters.shape} expect {cin}"
        )

    ph, pw = (kh // 2, kw // 2) if same_padding else (0, 0)
    oh, ow = (h, w) if same_padding else (h - kh + 1, w - kw + 1)
    if oh <= 0 or ow <= 0:
        raise ValueError(f"kernel {kh}x{kw} does not fit input shape {x.shape} without padding")

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if (ph or pw) else x.data
    cols = np.empty((b, oh, ow, kh * kw * c), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            k = u * kw + v
            cols[..., k * c : (k + 1) * c] = xp[:, u : u + oh, v : v + ow, :]
    # flipping the kernel turns the im2col cross-correlation into convolution
    wflip = filters.data[::-1, ::-1, :, :].reshape(kh * kw * c, cout)
    out_data = cols.reshape(-1, kh * kw * c) @ wflip
    out_data = out_data.reshape(b, oh, ow, cout)
    if bias is not None:
        out_data = out_data + bias.data

    parents = (x, filters) if bias is None else (x, filters, bias)
    out = Tensor(out_data, parents, "conv2d")

    def bwd(g):
        gm = g.reshape(-1, cout)
        cols2d = cols.reshape(-1, kh * kw * c)
        dwflip = (cols2d.T @ gm).reshape(kh, kw, c, cout)
        filters._accum(dwflip[::-1, ::-1, :, :])
        dcols = (gm @ wflip.T).reshape(b, oh, ow, kh * kw * c)
        dxp = np.zeros((b, h + 2 * ph, w + 2 * pw, c), dtype=np.float64)
        for u in range(kh):
            for v in range(kw):
                k = u * kw + v
                dxp[:, u : u + oh, v : v + ow, :] += dcols[..., k * c : (k + 1) * c]
        x._accum(dxp[:, ph : ph + h, pw : pw + w, :] if (ph or pw) else dxp)
        if bias is not None:
            bias._accum(g.sum(axis=(0, 1, 2)).reshape(bias.data.shape))

    out._backward = bwd
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the channel (last) axis to zero mean / unit variance, then
    apply learnable gain and bias."""
    if x.shape[-1] == 0:
        raise ValueError("layer_norm: channel axis has zero size")
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = (var + eps).pow(-0.5)
    return centered * inv * gain + bias


def logabsdet(w: Tensor) -> Tensor:
    """log|det W| of a square matrix; the gradient is inv(W) transposed."""
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"logabsdet expects a square matrix, got shape {w.shape}")
    sign, lad = np.linalg.slogdet(w.data)
    if sign == 0.0:
        raise ArithmeticError("logabsdet: singular matrix")
    out = Tensor(np.asarray(lad), (w,), "logabsdet")
    winv_t = np.linalg.inv(w.data).T

    def bwd(g):
        w._accum(g * winv_t)

    out._backward = bwd
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    # shift by a constant for stability; softmax is shift invariant so the
    # gradient through the detached max is exact
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    e = (x - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    centered = x - shift
    return centered - centered.exp().sum(axis=axis, keepdims=True).log()


def multi_head_self_attention(
    x: Tensor,
    heads: int,
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
    return_weights: bool = False,
):
    """Scaled dot-product self-attention over a (batch, position, channel)
    tensor, with `heads` parallel heads concatenated and output-projected.

    No positional information is added; positions interact only through
    content. Projections are bias-free D->D matrices.
    """
    if x.ndim != 3:
        raise ValueError(f"attention expects (batch, positions, channels), got shape {x.shape}")
    b, t, d = x.shape
    if d % heads != 0:
        raise ValueError(f"channel count {d} is not divisible by {heads} heads")
    dh = d // heads

    def heads_split(m: Tensor) -> Tensor:
        return m.reshape(b, t, heads, dh).transpose((0, 2, 1, 3))

    q = heads_split(x @ wq)
    k = heads_split(x @ wk)
    v = heads_split(x @ wv)
    logits = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    att = softmax(logits, axis=-1)
    ctx = (att @ v).transpose((0, 2, 1, 3)).reshape(b, t, d)
    out = ctx @ wo
    if return_weights:
        return out, att.data.copy()
    return out


def avg_pool2x2(x: Tensor) -> Tensor:
    """2x2 average pooling on a BHWC tensor with even spatial dims."""
    b, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2x2 needs even spatial dims, got {x.shape}")
    r = x.reshape(b, h // 2, 2, w // 2, 2, c)
    return r.mean(axis=(2, 4))
