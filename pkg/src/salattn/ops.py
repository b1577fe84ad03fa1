"""Neural-net operations on (h, w, c) feature maps.

Convolutions use odd kernels with symmetric zero padding of (k-1)//2 per
side, so spatial extent maps as ceil(h/stride) for the strides used here.
Forward passes are im2col plus one matmul; backward scatters columns back.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, _trace

BCE_EPS = 1e-7


class EmptyRegionError(ValueError):
    """A pooling region contains no pixels."""


def softmax_rows(m: Tensor) -> Tensor:
    """Row-wise softmax of a rank-2 tensor, max-shifted per row."""
    if m.rank != 2:
        raise ShapeError(f"softmax_rows needs rank 2, got {m.shape}")
    d = m.data
    e = np.exp(d - d.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        # ds_ij = s_ij * (g_ij - sum_k g_ik s_ik)
        inner = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - inner),)

    return _trace(s, (m,), backward)


def _conv_geometry(h: int, w: int, kh: int, kw: int, stride: int):
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv kernel extents must be odd, got {kh}x{kw}")
    if stride < 1:
        raise ShapeError(f"stride must be positive, got {stride}")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    oh = (h + 2 * ph - kh) // stride + 1
    ow = (w + 2 * pw - kw) // stride + 1
    return ph, pw, oh, ow


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """(hp, wp, c) padded input -> (oh*ow, kh*kw*c) patch matrix."""
    c = xp.shape[2]
    cols = np.empty((oh, ow, kh, kw, c), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j, :] = xp[i:i + oh * stride:stride, j:j + ow * stride:stride, :]
    return cols.reshape(oh * ow, kh * kw * c)


def _col2im(dcols: np.ndarray, hp: int, wp: int, c: int, kh: int, kw: int,
            stride: int, oh: int, ow: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back to the padded input."""
    dxp = np.zeros((hp, wp, c), dtype=np.float64)
    d = dcols.reshape(oh, ow, kh, kw, c)
    for i in range(kh):
        for j in range(kw):
            dxp[i:i + oh * stride:stride, j:j + ow * stride:stride, :] += d[:, :, i, j, :]
    return dxp


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """2-D convolution (cross-correlation), (h,w,cin) -> (oh,ow,cout).

    kernel is (kh, kw, cin, cout); bias, when given, is (cout,) added per
    output channel.
    """
    if x.rank != 3 or kernel.rank != 4:
        raise ShapeError(f"conv2d: need (h,w,c) input and rank-4 kernel, got {x.shape}, {kernel.shape}")
    h, w, cin = x.shape
    kh, kw, kcin, cout = kernel.shape
    if kcin != cin:
        raise ShapeError(f"conv2d: kernel expects {kcin} input channels, input has {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {cout} output channels")
    ph, pw, oh, ow = _conv_geometry(h, w, kh, kw, stride)

    xp = np.pad(x.data, ((ph, ph), (pw, pw), (0, 0)))
    hp, wp = xp.shape[0], xp.shape[1]
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    wmat = kernel.data.reshape(kh * kw * cin, cout)
    out_flat = cols @ wmat
    if bias is not None:
        out_flat = out_flat + bias.data
    out = out_flat.reshape(oh, ow, cout)

    inputs = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(g):
        gf = g.reshape(oh * ow, cout)
        dw = (cols.T @ gf).reshape(kh, kw, cin, cout)
        dcols = gf @ wmat.T
        dxp = _col2im(dcols, hp, wp, cin, kh, kw, stride, oh, ow)
        dx = dxp[ph:hp - ph, pw:wp - pw, :] if (ph or pw) else dxp
        if bias is None:
            return (dx, dw)
        return (dx, dw, gf.sum(axis=0))

    return _trace(out, inputs, backward)


def depthwise_conv2d(x: Tensor, filters: Tensor) -> Tensor:
    """Per-channel 3x3 convolution at stride 1, no bias.

    filters is (3, 3, c): one spatial filter per input channel, applied to
    that channel only.
    """
    if x.rank != 3 or filters.rank != 3:
        raise ShapeError(f"depthwise_conv2d: got {x.shape}, {filters.shape}")
    h, w, c = x.shape
    kh, kw, fc = filters.shape
    if fc != c:
        raise ShapeError(f"depthwise_conv2d: {fc} filters for {c} channels")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"depthwise kernel extents must be odd, got {kh}x{kw}")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2

    xp = np.pad(x.data, ((ph, ph), (pw, pw), (0, 0)))
    fd = filters.data
    out = np.zeros((h, w, c), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out += xp[i:i + h, j:j + w, :] * fd[i, j, :]

    def backward(g):
        df = np.empty((kh, kw, c), dtype=np.float64)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                df[i, j, :] = (xp[i:i + h, j:j + w, :] * g).sum(axis=(0, 1))
                dxp[i:i + h, j:j + w, :] += g * fd[i, j, :]
        dx = dxp[ph:ph + h, pw:pw + w, :] if (ph or pw) else dxp
        return (dx, df)

    return _trace(out, (x, filters), backward)


def mean_hw(x: Tensor) -> Tensor:
    """Mean over the spatial axes, (h,w,c) -> (c,)."""
    if x.rank != 3:
        raise ShapeError(f"mean_hw needs rank 3, got {x.shape}")
    h, w, _ = x.shape
    n = h * w

    def backward(g):
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _trace(x.data.mean(axis=(0, 1)), (x,), backward)


def masked_avg_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Average of x over pixels where mask is nonzero, (h,w,c) -> (c,).

    The mask is a constant (no gradient flows into it). An all-zero mask is
    an empty region and is rejected.
    """
    if x.rank != 3:
        raise ShapeError(f"masked_avg_pool needs rank 3, got {x.shape}")
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != x.shape[:2]:
        raise ShapeError(f"mask shape {m.shape} does not match spatial {x.shape[:2]}")
    total = float(m.sum())
    if total == 0.0:
        raise EmptyRegionError("masked_avg_pool: mask selects no pixels")
    out = (x.data * m[:, :, None]).sum(axis=(0, 1)) / total

    def backward(g):
        return (m[:, :, None] * (g / total),)

    return _trace(out, (x,), backward)


def _up2_axis_indices(n: int):
    """Half-pixel-center source indices and weights for 2x upsampling."""
    src = (np.arange(2 * n, dtype=np.float64) + 0.5) / 2.0 - 0.5
    src = np.clip(src, 0.0, n - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i0 = np.minimum(i0, max(n - 2, 0))
    t = src - i0
    if n == 1:
        t = np.zeros_like(t)
    return i0, i0 + (1 if n > 1 else 0), 1.0 - t, t


def bilinear_upsample_x2(x: Tensor) -> Tensor:
    """Bilinear 2x upsampling with half-pixel centers, (h,w,c) -> (2h,2w,c).

    Edge samples clamp to the border, so constant maps stay constant.
    """
    if x.rank != 3:
        raise ShapeError(f"bilinear_upsample_x2 needs rank 3, got {x.shape}")
    h, w, c = x.shape
    i0, i1, wy0, wy1 = _up2_axis_indices(h)
    j0, j1, wx0, wx1 = _up2_axis_indices(w)
    d = x.data
    # Rows first, then columns (bilinear is separable).
    rows = wy0[:, None, None] * d[i0] + wy1[:, None, None] * d[i1]       # (2h, w, c)
    out = wx0[None, :, None] * rows[:, j0] + wx1[None, :, None] * rows[:, j1]

    def backward(g):
        drows = np.zeros((2 * h, w, c), dtype=np.float64)
        np.add.at(drows, (slice(None), j0), wx0[None, :, None] * g)
        np.add.at(drows, (slice(None), j1), wx1[None, :, None] * g)
        dx = np.zeros((h, w, c), dtype=np.float64)
        np.add.at(dx, i0, wy0[:, None, None] * drows)
        np.add.at(dx, i1, wy1[:, None, None] * drows)
        return (dx,)

    return _trace(out, (x,), backward)


def bce_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over all pixels.

    Predictions are clamped to [eps, 1-eps] before the logs; clamped pixels
    get zero gradient. Targets are a constant array in [0, 1].
    """
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ShapeError(f"bce_loss: target shape {t.shape} vs prediction {pred.shape}")
    n = t.size
    p = pred.data
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    loss = float(np.mean(-t * np.log(pc) - (1.0 - t) * np.log1p(-pc)))
    inside = (p > BCE_EPS) & (p < 1.0 - BCE_EPS)

    def backward(g):
        dp = np.where(inside, (pc - t) / (pc * (1.0 - pc)), 0.0)
        return (float(g) * dp / n,)

    return _trace(np.asarray(loss), (pred,), backward)
