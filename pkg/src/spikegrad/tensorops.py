"""Dense float64 array operations used by every layer.

All public functions validate shapes, work on plain ``numpy.ndarray`` in
row-major order, and reject non-finite results.  Convolution is implemented
as im2col + matmul so the forward and backward passes share one, easily
audited code path.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


def _as_f64(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def check_finite(x: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
    return x


def matmul(a, b) -> np.ndarray:
    """Matrix product of a[m,k] and b[k,n]."""
    a = _as_f64(a)
    b = _as_f64(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul")


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation of x[N,C,H,W] with kernel[O,C,kh,kw], zero padded.

    Output spatial size is (H + 2p - kh) / stride + 1 and must be integral.
    """
    x = _as_f64(x)
    kernel = _as_f64(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("conv2d expects x[N,C,H,W] and kernel[O,C,kh,kw]")
    n, c, h, w = x.shape
    o, ck, kh, kw = kernel.shape
    if ck != c:
        raise ShapeError(f"channel mismatch: input {c} vs kernel {ck}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError("kernel larger than padded input")
    if (h + 2 * padding - kh) % stride or (w + 2 * padding - kw) % stride:
        raise ShapeError("non-integral convolution output size")
    cols, out_hw = im2col(x, kh, kw, stride, padding)
    out = cols @ kernel.reshape(o, -1).T  # [N*H'*W', O]
    oh, ow = out_hw
    out = out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)
    return check_finite(np.ascontiguousarray(out), "conv2d")


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """Unfold x[N,C,H,W] into patch rows [N*H'*W', C*kh*kw]."""
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = x.shape[2], x.shape[3]
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, oh, ow, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), (oh, ow)


def col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Adjoint of im2col: scatter patch rows back to x's shape, summing overlaps."""
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    patches = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    xp = np.zeros((n, c, hp, wp))
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + oh * stride : stride, j : j + ow * stride : stride] += patches[:, :, :, :, i, j]
    if padding:
        xp = xp[:, :, padding:-padding, padding:-padding]
    return xp


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, kernel: np.ndarray, stride: int, padding: int):
    """Gradients of conv2d w.r.t. input and kernel given grad_out[N,O,H',W']."""
    n, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    cols, (oh, ow) = im2col(x, kh, kw, stride, padding)
    g = grad_out.transpose(0, 2, 3, 1).reshape(n * oh * ow, o)
    grad_kernel = (g.T @ cols).reshape(o, c, kh, kw)
    grad_cols = g @ kernel.reshape(o, -1)
    grad_x = col2im(grad_cols, x.shape, kh, kw, stride, padding)
    return grad_x, grad_kernel


def avgpool2(x) -> np.ndarray:
    """Mean over non-overlapping 2x2 windows of x[N,C,H,W]; H and W must be even."""
    x = _as_f64(x)
    if x.ndim != 4:
        raise ShapeError("avgpool2 expects x[N,C,H,W]")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool2 needs even spatial dims, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avgpool2_backward(grad_out: np.ndarray) -> np.ndarray:
    """Adjoint of avgpool2: spread each output gradient over its 2x2 window / 4."""
    n, c, oh, ow = grad_out.shape
    g = grad_out[:, :, :, None, :, None] / 4.0
    return np.broadcast_to(g, (n, c, oh, 2, ow, 2)).reshape(n, c, oh * 2, ow * 2).copy()
