"""Dense array kernels every other module builds on.

Tensors are plain numpy arrays (row-major, C order). The functions here add
the contract checks the rest of the code relies on: shapes are validated up
front and NaN/Inf inputs are refused with NonFiniteError instead of being
propagated silently.

conv2d uses the cross-correlation convention (the kernel is not flipped),
as neural-network convolutions do. box_filter is valid-mode and
unnormalized: each output is the raw sum of its window.
"""

from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.config.settings import get_settings
from src.errors import NonFiniteError, ShapeError

Tensor = np.ndarray

ReduceMode = Literal["sum", "mean", "max", "argmax"]


def default_dtype() -> np.dtype:
    return get_settings().dtype


def as_tensor(values, dtype: np.dtype | None = None) -> Tensor:
    """Contiguous real array in the configured precision."""
    return np.ascontiguousarray(values, dtype=default_dtype() if dtype is None else dtype)


def ensure_finite(*arrays: Tensor, what: str = "tensor") -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{what} contains NaN or Inf")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a (m×k) and b (k×n)."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} · {b.shape}")
    ensure_finite(a, b, what="matmul operand")
    return np.matmul(a, b)


def conv2d(input: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation with zero padding.

    input is C_in×H×W (or batched B×C_in×H×W), kernel is C_out×C_in×kh×kw.
    Output extents are floor((H + 2·pad − kh) / stride) + 1, likewise W.
    """
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if pad < 0:
        raise ShapeError(f"pad must be >= 0, got {pad}")
    if kernel.ndim != 4:
        raise ShapeError(f"kernel must be C_out×C_in×kh×kw, got {kernel.shape}")

    batched = input.ndim == 4
    if not batched:
        if input.ndim != 3:
            raise ShapeError(f"input must be C×H×W or B×C×H×W, got {input.shape}")
        input = input[np.newaxis]

    _, c_in, h, w = input.shape
    c_out, k_in, kh, kw = kernel.shape
    if k_in != c_in:
        raise ShapeError(f"kernel expects {k_in} input channels, input has {c_in}")
    if kh < 1 or kw < 1 or h + 2 * pad < kh or w + 2 * pad < kw:
        raise ShapeError(f"kernel {kh}×{kw} does not fit padded input {h}×{w} (pad {pad})")
    ensure_finite(input, kernel, what="conv2d operand")

    if pad:
        input = np.pad(input, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(input, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (B, C, H', W', kh, kw) · (O, C, kh, kw) -> (B, H', W', O)
    out = np.tensordot(windows, kernel, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(np.moveaxis(out, 3, 1))
    return out if batched else out[0]


def box_filter(img: Tensor, window_h: int, window_w: int) -> Tensor:
    """Sum over every window_h×window_w window of the last two axes.

    Valid mode: output extents are H − window_h + 1 and W − window_w + 1.
    Computed with running sums along each axis, O(HW) regardless of window.
    """
    if img.ndim < 2:
        raise ShapeError(f"box_filter needs at least 2 axes, got {img.shape}")
    h, w = img.shape[-2:]
    if window_h < 1 or window_w < 1:
        raise ShapeError(f"window must be at least 1×1, got {window_h}×{window_w}")
    if window_h > h or window_w > w:
        raise ShapeError(f"window {window_h}×{window_w} larger than image {h}×{w}")
    ensure_finite(img, what="box_filter input")

    pad = [(0, 0)] * (img.ndim - 2)
    rows = np.cumsum(np.pad(img, pad + [(1, 0), (0, 0)]), axis=-2)
    rows = rows[..., window_h:, :] - rows[..., :-window_h, :]
    cols = np.cumsum(np.pad(rows, pad + [(0, 0), (1, 0)]), axis=-1)
    return cols[..., window_w:] - cols[..., :-window_w]


def reduce(t: Tensor, axis: int | None, mode: ReduceMode) -> Tensor:
    """Reduce one axis (or everything, axis=None); argmax ties go to the lowest index."""
    if axis is not None:
        if not -t.ndim <= axis < t.ndim:
            raise ShapeError(f"axis {axis} out of range for {t.ndim}-d tensor")
        if t.shape[axis] == 0:
            raise ShapeError(f"cannot reduce empty axis {axis}")
    elif t.size == 0:
        raise ShapeError("cannot reduce an empty tensor")

    if mode == "sum":
        return np.sum(t, axis=axis)
    if mode == "mean":
        return np.mean(t, axis=axis)
    if mode == "max":
        return np.max(t, axis=axis)
    if mode == "argmax":
        return np.argmax(t, axis=axis)
    raise ValueError(f"Unknown reduce mode: {mode}")
