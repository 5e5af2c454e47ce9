"""Differentiable operations over :class:`Tensor`.

Every op computes its forward value with numpy and registers a backward rule
returning one gradient per input. There is no broadcasting: binary ops require
identical shapes and constants enter as tensors of the full shape or as Python
scalars through :func:`scale` and :func:`add_scalar`.
"""

from collections.abc import Sequence

import numpy as np

from Autodiff.tensor import Tensor
from Utilities.errors import ConfigurationError, ShapeError

SUPPORTED_UPSAMPLE_FACTORS = (2, 4, 8, 16)
ELEMENTWISE_OPS = ("relu", "sigmoid", "add", "mul")


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    if a.ndim != b.ndim:
        raise ShapeError(
            f"{op}: rank {a.ndim} does not match rank {b.ndim}",
            expected=a.shape,
            actual=b.shape,
        )
    axis = next(i for i, (x, y) in enumerate(zip(a.shape, b.shape)) if x != y)
    raise ShapeError(
        f"{op}: extent {b.shape[axis]} on axis {axis} does not match {a.shape[axis]}",
        axis=axis,
        expected=a.shape[axis],
        actual=b.shape[axis],
    )


def _require_rank(t: Tensor, rank: int, op: str) -> None:
    if t.ndim != rank:
        raise ShapeError(
            f"{op}: expected a {rank}-D tensor, got shape {t.shape}",
            expected=rank,
            actual=t.ndim,
        )


# Element-wise layer


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = a.data * mask
    return Tensor.from_op(out, "relu", (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(a.dtype)
    return Tensor.from_op(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    return Tensor.from_op(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    return Tensor.from_op(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    return Tensor.from_op(
        a.data * b.data, "mul", (a, b), lambda g: (g * b.data, g * a.data)
    )


def elementwise(op: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Dispatch one of relu, sigmoid, add, mul by name."""
    if op == "relu":
        return relu(a)
    if op == "sigmoid":
        return sigmoid(a)
    if op in ("add", "mul"):
        if b is None:
            raise ShapeError(f"{op} needs a second operand")
        return add(a, b) if op == "add" else mul(a, b)
    raise ConfigurationError(f"Unknown element-wise op '{op}', expected one of {ELEMENTWISE_OPS}")


def scale(a: Tensor, factor: float) -> Tensor:
    return Tensor.from_op(a.data * factor, "scale", (a,), lambda g: (g * factor,))


def add_scalar(a: Tensor, value: float) -> Tensor:
    return Tensor.from_op(a.data + value, "add_scalar", (a,), lambda g: (g,))


def log(a: Tensor) -> Tensor:
    return Tensor.from_op(np.log(a.data), "log", (a,), lambda g: (g / a.data,))


def clip(a: Tensor, low: float, high: float) -> Tensor:
    inside = (a.data >= low) & (a.data <= high)
    out = np.clip(a.data, low, high)
    return Tensor.from_op(out, "clip", (a,), lambda g: (g * inside,))


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.dtype)
    return Tensor.from_op(
        out, "sum", (a,), lambda g: (np.full(a.shape, g, dtype=a.dtype),)
    )


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum equally shaped tensors left to right."""
    if not tensors:
        raise ShapeError("add_n needs at least one tensor")
    total = tensors[0]
    for tensor in tensors[1:]:
        total = add(total, tensor)
    return total


def softmax(a: Tensor, axis: int = 1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, "softmax", (a,), backward)


# Convolution layer


def output_extent(size: int, kernel: int, stride: int, dilation: int, padding: int) -> int:
    """floor((in + 2p - d(k - 1) - 1) / s) + 1."""
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _im2col(
    padded: np.ndarray,
    kernel_h: int,
    kernel_w: int,
    stride: int,
    dilation: int,
    out_h: int,
    out_w: int,
) -> np.ndarray:
    n, c = padded.shape[:2]
    cols = np.empty((n, c, kernel_h, kernel_w, out_h, out_w), dtype=padded.dtype)
    for i in range(kernel_h):
        y0 = i * dilation
        for j in range(kernel_w):
            x0 = j * dilation
            cols[:, :, i, j] = padded[
                :, :, y0 : y0 + stride * out_h : stride, x0 : x0 + stride * out_w : stride
            ]
    return cols.reshape(n, c * kernel_h * kernel_w, out_h * out_w)


def _col2im(
    cols: np.ndarray,
    padded_shape: tuple[int, ...],
    kernel_h: int,
    kernel_w: int,
    stride: int,
    dilation: int,
    out_h: int,
    out_w: int,
) -> np.ndarray:
    n, c = padded_shape[:2]
    cols = cols.reshape(n, c, kernel_h, kernel_w, out_h, out_w)
    padded = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(kernel_h):
        y0 = i * dilation
        for j in range(kernel_w):
            x0 = j * dilation
            padded[
                :, :, y0 : y0 + stride * out_h : stride, x0 : x0 + stride * out_w : stride
            ] += cols[:, :, i, j]
    return padded


def _crop(padded: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return padded
    return padded[:, :, padding:-padding, padding:-padding]


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int = 1,
    dilation: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation of an NCHW batch with an OxCxkhxkw kernel bank."""
    _require_rank(x, 4, "conv2d input")
    _require_rank(weight, 4, "conv2d weight")
    n, c, h, w = x.shape
    o, wc, kernel_h, kernel_w = weight.shape

    if wc != c:
        raise ShapeError(
            f"conv2d: input has {c} channels but the weight expects {wc}",
            axis=1,
            expected=wc,
            actual=c,
        )
    if bias.shape != (o,):
        raise ShapeError(
            f"conv2d: bias shape {bias.shape} does not match {o} output channels",
            axis=0,
            expected=o,
            actual=bias.shape,
        )
    if stride < 1 or dilation < 1 or padding < 0:
        raise ConfigurationError(
            f"conv2d: need stride >= 1, dilation >= 1, padding >= 0, "
            f"got {stride}, {dilation}, {padding}"
        )

    out_h = output_extent(h, kernel_h, stride, dilation, padding)
    out_w = output_extent(w, kernel_w, stride, dilation, padding)
    for axis, extent in ((2, out_h), (3, out_w)):
        if extent < 1:
            raise ShapeError(
                f"conv2d: output extent {extent} on axis {axis} is empty",
                axis=axis,
                expected=">= 1",
                actual=extent,
            )

    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(padded, kernel_h, kernel_w, stride, dilation, out_h, out_w)
    kernel = weight.data.reshape(o, -1)
    out = np.matmul(kernel, cols).reshape(n, o, out_h, out_w)
    out += bias.data[None, :, None, None]

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g_cols = g.reshape(n, o, out_h * out_w)
        grad_weight = np.matmul(g_cols, cols.transpose(0, 2, 1)).sum(axis=0)
        grad_cols = np.matmul(kernel.T, g_cols)
        grad_padded = _col2im(
            grad_cols, padded.shape, kernel_h, kernel_w, stride, dilation, out_h, out_w
        )
        return (
            _crop(grad_padded, padding),
            grad_weight.reshape(weight.shape),
            g.sum(axis=(0, 2, 3)),
        )

    return Tensor.from_op(out, "conv2d", (x, weight, bias), backward)


def maxpool2d(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    """Window maximum; the gradient goes to the first maximum in row-major order."""
    _require_rank(x, 4, "maxpool2d input")
    if kernel < 1 or stride < 1 or padding < 0 or padding > kernel // 2:
        raise ConfigurationError(
            f"maxpool2d: need kernel >= 1, stride >= 1, 0 <= padding <= kernel // 2, "
            f"got {kernel}, {stride}, {padding}"
        )

    n, c, h, w = x.shape
    out_h = output_extent(h, kernel, stride, 1, padding)
    out_w = output_extent(w, kernel, stride, 1, padding)
    for axis, extent in ((2, out_h), (3, out_w)):
        if extent < 1:
            raise ShapeError(
                f"maxpool2d: output extent {extent} on axis {axis} is empty",
                axis=axis,
                expected=">= 1",
                actual=extent,
            )

    padded = np.pad(
        x.data,
        ((0, 0), (0, 0), (padding, padding), (padding, padding)),
        constant_values=-np.inf,
    )
    windows = np.empty((n, c, out_h, out_w, kernel * kernel), dtype=x.dtype)
    for i in range(kernel):
        for j in range(kernel):
            windows[..., i * kernel + j] = padded[
                :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
            ]
    argmax = np.argmax(windows, axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad_padded = np.zeros(padded.shape, dtype=g.dtype)
        for i in range(kernel):
            for j in range(kernel):
                routed = g * (argmax == i * kernel + j)
                grad_padded[
                    :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
                ] += routed
        return (_crop(grad_padded, padding),)

    return Tensor.from_op(out, "maxpool2d", (x,), backward)


# Resampling layer


def interpolation_matrix(size_in: int, size_out: int, dtype=np.float64) -> np.ndarray:
    """Aligned-corners linear interpolation weights of shape (size_out, size_in)."""
    matrix = np.zeros((size_out, size_in), dtype=dtype)
    if size_in == 1 or size_out == 1:
        matrix[:, 0] = 1.0
        return matrix

    positions = np.arange(size_out) * (size_in - 1) / (size_out - 1)
    low = np.minimum(np.floor(positions).astype(int), size_in - 1)
    high = np.minimum(low + 1, size_in - 1)
    fraction = positions - low
    rows = np.arange(size_out)
    np.add.at(matrix, (rows, low), 1.0 - fraction)
    np.add.at(matrix, (rows, high), fraction)
    return matrix


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Separable aligned-corners bilinear resize; backward is the transpose."""
    _require_rank(x, 4, "resize_bilinear input")
    rows = interpolation_matrix(x.shape[2], out_h, x.dtype)
    cols = interpolation_matrix(x.shape[3], out_w, x.dtype)
    out = np.matmul(np.matmul(rows, x.data), cols.T)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.matmul(np.matmul(rows.T, g), cols),)

    return Tensor.from_op(out, "resize_bilinear", (x,), backward)


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    if factor not in SUPPORTED_UPSAMPLE_FACTORS:
        raise ConfigurationError(
            f"Unsupported upsampling factor {factor}, expected one of "
            f"{SUPPORTED_UPSAMPLE_FACTORS}"
        )
    _require_rank(x, 4, "bilinear_upsample input")
    return resize_bilinear(x, x.shape[2] * factor, x.shape[3] * factor)


# Batch and channel layout layer


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    first = tensors[0]
    for tensor in tensors[1:]:
        if tensor.ndim != first.ndim:
            raise ShapeError(
                f"concat: rank {tensor.ndim} does not match rank {first.ndim}",
                expected=first.ndim,
                actual=tensor.ndim,
            )
        for i, (expected, actual) in enumerate(zip(first.shape, tensor.shape)):
            if i != axis and expected != actual:
                raise ShapeError(
                    f"concat: extent {actual} on axis {i} does not match {expected}",
                    axis=i,
                    expected=expected,
                    actual=actual,
                )

    out = np.concatenate([t.data for t in tensors], axis=axis)
    boundaries = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, boundaries, axis=axis)

    return Tensor.from_op(out, "concat", tuple(tensors), backward)


def slice_axis(t: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    index = [slice(None)] * t.ndim
    index[axis] = slice(start, stop)
    index_tuple = tuple(index)
    out = t.data[index_tuple].copy()

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(t.shape, dtype=g.dtype)
        grad[index_tuple] = g
        return (grad,)

    return Tensor.from_op(out, "slice", (t,), backward)


def concat_batch(a: Tensor, b: Tensor) -> Tensor:
    """Stack two tensors along the batch dimension."""
    return concat((a, b), axis=0)


def split_batch(t: Tensor) -> tuple[Tensor, Tensor]:
    """Inverse of :func:`concat_batch` for an even batch extent."""
    if t.ndim == 0 or t.shape[0] % 2:
        raise ShapeError(
            f"split_batch needs an even batch extent, got shape {t.shape}",
            axis=0,
            expected="even",
            actual=t.shape[0] if t.ndim else None,
        )
    half = t.shape[0] // 2
    return slice_axis(t, 0, half, axis=0), slice_axis(t, half, 2 * half, axis=0)


def batch_rows(t: Tensor) -> list[Tensor]:
    """Split a batch into its single rows."""
    return [slice_axis(t, i, i + 1, axis=0) for i in range(t.shape[0])]
