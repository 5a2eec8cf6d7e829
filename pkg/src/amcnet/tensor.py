"""Dense tensors with reverse-mode automatic differentiation.

Every layer, loss and optimizer in this package runs on the operations in
this module. Data lives in row-major numpy arrays, float32 by default and
float64 when a caller needs finite-difference-friendly precision. Recorded
operations form a DAG that :meth:`Tensor.backward` walks in reverse
topological order, accumulating gradients additively across fan-out.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "ConfigError",
    "no_grad",
    "set_check_finite",
    "add",
    "mul",
    "scale",
    "sum_all",
    "reshape",
    "transpose_last2",
    "concat_channels",
    "relu",
    "tanh",
    "softmax_lastdim",
    "global_avg_pool",
    "matmul",
    "linear",
    "channel_affine",
    "conv1d_same",
    "conv2d_iq",
    "batchnorm",
    "cross_entropy",
    "attention",
]


class ShapeError(ValueError):
    """Operand shapes (or dtypes) are incompatible with the operation."""


class ConfigError(ValueError):
    """A structural parameter (kernel size, head count, ...) is invalid."""


_grad_enabled = True
_finite_checks = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (used for evaluation passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_check_finite(enabled: bool) -> None:
    """Toggle the NaN/Inf guard that every forward op runs on its output."""
    global _finite_checks
    _finite_checks = bool(enabled)


def _ensure_finite(arr: np.ndarray, op: str) -> None:
    # A single reduction is enough: any NaN/Inf poisons the sum.
    if _finite_checks and not np.isfinite(np.sum(arr)):
        raise FloatingPointError(f"{op} produced non-finite values")


class Tensor:
    """A dense n-dimensional float array, optionally tracking gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            arr = np.asarray(data)
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
            self.data = np.ascontiguousarray(arr, dtype=dtype)
        else:
            self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Populate ``grad`` on every ``requires_grad`` tensor this scalar depends on."""
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self._parents:
            raise RuntimeError("backward called on a tensor with no recorded graph")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _make(out_data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    _ensure_finite(out_data, op)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")
    if a.data.dtype != b.data.dtype:
        raise ShapeError(f"{op}: dtypes {a.data.dtype} and {b.data.dtype} differ")


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    out_data = a.data + b.data

    def backward(g):
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    return _make(out_data, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    out_data = a.data * b.data

    def backward(g):
        a.accumulate_grad(g * b.data)
        b.accumulate_grad(g * a.data)

    return _make(out_data, (a, b), backward, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out_data = x.data * c

    def backward(g):
        x.accumulate_grad(g * c)

    return _make(out_data, (x,), backward, "scale")


def sum_all(x: Tensor) -> Tensor:
    out_data = np.asarray(np.sum(x.data), dtype=x.data.dtype)

    def backward(g):
        x.accumulate_grad(np.full_like(x.data, float(g)))

    return _make(out_data, (x,), backward, "sum")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out_data = np.reshape(x.data, shape).copy()

    def backward(g):
        x.accumulate_grad(g.reshape(x.shape))

    return _make(out_data, (x,), backward, "reshape")


def transpose_last2(x: Tensor) -> Tensor:
    if x.data.ndim < 2:
        raise ShapeError(f"transpose needs rank >= 2, got shape {x.shape}")
    out_data = np.ascontiguousarray(np.swapaxes(x.data, -1, -2))

    def backward(g):
        x.accumulate_grad(np.swapaxes(g, -1, -2))

    return _make(out_data, (x,), backward, "transpose")


def concat_channels(parts: Iterable[Tensor]) -> Tensor:
    """Concatenate along axis 1; all other dimensions must agree."""
    parts = list(parts)
    first = parts[0]
    for p in parts[1:]:
        if p.data.ndim != first.data.ndim or p.shape[0] != first.shape[0] or p.shape[2:] != first.shape[2:]:
            raise ShapeError(
                f"concat: non-channel dims differ, {first.shape} vs {p.shape}"
            )
        if p.data.dtype != first.data.dtype:
            raise ShapeError("concat: mixed dtypes")
    out_data = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.shape[1] for p in parts]

    def backward(g):
        start = 0
        for p, w in zip(parts, widths):
            p.accumulate_grad(g[:, start:start + w])
            start += w

    return _make(out_data, tuple(parts), backward, "concat")


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)

    def backward(g):
        x.accumulate_grad(g * (x.data > 0))

    return _make(out_data, (x,), backward, "relu")


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def backward(g):
        x.accumulate_grad(g * (1.0 - out_data * out_data))

    return _make(out_data, (x,), backward, "tanh")


def softmax_lastdim(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed shift-stably; rows sum to 1."""
    shifted = x.data - np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / np.sum(e, axis=-1, keepdims=True)

    def backward(g):
        dot = np.sum(g * out_data, axis=-1, keepdims=True)
        x.accumulate_grad(out_data * (g - dot))

    return _make(out_data, (x,), backward, "softmax")


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the trailing length axis of a B x C x L tensor."""
    if x.data.ndim != 3:
        raise ShapeError(f"global_avg_pool expects B x C x L, got {x.shape}")
    length = x.shape[2]
    out_data = np.mean(x.data, axis=2)

    def backward(g):
        x.accumulate_grad(np.repeat(g[:, :, None], length, axis=2) / length)

    return _make(out_data, (x,), backward, "global_avg_pool")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors, or batch-wise for matching 3-D stacks."""
    if a.data.ndim != b.data.ndim or a.data.ndim not in (2, 3):
        raise ShapeError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2] or (a.data.ndim == 3 and a.shape[0] != b.shape[0]):
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} @ {b.shape}")
    if a.data.dtype != b.data.dtype:
        raise ShapeError(f"matmul: dtypes {a.data.dtype} and {b.data.dtype} differ")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        a.accumulate_grad(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        b.accumulate_grad(np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _make(out_data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight.T + bias`` for a batch of row vectors."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: x {x.shape} incompatible with weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    out_data = x.data @ weight.data.T + bias.data

    def backward(g):
        x.accumulate_grad(g @ weight.data)
        weight.accumulate_grad(g.T @ x.data)
        bias.accumulate_grad(g.sum(axis=0))

    return _make(out_data, (x, weight, bias), backward, "linear")


def channel_affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine projection over the channel axis: B x C x L -> B x D x L."""
    if x.data.ndim != 3 or weight.data.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ShapeError(f"channel_affine: x {x.shape} incompatible with weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"channel_affine: bias {bias.shape} does not match weight {weight.shape}")
    out_data = np.tensordot(weight.data, x.data, axes=([1], [1])).transpose(1, 0, 2)
    out_data = np.ascontiguousarray(out_data) + bias.data[:, None]

    def backward(g):
        weight.accumulate_grad(np.tensordot(g, x.data, axes=([0, 2], [0, 2])))
        x.accumulate_grad(np.tensordot(g, weight.data, axes=([1], [0])).transpose(0, 2, 1))
        bias.accumulate_grad(g.sum(axis=(0, 2)))

    return _make(out_data, (x, weight, bias), backward, "channel_affine")


# ---------------------------------------------------------------------------
# convolutions


def _sliding_patches(padded: np.ndarray, k: int) -> np.ndarray:
    # view of shape (..., L, k) over the trailing axis of the padded input
    return np.lib.stride_tricks.sliding_window_view(padded, k, axis=-1)


def conv1d_same(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Length-preserving 1-D convolution, zero-padded (k-1)/2 on each end.

    ``x`` is B x Cin x L, ``kernels`` Cout x Cin x k with odd k,
    ``bias`` Cout. Output is B x Cout x L.
    """
    if x.data.ndim != 3 or kernels.data.ndim != 3:
        raise ShapeError(f"conv1d_same: ranks {x.shape} / {kernels.shape} unsupported")
    cout, cin, k = kernels.shape
    if x.shape[1] != cin:
        raise ShapeError(
            f"conv1d_same: input channels {x.shape[1]} do not match kernel channels {cin}"
        )
    if k % 2 == 0:
        raise ConfigError(f"conv1d_same: kernel length {k} must be odd")
    if bias.shape != (cout,):
        raise ShapeError(f"conv1d_same: bias {bias.shape} does not match {cout} kernels")
    pad = (k - 1) // 2
    length = x.shape[2]
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    patches = _sliding_patches(padded, k)  # B x Cin x L x k
    out_data = np.tensordot(kernels.data, patches, axes=([1, 2], [1, 3]))
    out_data = np.ascontiguousarray(out_data.transpose(1, 0, 2)) + bias.data[:, None]

    def backward(g):
        kernels.accumulate_grad(np.tensordot(g, patches, axes=([0, 2], [0, 2])))
        bias.accumulate_grad(g.sum(axis=(0, 2)))
        if x.requires_grad:
            spread = np.tensordot(g, kernels.data, axes=([1], [0]))  # B x L x Cin x k
            dpad = np.zeros_like(padded)
            for j in range(k):
                dpad[:, :, j:j + length] += spread[:, :, :, j].transpose(0, 2, 1)
            x.accumulate_grad(dpad[:, :, pad:pad + length])

    return _make(out_data, (x, kernels, bias), backward, "conv1d_same")


def conv2d_iq(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Convolution over a two-row I/Q plane: valid in height, same-padded in length.

    ``x`` is B x 1 x 2 x L, ``kernels`` C x 1 x 2 x k with odd k, ``bias`` C.
    The kernel spans both rows, so the output is B x C x 1 x L.
    """
    if x.data.ndim != 4 or x.shape[1] != 1 or x.shape[2] != 2:
        raise ShapeError(f"conv2d_iq: input must be B x 1 x 2 x L, got {x.shape}")
    if kernels.data.ndim != 4 or kernels.shape[1] != 1 or kernels.shape[2] != 2:
        raise ShapeError(f"conv2d_iq: kernels must be C x 1 x 2 x k, got {kernels.shape}")
    c, _, _, k = kernels.shape
    if k % 2 == 0:
        raise ConfigError(f"conv2d_iq: kernel length {k} must be odd")
    if bias.shape != (c,):
        raise ShapeError(f"conv2d_iq: bias {bias.shape} does not match {c} kernels")
    pad = (k - 1) // 2
    length = x.shape[3]
    rows = x.data[:, 0]  # B x 2 x L
    padded = np.pad(rows, ((0, 0), (0, 0), (pad, pad)))
    patches = _sliding_patches(padded, k)  # B x 2 x L x k
    flat_k = kernels.data[:, 0]  # C x 2 x k
    out_data = np.tensordot(flat_k, patches, axes=([1, 2], [1, 3]))  # C x B x L
    out_data = np.ascontiguousarray(out_data.transpose(1, 0, 2)) + bias.data[:, None]
    out_data = out_data[:, :, None, :]

    def backward(g):
        g3 = g[:, :, 0, :]  # B x C x L
        kernels.accumulate_grad(
            np.tensordot(g3, patches, axes=([0, 2], [0, 2]))[:, None]
        )
        bias.accumulate_grad(g3.sum(axis=(0, 2)))
        if x.requires_grad:
            spread = np.tensordot(g3, flat_k, axes=([1], [0]))  # B x L x 2 x k
            dpad = np.zeros_like(padded)
            for j in range(k):
                dpad[:, :, j:j + length] += spread[:, :, :, j].transpose(0, 2, 1)
            x.accumulate_grad(dpad[:, None, :, pad:pad + length])

    return _make(out_data, (x, kernels, bias), backward, "conv2d_iq")


# ---------------------------------------------------------------------------
# normalization and loss


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over every non-channel axis.

    Train mode normalizes with batch statistics and updates the running
    moments in place (biased variance normalizes, the unbiased estimate
    feeds the running update). Eval mode applies the stored moments.
    """
    if x.data.ndim < 3:
        raise ShapeError(f"batchnorm expects at least B x C x L, got {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(
            f"batchnorm: affine shapes {gamma.shape}/{beta.shape} do not match {channels} channels"
        )
    axes = (0,) + tuple(range(2, x.data.ndim))
    cshape = (1, channels) + (1,) * (x.data.ndim - 2)
    if training:
        if x.shape[0] < 2:
            raise ShapeError("batchnorm: train mode needs batch size >= 2")
        n = x.data.size // channels
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / (n - 1))
    else:
        mean = running_mean.astype(x.data.dtype, copy=False)
        var = running_var.astype(x.data.dtype, copy=False)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(cshape)) * inv_std.reshape(cshape)
    out_data = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)

    def backward(g):
        gamma.accumulate_grad(np.sum(g * xhat, axis=axes))
        beta.accumulate_grad(np.sum(g, axis=axes))
        if x.requires_grad:
            gxh = g * gamma.data.reshape(cshape)
            istd = inv_std.reshape(cshape)
            if training:
                n = x.data.size // channels
                s1 = np.sum(gxh, axis=axes, keepdims=True)
                s2 = np.sum(gxh * xhat, axis=axes, keepdims=True)
                x.accumulate_grad(istd * (gxh - s1 / n - xhat * s2 / n))
            else:
                x.accumulate_grad(gxh * istd)

    return _make(out_data, (x, gamma, beta), backward, "batchnorm")


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels, in log-sum-exp form."""
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects B x K logits, got {logits.shape}")
    labels = np.asarray(labels)
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise ShapeError(f"cross_entropy: {batch} rows but labels shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= classes:
        raise ValueError(f"cross_entropy: labels outside [0, {classes})")
    shifted = logits.data - np.max(logits.data, axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1))
    picked = shifted[np.arange(batch), labels]
    out_data = np.asarray(np.mean(lse - picked), dtype=logits.data.dtype)

    def backward(g):
        p = np.exp(shifted - lse[:, None])
        p[np.arange(batch), labels] -= 1.0
        logits.accumulate_grad(p * (float(g) / batch))

    return _make(out_data, (logits,), backward, "cross_entropy")


# ---------------------------------------------------------------------------
# attention


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention over the length axis.

    Inputs are d x L (or batched B x d x L) with matching shapes. Position i
    of the output is the attention-weighted combination of value columns,
    with weights softmax(q^T k / sqrt(d)) so every weight row sums to 1.
    """
    if q.shape != k.shape or q.shape != v.shape:
        raise ShapeError(f"attention: shapes {q.shape}/{k.shape}/{v.shape} differ")
    if q.data.ndim not in (2, 3):
        raise ShapeError(f"attention: rank {q.data.ndim} unsupported")
    d = q.shape[-2]
    scores = scale(matmul(transpose_last2(q), k), 1.0 / np.sqrt(d))
    weights = softmax_lastdim(scores)
    return transpose_last2(matmul(weights, transpose_last2(v)))


def attention_weights(q: Tensor, k: Tensor) -> np.ndarray:
    """The softmax weight matrix attention() applies; rows sum to 1."""
    d = q.shape[-2]
    scores = scale(matmul(transpose_last2(q), k), 1.0 / np.sqrt(d))
    return softmax_lastdim(scores).data
