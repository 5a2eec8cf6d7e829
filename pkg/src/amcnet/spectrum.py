"""Exact discrete Fourier transform over two-row I/Q signals, differentiable.

The forward transform is unnormalized and the inverse carries the 1/L
factor, so idft(dft(x)) reproduces x up to round-off. Both directions are
linear maps realized as matrix products against cached cosine/sine bases,
which makes the backward pass another pair of matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, _make

__all__ = ["SpectrumPair", "dft", "idft"]


@dataclass
class SpectrumPair:
    """Real and imaginary spectra of a batch of complex baseband signals."""

    real: Tensor
    imag: Tensor

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ShapeError(
                f"spectrum halves disagree: {self.real.shape} vs {self.imag.shape}"
            )


_basis_cache: dict[tuple[int, str], tuple[np.ndarray, np.ndarray]] = {}


def _basis(length: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    key = (length, np.dtype(dtype).name)
    if key not in _basis_cache:
        # angles in float64 regardless of target dtype; cast once at the end
        grid = 2.0 * np.pi * np.outer(np.arange(length), np.arange(length)) / length
        _basis_cache[key] = (
            np.cos(grid).astype(dtype),
            np.sin(grid).astype(dtype),
        )
    return _basis_cache[key]


def _check_iq(x: Tensor, op: str) -> None:
    if x.data.ndim != 3 or x.shape[1] != 2:
        raise ShapeError(f"{op} expects B x 2 x L, got {x.shape}")
    if x.shape[2] < 1:
        raise ShapeError(f"{op}: empty length axis")


def dft(x: Tensor) -> SpectrumPair:
    """Transform B x 2 x L I/Q rows into a SpectrumPair of B x L halves.

    Bin i of the spectrum is the plain complex sum over samples k of
    (I[k] + jQ[k]) exp(-2 pi j i k / L), with no normalization.
    """
    _check_iq(x, "dft")
    cos_b, sin_b = _basis(x.shape[2], x.data.dtype)
    i_rows = x.data[:, 0]
    q_rows = x.data[:, 1]
    re_data = i_rows @ cos_b + q_rows @ sin_b
    im_data = q_rows @ cos_b - i_rows @ sin_b

    def backward_re(g):
        dx = np.empty_like(x.data)
        dx[:, 0] = g @ cos_b
        dx[:, 1] = g @ sin_b
        x.accumulate_grad(dx)

    def backward_im(g):
        dx = np.empty_like(x.data)
        dx[:, 0] = -(g @ sin_b)
        dx[:, 1] = g @ cos_b
        x.accumulate_grad(dx)

    return SpectrumPair(
        real=_make(re_data, (x,), backward_re, "dft"),
        imag=_make(im_data, (x,), backward_im, "dft"),
    )


def idft(spectrum: SpectrumPair) -> Tensor:
    """Invert a SpectrumPair back to B x 2 x L rows (row 0 real, row 1 imaginary).

    Sample i is (1/L) times the complex sum over bins k of
    (Re[k] + jIm[k]) exp(+2 pi j i k / L).
    """
    re, im = spectrum.real, spectrum.imag
    if re.data.ndim != 2:
        raise ShapeError(f"idft expects B x L spectra, got {re.shape}")
    length = re.shape[1]
    cos_b, sin_b = _basis(length, re.data.dtype)
    inv = 1.0 / length
    out = np.empty((re.shape[0], 2, length), dtype=re.data.dtype)
    out[:, 0] = (re.data @ cos_b - im.data @ sin_b) * inv
    out[:, 1] = (re.data @ sin_b + im.data @ cos_b) * inv

    def backward(g):
        g0 = g[:, 0]
        g1 = g[:, 1]
        re.accumulate_grad((g0 @ cos_b + g1 @ sin_b) * inv)
        im.accumulate_grad((g1 @ cos_b - g0 @ sin_b) * inv)

    return _make(out, (re, im), backward, "idft")
