"""Input checking helpers for the estimator-style API."""

from __future__ import annotations

import numpy as np

__all__ = ["check_iq_array", "check_labels"]


def check_iq_array(X, sequence_length: int | None = None) -> np.ndarray:
    """Coerce input captures to a finite float32 (N, 2, L) array.

    Accepts (N, 2, L), a single (2, L) capture, or the flattened (N, 2*L)
    layout where each row is the I samples followed by the Q samples.
    """
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 2 and sequence_length is not None and arr.shape == (2, sequence_length):
        arr = arr[None]
    elif arr.ndim == 2:
        if arr.shape[1] % 2:
            raise ValueError(
                f"flattened captures need an even column count, got {arr.shape[1]}"
            )
        arr = arr.reshape(arr.shape[0], 2, arr.shape[1] // 2)
    if arr.ndim != 3 or arr.shape[1] != 2:
        raise ValueError(f"expected captures shaped (N, 2, L), got {np.shape(X)}")
    if sequence_length is not None and arr.shape[2] != sequence_length:
        raise ValueError(
            f"captures have length {arr.shape[2]}, expected {sequence_length}"
        )
    if arr.size and not np.isfinite(np.sum(arr)):
        raise ValueError("captures contain NaN or infinite samples")
    return np.ascontiguousarray(arr)


def check_labels(y, n_samples: int) -> np.ndarray:
    """Validate labels as a non-empty 1-d vector aligned with the captures."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"labels must be 1-d, got shape {arr.shape}")
    if len(arr) != n_samples:
        raise ValueError(f"got {len(arr)} labels for {n_samples} captures")
    if arr.size == 0:
        raise ValueError("labels are empty")
    return arr
