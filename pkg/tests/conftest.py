"""Shared fixtures and the finite-difference gradient check helper."""

import numpy as np
import pytest

from amcnet import tensor as T
from amcnet.model import AmcNetModel, ModelConfig


def fd_gradcheck(make_loss, tensors, rtol=1e-3, atol=1e-6, step=1e-5,
                 max_elems=None, rng=None):
    """Compare analytic gradients against central finite differences.

    ``make_loss`` rebuilds the scalar loss graph from the given float64 leaf
    tensors on every call. When ``max_elems`` is set, only that many
    randomly chosen elements per tensor are perturbed (for big toy models).
    """
    for t in tensors:
        assert t.data.dtype == np.float64, "gradient checks need float64 tensors"
        t.zero_grad()
    loss = make_loss()
    loss.backward()
    analytic = []
    for t in tensors:
        assert t.grad is not None, "no gradient reached a checked tensor"
        analytic.append(t.grad.copy())
    worst = 0.0
    for t, ana in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        if max_elems is None or flat.size <= max_elems:
            idxs = np.arange(flat.size)
        else:
            idxs = rng.choice(flat.size, size=max_elems, replace=False)
        for i in idxs:
            keep = flat[i]
            with T.no_grad():
                flat[i] = keep + step
                hi = float(make_loss().data)
                flat[i] = keep - step
                lo = float(make_loss().data)
            flat[i] = keep
            numeric = (hi - lo) / (2 * step)
            a = float(ana.reshape(-1)[i])
            err = abs(a - numeric)
            bound = atol + rtol * max(abs(a), abs(numeric))
            assert err <= bound, (
                f"gradient mismatch at element {i}: analytic {a}, "
                f"finite-difference {numeric}"
            )
            worst = max(worst, err / max(abs(numeric), 1e-12))
    return worst


def toy_config(**overrides) -> ModelConfig:
    """Small config for fast end-to-end tests: L=16, 2 filters/kernel, 4/8/8."""
    base = dict(
        sequence_length=16,
        num_classes=3,
        mlp_hidden=8,
        msm_filters_per_kernel=2,
        backbone_channels=(4, 8, 8),
        heads=2,
        classifier_hidden=(8, 8),
    )
    base.update(overrides)
    return ModelConfig(**base)


def random_model(config: ModelConfig, seed: int = 0, scale: float = 0.2,
                 dtype=np.float32) -> AmcNetModel:
    """Model with small random weights in every slot, biases included."""
    model = AmcNetModel(config, dtype=dtype)
    rng = np.random.default_rng(seed)
    for _, p in model.named_parameters():
        p.data[...] = rng.normal(0.0, scale, size=p.shape).astype(dtype)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
