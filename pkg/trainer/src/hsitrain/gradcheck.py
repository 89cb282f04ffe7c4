"""Finite-difference gradient verification for the training loss.

The check runs the model in double precision and eval mode (batch-norm
statistics frozen) so the loss is a smooth deterministic function of the
parameters, then compares analytic gradients against central differences.
"""

from __future__ import annotations

import copy

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, NumericError
from .models import Mlp, UNet, init_weights


def toy_setup(kind: str = "unet", seed: int = 0) -> tuple:
    """Canonical tiny (model, inputs, labels) triple for gradient checks.

    The classifier head is re-randomized after init (init zeroes it, which
    would cut the loss off from every upstream parameter and make the check
    vacuous). Not every seed is usable: a ReLU or pooling decision boundary
    within the finite-difference step of some parameter ruins the comparison,
    so stick to seeds verified to sit clear of kinks (13 for unet works).
    """
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed + 1)
    if kind == "unet":
        model = UNet(in_bands=3, base=2, depth=1, classes=2, patch=8)
        x = rng.normal(size=(1, 3, 8, 8)) * 0.5
        y = rng.integers(0, 2, size=(1, 8, 8))
        head = model.final
    elif kind == "mlp":
        model = Mlp((5, 6, 3))
        x = rng.normal(size=(12, 5)) * 0.5
        y = rng.integers(0, 3, size=(12,))
        head = model.fcs[-1]
    elif kind == "linear":
        model = Mlp((4, 3))
        x = rng.normal(size=(16, 4)) * 0.3
        y = rng.integers(0, 3, size=(16,))
        head = model.fcs[-1]
    else:
        raise ConfigError(f"unknown gradient-check model '{kind}'")
    init_weights(model, seed)
    with torch.no_grad():
        head.weight.normal_(0.0, 0.4, generator=gen)
        head.bias.normal_(0.0, 0.1, generator=gen)
    return model, x, y


def gradient_check(model, x, y, class_weights=None, h: float = 1e-3,
                   corrupt_scale: float = 1.0) -> float:
    """Max relative disagreement between analytic and numeric gradients.

    The metric is max_i |a_i - n_i| normalized by the largest gradient
    magnitude seen, so near-zero components do not blow up the ratio.
    corrupt_scale multiplies the analytic gradients; anything but 1.0 is a
    deliberate fault for negative controls. The caller's model is not
    modified.
    """
    model = copy.deepcopy(model).double().eval()
    x = torch.as_tensor(np.asarray(x), dtype=torch.float64)
    y = torch.as_tensor(np.asarray(y), dtype=torch.int64)
    w = None
    if class_weights is not None:
        w = torch.as_tensor(np.asarray(class_weights), dtype=torch.float64)

    def loss_fn() -> torch.Tensor:
        return F.cross_entropy(model(x), y, weight=w, ignore_index=255)

    loss = loss_fn()
    if not torch.isfinite(loss):
        raise NumericError(f"non-finite loss {float(loss.detach())}")
    model.zero_grad()
    loss.backward()

    params = [p for p in model.parameters() if p.requires_grad]
    analytic = torch.cat([p.grad.reshape(-1) for p in params]).numpy()
    analytic = analytic * corrupt_scale

    numeric = np.empty_like(analytic)
    pos = 0
    with torch.no_grad():
        for p in params:
            flat = p.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                hi = loss_fn()
                flat[i] = orig - h
                lo = loss_fn()
                flat[i] = orig
                if not (torch.isfinite(hi) and torch.isfinite(lo)):
                    raise NumericError("non-finite loss during finite differences")
                numeric[pos] = (hi.item() - lo.item()) / (2.0 * h)
                pos += 1

    denom = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / denom)
