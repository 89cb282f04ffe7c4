"""Torch models whose exported tensors match the inference-side contract.

The consumer expects flat tensor names:

    enc{L}.conv{i}.w/.b        3x3 conv, weight (Cout, Cin, 3, 3)
    enc{L}.bn{i}.gamma/beta/mean/var
    bridge.conv{i}.* / bridge.bn{i}.*
    dec{L}.up.w/.b             2x2 stride-2 transposed conv, weight (Cin, Cout, 2, 2)
    dec{L}.conv{i}.* / dec{L}.bn{i}.*
    final.w/.b                 1x1 conv head

ordered encoder levels first, then the bridge, then decoder levels from the
deepest up, then the head. Decoder concatenation puts the encoder skip first.
MLP tensors are fc{i}.w with torch's native (out, in) layout plus fc{i}.b.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .errors import ConfigError
from .formats import save_tensors


class _ConvBlock(nn.Module):
    """conv-bn-relu twice; the shared unit of encoder, bridge, and decoder."""

    def __init__(self, cin: int, cout: int, bn_eps: float):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(cout, eps=bn_eps)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(cout, eps=bn_eps)

    def forward(self, x):
        x = torch.relu(self.bn1(self.conv1(x)))
        return torch.relu(self.bn2(self.conv2(x)))


class UNet(nn.Module):
    """Mirror of the inference network; forward returns logits (N, C, H, W)."""

    def __init__(self, in_bands: int = 25, base: int = 8, depth: int = 2,
                 classes: int = 3, patch: int = 128, bn_eps: float = 1e-5):
        super().__init__()
        if in_bands < 1 or base < 1:
            raise ConfigError("in_bands and base must be positive")
        if classes < 2:
            raise ConfigError("need at least two classes")
        if not 1 <= depth <= 4:
            raise ConfigError("depth must be between 1 and 4")
        if patch < 1 or patch % (1 << depth):
            raise ConfigError(f"patch must be a positive multiple of {1 << depth}")
        if not (bn_eps > 0 and math.isfinite(bn_eps)):
            raise ConfigError("bn_eps must be positive and finite")
        self.in_bands, self.base, self.depth = in_bands, base, depth
        self.classes, self.patch, self.bn_eps = classes, patch, bn_eps

        chans = [base << (lvl - 1) for lvl in range(1, depth + 1)]
        self.enc = nn.ModuleList()
        cin = in_bands
        for ch in chans:
            self.enc.append(_ConvBlock(cin, ch, bn_eps))
            cin = ch
        self.pool = nn.MaxPool2d(2)
        self.bridge = _ConvBlock(cin, base << depth, bn_eps)
        cin = base << depth
        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for ch in reversed(chans):
            self.up.append(nn.ConvTranspose2d(cin, ch, 2, stride=2))
            self.dec.append(_ConvBlock(2 * ch, ch, bn_eps))
            cin = ch
        self.final = nn.Conv2d(cin, classes, 1)

    def forward(self, x):
        if x.shape[-1] % (1 << self.depth) or x.shape[-2] % (1 << self.depth):
            raise ConfigError(f"spatial dims must be multiples of {1 << self.depth}")
        skips = []
        for block in self.enc:
            x = block(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bridge(x)
        for up, block, skip in zip(self.up, self.dec, reversed(skips)):
            x = torch.cat([skip, up(x)], dim=1)
            x = block(x)
        return self.final(x)


class Mlp(nn.Module):
    """Per-pixel classifier: ReLU hidden layers, linear head, logits out."""

    def __init__(self, sizes):
        super().__init__()
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ConfigError("sizes must list input, hidden, and output widths")
        self.sizes = sizes
        self.fcs = nn.ModuleList(nn.Linear(a, b) for a, b in zip(sizes, sizes[1:]))

    def forward(self, x):
        for fc in self.fcs[:-1]:
            x = torch.relu(fc(x))
        return self.fcs[-1](x)


def init_weights(model: nn.Module, seed: int = 0) -> None:
    """He-normal conv/linear weights, zero biases, identity batch norms.

    The classifier head is zeroed so the untrained network emits uniform
    class probabilities (per-pixel cross entropy exactly ln C).
    """
    gen = torch.Generator().manual_seed(seed)
    head = model.final if isinstance(model, UNet) else model.fcs[-1]
    with torch.no_grad():
        for mod in model.modules():
            if isinstance(mod, nn.Conv2d):
                fan_in = mod.in_channels * mod.kernel_size[0] * mod.kernel_size[1]
            elif isinstance(mod, nn.ConvTranspose2d):
                fan_in = mod.in_channels * mod.kernel_size[0] * mod.kernel_size[1]
            elif isinstance(mod, nn.Linear):
                fan_in = mod.in_features
            elif isinstance(mod, nn.BatchNorm2d):
                mod.reset_running_stats()
                mod.weight.fill_(1.0)
                mod.bias.zero_()
                continue
            else:
                continue
            mod.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
            mod.bias.zero_()
        head.weight.zero_()
        head.bias.zero_()


def unet_tensors(model: UNet) -> dict:
    """Flat name -> float32 array in the consumer's canonical order."""
    return {k: v.detach().cpu().numpy().astype(np.float32)
            for k, v in _param_map(model).items()}


def mlp_tensors(model: Mlp) -> dict:
    return {k: v.detach().cpu().numpy().astype(np.float32)
            for k, v in _param_map(model).items()}


def export_unet(path, model: UNet) -> None:
    """Write the model as an HSWT float checkpoint.

    Metadata keys and their order are part of the bit-exactness contract
    with the consumer; nothing may be added or reordered.
    """
    meta = {"model": "unet_f32", "in_bands": model.in_bands, "base": model.base,
            "depth": model.depth, "classes": model.classes, "patch": model.patch,
            "bn_eps": repr(model.bn_eps)}
    save_tensors(path, unet_tensors(model), meta)


def export_mlp(path, model: Mlp) -> None:
    meta = {"model": "mlp_f32", "sizes": ",".join(str(s) for s in model.sizes),
            "activation": "relu"}
    save_tensors(path, mlp_tensors(model), meta)


def load_into(model: nn.Module, tensors: dict) -> None:
    """Copy a flat tensor dict produced by export back into a live model."""
    want = unet_tensors(model) if isinstance(model, UNet) else mlp_tensors(model)
    missing = sorted(set(want) - set(tensors))
    if missing:
        raise ConfigError(f"missing tensors: {', '.join(missing[:5])}")
    mapping = _param_map(model)
    with torch.no_grad():
        for name in want:
            src = np.asarray(tensors[name], dtype=np.float32)
            dst = mapping[name]
            if tuple(src.shape) != tuple(dst.shape):
                raise ConfigError(f"{name}: shape {tuple(src.shape)} != "
                                  f"{tuple(dst.shape)}")
            dst.copy_(torch.from_numpy(src.copy()))


def _param_map(model: nn.Module) -> dict:
    """Flat export name -> live torch tensor (parameters and BN buffers)."""
    out = {}

    def block(prefix: str, blk: _ConvBlock):
        for i, (conv, bn) in enumerate(((blk.conv1, blk.bn1), (blk.conv2, blk.bn2)), 1):
            out[f"{prefix}.conv{i}.w"] = conv.weight
            out[f"{prefix}.conv{i}.b"] = conv.bias
            out[f"{prefix}.bn{i}.gamma"] = bn.weight
            out[f"{prefix}.bn{i}.beta"] = bn.bias
            out[f"{prefix}.bn{i}.mean"] = bn.running_mean
            out[f"{prefix}.bn{i}.var"] = bn.running_var

    if isinstance(model, UNet):
        for lvl, blk in enumerate(model.enc, 1):
            block(f"enc{lvl}", blk)
        block("bridge", model.bridge)
        for i, (up, blk) in enumerate(zip(model.up, model.dec)):
            lvl = model.depth - i
            out[f"dec{lvl}.up.w"] = up.weight
            out[f"dec{lvl}.up.b"] = up.bias
            block(f"dec{lvl}", blk)
        out["final.w"] = model.final.weight
        out["final.b"] = model.final.bias
    else:
        for i, fc in enumerate(model.fcs, 1):
            out[f"fc{i}.w"] = fc.weight
            out[f"fc{i}.b"] = fc.bias
    return out
