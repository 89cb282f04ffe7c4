"""Float reference network: a slim U-Net for patchwise segmentation.

The network keeps the classic encoder/bridge/decoder shape but starts at
eight filters and doubles per level, so the whole model stays around 31k
parameters. Every 3x3 convolution is zero-padded, batch-normalized, and
ReLU-activated; downsampling is 2x2 max pooling, upsampling is a 2x2 stride-2
transposed convolution, and each decoder level concatenates the matching
encoder output (encoder channels first). A 1x1 convolution plus softmax
produces per-pixel class probabilities.

Weights live in a flat dict keyed by dotted tensor names (enc1.conv1.w,
dec2.up.b, final.w, ...). Convolution weights are (C_out, C_in, kh, kw);
transposed-convolution weights are (C_in, C_out, kh, kw).

All arithmetic runs in float64 internally for reproducibility across BLAS
builds; outputs are float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hswt
from .errors import ConfigError, DataError, WeightError


@dataclass(frozen=True)
class UNetConfig:
    in_bands: int = 25
    base: int = 8
    depth: int = 2
    classes: int = 3
    patch: int = 128
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.in_bands < 1 or self.base < 1 or self.classes < 2:
            raise ConfigError("in_bands and base must be >= 1, classes >= 2")
        if not 1 <= self.depth <= 4:
            raise ConfigError(f"depth must be in 1..4, got {self.depth}")
        m = 1 << self.depth
        if self.patch < m or self.patch % m:
            raise ConfigError(f"patch must be a positive multiple of {m}, "
                              f"got {self.patch}")
        if self.bn_eps <= 0:
            raise ConfigError("bn_eps must be positive")

    def level_channels(self, level: int) -> int:
        """Filter count of encoder level 1..depth (and its mirror decoder)."""
        return self.base * (1 << (level - 1))

    @property
    def bridge_channels(self) -> int:
        return self.base * (1 << self.depth)


@dataclass(frozen=True)
class LayerSpec:
    """One step of the executed graph.

    kind: conv3 | conv1 | up | bn | relu | pool | save | concat | softmax.
    conv/up/bn carry a weight-name prefix in ``name``; save stashes the
    current activation under ``name``; concat joins the stash named
    ``skip_of`` in front of the current activation.
    """

    kind: str
    name: str
    cin: int = 0
    cout: int = 0
    skip_of: str = ""


def build_unet(cfg: UNetConfig) -> tuple:
    """Ordered layer graph for the configured U-Net."""
    layers = []

    def conv_block(prefix: str, idx: int, cin: int, cout: int):
        layers.append(LayerSpec("conv3", f"{prefix}.conv{idx}", cin, cout))
        layers.append(LayerSpec("bn", f"{prefix}.bn{idx}", cout, cout))
        layers.append(LayerSpec("relu", f"{prefix}.relu{idx}", cout, cout))

    cin = cfg.in_bands
    for lvl in range(1, cfg.depth + 1):
        ch = cfg.level_channels(lvl)
        conv_block(f"enc{lvl}", 1, cin, ch)
        conv_block(f"enc{lvl}", 2, ch, ch)
        layers.append(LayerSpec("save", f"enc{lvl}.out", ch, ch))
        layers.append(LayerSpec("pool", f"pool{lvl}", ch, ch))
        cin = ch

    bch = cfg.bridge_channels
    conv_block("bridge", 1, cin, bch)
    conv_block("bridge", 2, bch, bch)
    cin = bch

    for lvl in range(cfg.depth, 0, -1):
        ch = cfg.level_channels(lvl)
        layers.append(LayerSpec("up", f"dec{lvl}.up", cin, ch))
        layers.append(LayerSpec("concat", f"dec{lvl}.concat", 2 * ch, 2 * ch,
                                skip_of=f"enc{lvl}.out"))
        conv_block(f"dec{lvl}", 1, 2 * ch, ch)
        conv_block(f"dec{lvl}", 2, ch, ch)
        cin = ch

    layers.append(LayerSpec("conv1", "final", cin, cfg.classes))
    layers.append(LayerSpec("softmax", "softmax", cfg.classes, cfg.classes))
    return tuple(layers)


def weight_shapes(cfg: UNetConfig) -> dict:
    """Expected tensor name -> shape for the configured U-Net."""
    shapes = {}
    for spec in build_unet(cfg):
        if spec.kind == "conv3":
            shapes[spec.name + ".w"] = (spec.cout, spec.cin, 3, 3)
            shapes[spec.name + ".b"] = (spec.cout,)
        elif spec.kind == "conv1":
            shapes[spec.name + ".w"] = (spec.cout, spec.cin, 1, 1)
            shapes[spec.name + ".b"] = (spec.cout,)
        elif spec.kind == "up":
            shapes[spec.name + ".w"] = (spec.cin, spec.cout, 2, 2)
            shapes[spec.name + ".b"] = (spec.cout,)
        elif spec.kind == "bn":
            for part in ("gamma", "beta", "mean", "var"):
                shapes[f"{spec.name}.{part}"] = (spec.cout,)
    return shapes


def init_weights(cfg: UNetConfig, seed: int = 0) -> dict:
    """He-normal convolution weights, zero biases, identity batch norms."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in weight_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[1]
        if leaf == "w":
            if len(shape) == 4 and ".up." in name:
                fan_in = shape[0] * shape[2] * shape[3]
            else:
                fan_in = shape[1] * shape[2] * shape[3]
            std = np.sqrt(2.0 / fan_in)
            weights[name] = rng.normal(0.0, std, shape).astype(np.float32)
        elif leaf in ("b", "beta", "mean"):
            weights[name] = np.zeros(shape, dtype=np.float32)
        else:  # gamma, var
            weights[name] = np.ones(shape, dtype=np.float32)
    return weights


def validate_weights(cfg: UNetConfig, weights: dict) -> None:
    want = weight_shapes(cfg)
    missing = sorted(set(want) - set(weights))
    if missing:
        raise WeightError(f"missing tensors: {', '.join(missing[:5])}")
    for name, shape in want.items():
        got = tuple(weights[name].shape)
        if got != shape:
            raise WeightError(f"{name}: shape {got} != expected {shape}")


# ---------------------------------------------------------------------------
# Primitive ops. x is (H, W, C) float64.
# ---------------------------------------------------------------------------

def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray,
           padding: int = 0) -> np.ndarray:
    """Stride-1 convolution with symmetric zero padding.

    x is (H, W, C_in), w is (C_out, C_in, kh, kw). padding = k // 2 keeps odd
    square kernels size-preserving.
    """
    if x.ndim != 3 or w.ndim != 4:
        raise DataError("conv2d expects (H, W, C) input and (Cout, Cin, kh, kw) weights")
    if w.shape[1] != x.shape[2]:
        raise DataError(f"input channels {x.shape[2]} != weight channels {w.shape[1]}")
    if padding < 0:
        raise ConfigError("padding must be >= 0")
    kh, kw = w.shape[2], w.shape[3]
    xp = np.pad(x, ((padding, padding), (padding, padding), (0, 0))) if padding else x
    h = xp.shape[0] - kh + 1
    wd = xp.shape[1] - kw + 1
    if h < 1 or wd < 1:
        raise DataError(f"kernel {kh}x{kw} does not fit input {x.shape[0]}x{x.shape[1]} "
                        f"at padding {padding}")
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(0, 1))
    cols = win.reshape(h * wd, -1)  # (HW, Cin*kh*kw)
    mat = w.reshape(w.shape[0], -1).T  # (Cin*kh*kw, Cout)
    out = cols.astype(np.float64) @ mat.astype(np.float64)
    return out.reshape(h, wd, w.shape[0]) + b.astype(np.float64)


def conv_transpose2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """2x2 stride-2 transposed convolution; doubles both spatial dims."""
    if w.shape[2] != 2 or w.shape[3] != 2:
        raise ConfigError("transposed convolutions are fixed at 2x2 kernels")
    if w.shape[0] != x.shape[2]:
        raise DataError(f"input channels {x.shape[2]} != weight channels {w.shape[0]}")
    h, wd = x.shape[0], x.shape[1]
    y = np.tensordot(x.astype(np.float64), w.astype(np.float64), axes=([2], [0]))
    # y is (H, W, Cout, 2, 2); interleave the kernel taps into the output grid
    out = y.transpose(0, 3, 1, 4, 2).reshape(h * 2, wd * 2, w.shape[1])
    return out + b.astype(np.float64)


def batchnorm(x: np.ndarray, gamma, beta, mean, var, eps: float = 1e-5) -> np.ndarray:
    scale = gamma.astype(np.float64) / np.sqrt(var.astype(np.float64) + eps)
    return x * scale + (beta.astype(np.float64) - mean.astype(np.float64) * scale)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def maxpool2x2(x: np.ndarray) -> np.ndarray:
    h, w, c = x.shape
    if h % 2 or w % 2:
        raise DataError(f"pooling needs even dims, got {h}x{w}")
    return x.reshape(h // 2, 2, w // 2, 2, c).max(axis=(1, 3))


def softmax(x: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Graph execution
# ---------------------------------------------------------------------------

def forward(cfg: UNetConfig, weights: dict, x: np.ndarray,
            logits: bool = False) -> np.ndarray:
    """Run one (H, W, in_bands) input through the network.

    Both spatial dims must be divisible by 2**depth. Returns (H, W, classes)
    float32 probabilities, or pre-softmax logits when requested.
    """
    validate_weights(cfg, weights)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != cfg.in_bands:
        raise DataError(f"input must be (H, W, {cfg.in_bands}), got {x.shape}")
    m = 1 << cfg.depth
    if x.shape[0] % m or x.shape[1] % m:
        raise DataError(f"spatial dims must be multiples of {m}, got {x.shape[:2]}")

    stash = {}
    for spec in build_unet(cfg):
        if spec.kind == "conv3":
            x = conv2d(x, weights[spec.name + ".w"], weights[spec.name + ".b"], padding=1)
        elif spec.kind == "conv1":
            x = conv2d(x, weights[spec.name + ".w"], weights[spec.name + ".b"], padding=0)
        elif spec.kind == "up":
            x = conv_transpose2d(x, weights[spec.name + ".w"], weights[spec.name + ".b"])
        elif spec.kind == "bn":
            x = batchnorm(x, weights[spec.name + ".gamma"], weights[spec.name + ".beta"],
                          weights[spec.name + ".mean"], weights[spec.name + ".var"],
                          eps=cfg.bn_eps)
        elif spec.kind == "relu":
            x = relu(x)
        elif spec.kind == "pool":
            x = maxpool2x2(x)
        elif spec.kind == "save":
            stash[spec.name] = x
        elif spec.kind == "concat":
            skip = stash[spec.skip_of]
            if skip.shape[:2] != x.shape[:2]:
                raise DataError("skip and decoder activations disagree in size")
            x = np.concatenate([skip, x], axis=2)
        elif spec.kind == "softmax":
            if logits:
                break
            x = softmax(x)
    return x.astype(np.float32)


def param_count(cfg: UNetConfig) -> tuple:
    """(trainable, non_trainable) parameter counts.

    Batch-norm running statistics are the non-trainable share; everything
    else (conv weights/biases, BN scale/shift) trains.
    """
    trainable = frozen = 0
    for name, shape in weight_shapes(cfg).items():
        n = int(np.prod(shape))
        if name.endswith(".mean") or name.endswith(".var"):
            frozen += n
        else:
            trainable += n
    return trainable, frozen


def mac_count(cfg: UNetConfig, height: int, width: int) -> int:
    """Multiply-accumulate count for one forward pass.

    Convolutions and transposed convolutions count
    kh*kw*Cin*Cout*H_out*W_out; bias adds, batch norm, pooling, and softmax
    are excluded.
    """
    m = 1 << cfg.depth
    if height % m or width % m:
        raise DataError(f"spatial dims must be multiples of {m}")
    macs = 0
    h, w = height, width
    for spec in build_unet(cfg):
        if spec.kind == "conv3":
            macs += 9 * spec.cin * spec.cout * h * w
        elif spec.kind == "conv1":
            macs += spec.cin * spec.cout * h * w
        elif spec.kind == "pool":
            h, w = h // 2, w // 2
        elif spec.kind == "up":
            h, w = h * 2, w * 2
            macs += 4 * spec.cin * spec.cout * h * w
    return macs


# ---------------------------------------------------------------------------
# Weight files
# ---------------------------------------------------------------------------

def save_weights(path, weights: dict, metadata: dict = None) -> None:
    """Write a flat tensor dict plus string metadata as an HSWT file."""
    hswt.save_tensors(path, weights, metadata or {})


def load_weights(path) -> tuple:
    """Read an HSWT file back as (weights, metadata)."""
    return hswt.load_tensors(path)


def _cfg_meta(cfg: UNetConfig) -> dict:
    return {"in_bands": cfg.in_bands, "base": cfg.base, "depth": cfg.depth,
            "classes": cfg.classes, "patch": cfg.patch, "bn_eps": repr(cfg.bn_eps)}


def _cfg_from_meta(meta: dict) -> UNetConfig:
    try:
        return UNetConfig(in_bands=int(meta["in_bands"]), base=int(meta["base"]),
                          depth=int(meta["depth"]), classes=int(meta["classes"]),
                          patch=int(meta.get("patch", 128)),
                          bn_eps=float(meta.get("bn_eps", 1e-5)))
    except (KeyError, ValueError):
        raise WeightError("model file lacks a valid network configuration") from None


def save_float_model(path, cfg: UNetConfig, weights: dict, extra_meta: dict = None) -> None:
    """Write a float32 model (BN tensors included) as an HSWT file."""
    validate_weights(cfg, weights)
    meta = {"model": "unet_f32", **_cfg_meta(cfg), **(extra_meta or {})}
    tensors = {name: np.asarray(weights[name], dtype=np.float32)
               for name in weight_shapes(cfg)}
    save_weights(path, tensors, meta)


def load_float_model(path) -> tuple:
    tensors, meta = load_weights(path)
    if meta.get("model") != "unet_f32":
        raise WeightError(f"not a float model file (model={meta.get('model')!r})")
    cfg = _cfg_from_meta(meta)
    validate_weights(cfg, tensors)
    return cfg, tensors
