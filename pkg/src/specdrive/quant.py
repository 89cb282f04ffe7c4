"""Power-of-two INT8 quantization and integer-only inference.

Every tensor gets a single fraction-bit count f, so real value x is stored as
round(x * 2^f) in int8. Batch norms are folded into the preceding
convolutions first; activation ranges then come from a float calibration run
over sample inputs. Integer inference accumulates conv products in wide
integers and requantizes between layers with a rounding right shift, so the
whole pass is exactly reproducible.

Conventions:
  - fraction bits: f = floor(log2(127 / maxabs)), clamped to [-32, 32];
    an all-zero tensor gets f = 7
  - rounding: half away from zero, both when quantizing float values and
    when requantizing accumulators by a right shift
  - biases are int32 at f_weight + f_input
  - concatenation aligns both sides to the smaller fraction count
  - pooling and ReLU keep the fraction count unchanged
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hswt
from .errors import ConfigError, DataError, NumericError, WeightError
from .fcn import (
    UNetConfig,
    _cfg_from_meta,
    _cfg_meta,
    build_unet,
    conv2d,
    conv_transpose2d,
    maxpool2x2,
    softmax,
    validate_weights,
    weight_shapes,
)
from .hypercube import IGNORE_LABEL

QF_MIN, QF_MAX = -32, 32
QF_ZERO_TENSOR = 7


def qf_for(maxabs: float) -> int:
    """Fraction bits that map ``maxabs`` onto the int8 range."""
    if not np.isfinite(maxabs) or maxabs < 0:
        raise DataError(f"maxabs must be finite and >= 0, got {maxabs}")
    if maxabs == 0.0:
        return QF_ZERO_TENSOR
    f = int(np.floor(np.log2(127.0 / maxabs)))
    return int(np.clip(f, QF_MIN, QF_MAX))


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def quantize(x: np.ndarray, f: int) -> np.ndarray:
    """int8 code of ``x`` at f fraction bits, saturating at the type limits."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise DataError("cannot quantize non-finite values")
    q = round_half_away(x * np.float64(2.0) ** f)
    return np.clip(q, -128, 127).astype(np.int8)


def dequantize(q: np.ndarray, f: int) -> np.ndarray:
    return q.astype(np.float64) * np.float64(2.0) ** (-f)


def requantize(acc: np.ndarray, shift: int) -> np.ndarray:
    """Move an integer accumulator down by ``shift`` fraction bits.

    Positive shifts divide by 2^shift rounding halves away from zero;
    negative shifts multiply exactly.
    """
    acc = np.asarray(acc, dtype=np.int64)
    if shift > 0:
        half = np.int64(1) << (shift - 1)
        mag = (np.abs(acc) + half) >> shift
        return np.where(acc < 0, -mag, mag)
    if shift < 0:
        return acc << (-shift)
    return acc


# ---------------------------------------------------------------------------
# Batch-norm folding
# ---------------------------------------------------------------------------

def fold_batchnorm(cfg: UNetConfig, weights: dict) -> dict:
    """Fold inference batch norms into the preceding convolution.

    W' = W * g / sqrt(var + eps) per output channel and
    b' = s * (b - mean) + beta. The result holds only conv/up tensors.
    """
    validate_weights(cfg, weights)
    folded = {}
    for spec in build_unet(cfg):
        if spec.kind == "conv3":
            bn = spec.name.replace(".conv", ".bn")
            g = weights[bn + ".gamma"].astype(np.float64)
            beta = weights[bn + ".beta"].astype(np.float64)
            mu = weights[bn + ".mean"].astype(np.float64)
            var = weights[bn + ".var"].astype(np.float64)
            s = g / np.sqrt(var + cfg.bn_eps)
            w = weights[spec.name + ".w"].astype(np.float64) * s[:, None, None, None]
            b = s * (weights[spec.name + ".b"].astype(np.float64) - mu) + beta
            folded[spec.name + ".w"] = w.astype(np.float32)
            folded[spec.name + ".b"] = b.astype(np.float32)
        elif spec.kind in ("conv1", "up"):
            folded[spec.name + ".w"] = np.array(weights[spec.name + ".w"], dtype=np.float32)
            folded[spec.name + ".b"] = np.array(weights[spec.name + ".b"], dtype=np.float32)
    return folded


def folded_weight_shapes(cfg: UNetConfig) -> dict:
    return {n: s for n, s in weight_shapes(cfg).items()
            if ".bn" not in n}


def _check_folded(cfg: UNetConfig, weights: dict) -> None:
    if any(".bn" in name for name in weights):
        raise ConfigError("weights still carry batch-norm tensors; fold them first")
    want = folded_weight_shapes(cfg)
    missing = sorted(set(want) - set(weights))
    if missing:
        raise WeightError(f"missing tensors: {', '.join(missing[:5])}")
    for name, shape in want.items():
        if tuple(weights[name].shape) != shape:
            raise WeightError(f"{name}: shape {tuple(weights[name].shape)} != {shape}")


def folded_forward(cfg: UNetConfig, weights: dict, x: np.ndarray,
                   record: dict = None, logits: bool = False) -> np.ndarray:
    """Float forward through the folded graph; optionally records per-point
    absolute maxima for calibration."""
    _check_folded(cfg, weights)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != cfg.in_bands:
        raise DataError(f"input must be (H, W, {cfg.in_bands}), got {x.shape}")
    m = 1 << cfg.depth
    if x.shape[0] % m or x.shape[1] % m:
        raise DataError(f"spatial dims must be multiples of {m}, got {x.shape[:2]}")

    def note(point, arr):
        if record is not None:
            v = float(np.abs(arr).max()) if arr.size else 0.0
            record[point] = max(record.get(point, 0.0), v)

    note("input", x)
    stash = {}
    pending = ""
    for spec in build_unet(cfg):
        if spec.kind == "bn":
            continue
        if spec.kind in ("conv3", "conv1"):
            pad = 1 if spec.kind == "conv3" else 0
            x = conv2d(x, weights[spec.name + ".w"], weights[spec.name + ".b"],
                       padding=pad)
            if spec.name == "final":
                note("final", x)
            else:
                pending = spec.name
        elif spec.kind == "up":
            x = conv_transpose2d(x, weights[spec.name + ".w"], weights[spec.name + ".b"])
            note(spec.name, x)
        elif spec.kind == "relu":
            x = np.maximum(x, 0.0)
            note(pending, x)
        elif spec.kind == "pool":
            x = maxpool2x2(x)
        elif spec.kind == "save":
            stash[spec.name] = x
        elif spec.kind == "concat":
            x = np.concatenate([stash[spec.skip_of], x], axis=2)
        elif spec.kind == "softmax":
            if logits:
                break
            x = softmax(x)
    return x.astype(np.float32)


# ---------------------------------------------------------------------------
# Calibration and weight quantization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantParams:
    """Fraction-bit assignment for the whole folded graph.

    ``weight_qf`` keys tensor names (name.w, name.b); ``act_qf`` keys the
    activation points: "input", every conv/up layer name (range taken
    post-ReLU where one follows), and "final" for the logits.
    """

    weight_qf: dict = field(default_factory=dict)
    act_qf: dict = field(default_factory=dict)


def calibrate(cfg: UNetConfig, folded_weights: dict, samples) -> QuantParams:
    """Measure fraction bits for weights and activations.

    Weight ranges are exact per-tensor absolute maxima; activation ranges are
    absolute maxima over a float forward pass of every calibration sample.
    Biases land at f_weight + f_input of their layer.
    """
    record = {}
    count = 0
    for x in samples:
        folded_forward(cfg, folded_weights, x, record=record, logits=True)
        count += 1
    if count == 0:
        raise ConfigError("calibration needs at least one sample")
    act_qf = {point: qf_for(v) for point, v in record.items()}

    in_fs = _input_fs(cfg, act_qf)
    weight_qf = {}
    for spec in build_unet(cfg):
        if spec.kind not in ("conv3", "conv1", "up"):
            continue
        w = folded_weights[spec.name + ".w"]
        fw = qf_for(float(np.abs(w).max()) if w.size else 0.0)
        weight_qf[spec.name + ".w"] = fw
        weight_qf[spec.name + ".b"] = fw + in_fs[spec.name]
    return QuantParams(weight_qf, act_qf)


def _input_fs(cfg: UNetConfig, act_qf: dict) -> dict:
    """Fraction bits feeding each weighted layer, derived by a graph walk."""
    fs = {}
    try:
        cur = act_qf["input"]
        stash = {}
        for spec in build_unet(cfg):
            if spec.kind in ("conv3", "conv1", "up"):
                fs[spec.name] = cur
                cur = act_qf["final" if spec.name == "final" else spec.name]
            elif spec.kind == "save":
                stash[spec.name] = cur
            elif spec.kind == "concat":
                cur = min(stash[spec.skip_of], cur)
    except KeyError as exc:
        raise ConfigError(f"calibration lacks activation point {exc}") from None
    return fs


def quantize_weights(cfg: UNetConfig, folded_weights: dict,
                     params: QuantParams) -> dict:
    """int8 weights and int32 biases for the folded graph.

    Every tensor must have its fraction bits in ``params``; a missing entry
    is a config error. Biases sit at f_weight + f_input so the integer
    accumulator needs no extra alignment.
    """
    _check_folded(cfg, folded_weights)
    qweights = {}
    for spec in build_unet(cfg):
        if spec.kind not in ("conv3", "conv1", "up"):
            continue
        for leaf in (".w", ".b"):
            if spec.name + leaf not in params.weight_qf:
                raise ConfigError(f"no fraction bits for tensor {spec.name + leaf}")
        w = folded_weights[spec.name + ".w"].astype(np.float64)
        b = folded_weights[spec.name + ".b"].astype(np.float64)
        qweights[spec.name + ".w"] = quantize(w, params.weight_qf[spec.name + ".w"])
        fb = params.weight_qf[spec.name + ".b"]
        qb = round_half_away(b * np.float64(2.0) ** fb)
        if np.abs(qb).max(initial=0.0) >= 2 ** 31:
            raise NumericError(f"{spec.name}.b overflows int32 at {fb} fraction bits")
        qweights[spec.name + ".b"] = qb.astype(np.int32)
    return qweights


@dataclass(frozen=True)
class QuantModel:
    cfg: UNetConfig
    weights: dict  # name.w int8, name.b int32
    params: QuantParams


def quantize_model(cfg: UNetConfig, weights: dict, samples) -> QuantModel:
    """Fold, calibrate, and quantize a float model in one step."""
    folded = fold_batchnorm(cfg, weights)
    params = calibrate(cfg, folded, samples)
    qweights = quantize_weights(cfg, folded, params)
    return QuantModel(cfg, qweights, params)


# ---------------------------------------------------------------------------
# Integer inference
# ---------------------------------------------------------------------------

def _int_conv(x, w, b, padding):
    """Exact integer convolution via float64 products (all < 2^53)."""
    out = conv2d(x.astype(np.float64), w.astype(np.float64), b.astype(np.float64),
                 padding=padding)
    return np.rint(out).astype(np.int64)


def _int_up(x, w, b):
    out = conv_transpose2d(x.astype(np.float64), w.astype(np.float64),
                           b.astype(np.float64))
    return np.rint(out).astype(np.int64)


def _saturate(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -128, 127).astype(np.int8)


def forward_quantized(qm: QuantModel, x: np.ndarray, logits: bool = False) -> np.ndarray:
    """Integer forward pass.

    The input is quantized once; everything after that is int arithmetic
    until the logits are dequantized for the softmax. With ``logits`` the
    dequantized float32 logits come back instead of probabilities.
    """
    cfg = qm.cfg
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != cfg.in_bands:
        raise DataError(f"input must be (H, W, {cfg.in_bands}), got {x.shape}")
    m = 1 << cfg.depth
    if x.shape[0] % m or x.shape[1] % m:
        raise DataError(f"spatial dims must be multiples of {m}, got {x.shape[:2]}")
    act_qf, weight_qf = qm.params.act_qf, qm.params.weight_qf

    if "input" not in act_qf:
        raise WeightError("quantized model lacks input fraction bits")
    cur_f = act_qf["input"]
    a = quantize(x, cur_f)
    stash = {}
    for spec in build_unet(cfg):
        if spec.kind == "bn":
            continue
        if spec.kind in ("conv3", "conv1", "up"):
            for leaf in (".w", ".b"):
                if spec.name + leaf not in weight_qf:
                    raise WeightError(f"no fraction bits for tensor {spec.name + leaf}")
            point = "final" if spec.name == "final" else spec.name
            if point not in act_qf:
                raise WeightError(f"no fraction bits for activation {point}")
            if spec.kind == "up":
                acc = _int_up(a, qm.weights[spec.name + ".w"], qm.weights[spec.name + ".b"])
            else:
                pad = 1 if spec.kind == "conv3" else 0
                acc = _int_conv(a, qm.weights[spec.name + ".w"],
                                qm.weights[spec.name + ".b"], pad)
            out_f = act_qf[point]
            shift = cur_f + weight_qf[spec.name + ".w"] - out_f
            a = _saturate(requantize(acc, shift))
            cur_f = out_f
        elif spec.kind == "relu":
            a = np.maximum(a, 0)
        elif spec.kind == "pool":
            a = maxpool2x2(a)
        elif spec.kind == "save":
            stash[spec.name] = (a, cur_f)
        elif spec.kind == "concat":
            skip, skip_f = stash[spec.skip_of]
            out_f = min(skip_f, cur_f)
            skip = _saturate(requantize(skip.astype(np.int64), skip_f - out_f))
            a = _saturate(requantize(a.astype(np.int64), cur_f - out_f))
            a = np.concatenate([skip, a], axis=2)
            cur_f = out_f
        elif spec.kind == "softmax":
            z = dequantize(a, cur_f)
            if logits:
                return z.astype(np.float32)
            return softmax(z).astype(np.float32)
    raise NumericError("graph ended without a softmax head")


def agreement(pred_a: np.ndarray, pred_b: np.ndarray,
              ignore: int = IGNORE_LABEL) -> float:
    """Fraction of non-ignore pixels where two label maps agree.

    Pixels carrying the ignore value in either map are left out of both the
    numerator and the denominator; an all-ignore pair counts as full
    agreement.
    """
    a = np.asarray(pred_a)
    b = np.asarray(pred_b)
    if a.shape != b.shape:
        raise DataError(f"label maps differ in shape: {a.shape} vs {b.shape}")
    keep = (a != ignore) & (b != ignore)
    n = int(keep.sum())
    if n == 0:
        return 1.0
    return float((a[keep] == b[keep]).sum() / n)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def save_quant_model(path, qm: QuantModel, extra_meta: dict = None) -> None:
    """Write an int8 model; fraction bits travel as qf.* metadata."""
    meta = {"model": "unet_int8", **_cfg_meta(qm.cfg), **(extra_meta or {})}
    for name, f in sorted(qm.params.weight_qf.items()):
        meta[f"qf.{name}"] = f
    for point, f in sorted(qm.params.act_qf.items()):
        meta[f"qf.act.{point}"] = f
    tensors = {}
    for spec in build_unet(qm.cfg):
        if spec.kind in ("conv3", "conv1", "up"):
            tensors[spec.name + ".w"] = qm.weights[spec.name + ".w"]
            tensors[spec.name + ".b"] = qm.weights[spec.name + ".b"]
    hswt.save_tensors(path, tensors, meta)


def load_quant_model(path) -> QuantModel:
    tensors, meta = hswt.load_tensors(path)
    if meta.get("model") != "unet_int8":
        raise WeightError(f"not an int8 model file (model={meta.get('model')!r})")
    cfg = _cfg_from_meta(meta)
    weights = {}
    weight_qf = {}
    act_qf = {}
    for spec in build_unet(cfg):
        if spec.kind not in ("conv3", "conv1", "up"):
            continue
        for leaf, dt in ((".w", np.int8), (".b", np.int32)):
            name = spec.name + leaf
            if name not in tensors:
                raise WeightError(f"missing tensor {name}")
            if tensors[name].dtype != dt:
                raise WeightError(f"{name}: dtype {tensors[name].dtype} != {np.dtype(dt)}")
            weights[name] = tensors[name]
            try:
                weight_qf[name] = int(meta[f"qf.{name}"])
            except (KeyError, ValueError):
                raise WeightError(f"missing fraction bits for {name}") from None
        point = "final" if spec.name == "final" else spec.name
        try:
            act_qf[point] = int(meta[f"qf.act.{point}"])
        except (KeyError, ValueError):
            raise WeightError(f"missing activation fraction bits for {point}") from None
    try:
        act_qf["input"] = int(meta["qf.act.input"])
    except (KeyError, ValueError):
        raise WeightError("missing activation fraction bits for input") from None
    qm = QuantModel(cfg, weights, QuantParams(weight_qf, act_qf))
    shapes = folded_weight_shapes(cfg)
    for name, shape in shapes.items():
        if tuple(weights[name].shape) != shape:
            raise WeightError(f"{name}: shape {tuple(weights[name].shape)} != {shape}")
    return qm


def load_any_model(path):
    """Load either model flavor; returns ("f32", (cfg, weights)) or ("int8", QuantModel)."""
    from .fcn import load_float_model
    _, meta = hswt.load_tensors(path)
    kind = meta.get("model")
    if kind == "unet_f32":
        return "f32", load_float_model(path)
    if kind == "unet_int8":
        return "int8", load_quant_model(path)
    raise WeightError(f"unknown model kind {kind!r}")
