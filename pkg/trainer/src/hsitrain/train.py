"""Training loop: weighted cross entropy over patched cubes, HSWT export.

Recipe (the consumer contract does not constrain it): adaptive-moment
gradient descent at lr 1e-3, batch 16, horizontal flips as the only
augmentation, label 255 ignored everywhere. Same seed and config give a
byte-identical exported checkpoint.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .data import (DEFAULT_SPLIT, compute_class_weights, load_pair,
                   patch_starts, scan_pairs, split_pairs)
from .errors import ConfigError, DataError, NumericError
from .models import Mlp, UNet, export_mlp, export_unet, init_weights

SCHEMES = {"three_class": 3, "five_class": 5}


@dataclass(frozen=True)
class TrainConfig:
    model: str = "unet"
    scheme: str = "three_class"
    epochs: int = 50
    batch: int = 16
    lr: float = 1e-3
    seed: int = 0
    split: tuple = DEFAULT_SPLIT
    patch: int = 128
    overlap: int = 32
    base: int = 8
    depth: int = 2
    hidden: tuple = (25, 100, 100)
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.model not in ("unet", "mlp"):
            raise ConfigError(f"unknown model '{self.model}'")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme '{self.scheme}'")
        if self.epochs < 1 or self.batch < 1:
            raise ConfigError("epochs and batch must be positive")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ConfigError("learning rate must be positive and finite")
        split = tuple(float(r) for r in self.split)
        if len(split) != 3 or any(r < 0 for r in split):
            raise ConfigError("split needs three non-negative ratios")
        if abs(sum(split) - 1.0) > 1e-6:
            raise ConfigError(f"split ratios sum to {sum(split)}, expected 1")
        object.__setattr__(self, "split", split)
        if not 1 <= self.depth <= 4:
            raise ConfigError("depth must be between 1 and 4")
        if self.patch < 1 or self.patch % (1 << self.depth):
            raise ConfigError(f"patch must be a positive multiple of {1 << self.depth}")
        if not 0 <= self.overlap < self.patch:
            raise ConfigError("overlap must lie in [0, patch)")
        if self.base < 1:
            raise ConfigError("base channels must be positive")
        hidden = tuple(int(h) for h in self.hidden)
        if self.model == "mlp" and (not hidden or any(h < 1 for h in hidden)):
            raise ConfigError("hidden sizes must be positive")
        object.__setattr__(self, "hidden", hidden)

    @property
    def classes(self) -> int:
        return SCHEMES[self.scheme]


def _load_split(pairs) -> list:
    out = [load_pair(p) for p in pairs]
    bands = {cube.shape[2] for cube, _ in out}
    if len(bands) > 1:
        raise DataError(f"cubes disagree on band count: {sorted(bands)}")
    return out


def _unet_patches(frames, patch: int, stride: int) -> tuple:
    xs, ys = [], []
    for cube, labels in frames:
        chw = cube.transpose(2, 0, 1)
        for r in patch_starts(cube.shape[0], patch, stride):
            for c in patch_starts(cube.shape[1], patch, stride):
                xs.append(chw[:, r:r + patch, c:c + patch])
                ys.append(labels[r:r + patch, c:c + patch])
    x = np.ascontiguousarray(np.stack(xs), dtype=np.float32)
    y = np.stack(ys).astype(np.int64)
    return x, y


def _mlp_pixels(frames) -> tuple:
    xs, ys = [], []
    for cube, labels in frames:
        keep = labels != 255
        xs.append(cube[keep])
        ys.append(labels[keep])
    x = np.concatenate(xs).astype(np.float32)
    y = np.concatenate(ys).astype(np.int64)
    if not len(y):
        raise ConfigError("training split has no labeled pixels")
    return x, y


def _val_accuracy(model, frames, cfg: TrainConfig) -> float:
    """Overall accuracy over full validation frames, label 255 excluded."""
    model.eval()
    correct = total = 0
    with torch.no_grad():
        for cube, labels in frames:
            if cfg.model == "unet":
                m = 1 << cfg.depth
                h = cube.shape[0] - cube.shape[0] % m
                w = cube.shape[1] - cube.shape[1] % m
                x = torch.from_numpy(
                    np.ascontiguousarray(cube[:h, :w].transpose(2, 0, 1))[None])
                pred = model(x).argmax(dim=1).numpy()[0]
                lab = labels[:h, :w]
            else:
                x = torch.from_numpy(cube.reshape(-1, cube.shape[2]).copy())
                pred = model(x).argmax(dim=1).numpy().reshape(labels.shape)
                lab = labels
            keep = lab != 255
            correct += int((pred[keep] == lab[keep]).sum())
            total += int(keep.sum())
    if not total:
        raise DataError("validation split has no labeled pixels")
    return correct / total


def build_model(cfg: TrainConfig, bands: int):
    if cfg.model == "unet":
        model = UNet(in_bands=bands, base=cfg.base, depth=cfg.depth,
                     classes=cfg.classes, patch=cfg.patch, bn_eps=cfg.bn_eps)
    else:
        model = Mlp((bands, *cfg.hidden, cfg.classes))
    init_weights(model, cfg.seed)
    return model


def train(data_dir, cfg: TrainConfig, out_path, log_path=None) -> dict:
    """Fit on <data_dir>, export HSWT to <out_path>, return the run log."""
    pairs = scan_pairs(data_dir)
    train_pairs, val_pairs, test_pairs = split_pairs(pairs, cfg.seed, cfg.split)
    if not train_pairs or not val_pairs:
        raise ConfigError(f"{len(pairs)} pairs leave an empty train or val split")

    train_frames = _load_split(train_pairs)
    val_frames = _load_split(val_pairs)
    bands = train_frames[0][0].shape[2]
    if any(c.shape[2] != bands for c, _ in val_frames):
        raise DataError("validation cubes disagree with training band count")

    weights = compute_class_weights([lab for _, lab in train_frames], cfg.classes)
    w = torch.from_numpy(weights.astype(np.float32))

    torch.manual_seed(cfg.seed)
    model = build_model(cfg, bands)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    if cfg.model == "unet":
        x_all, y_all = _unet_patches(train_frames, cfg.patch, cfg.patch - cfg.overlap)
    else:
        x_all, y_all = _mlp_pixels(train_frames)

    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(len(x_all))
        losses = []
        for lo in range(0, len(order), cfg.batch):
            idx = order[lo:lo + cfg.batch]
            xb = torch.from_numpy(x_all[idx])
            yb = torch.from_numpy(y_all[idx])
            if cfg.model == "unet":
                flip = torch.from_numpy(rng.random(len(idx)) < 0.5)
                xb[flip] = xb[flip].flip(-1)
                yb[flip] = yb[flip].flip(-1)
            loss = F.cross_entropy(model(xb), yb, weight=w, ignore_index=255)
            if not torch.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        history.append({"epoch": epoch,
                        "train_loss": float(np.mean(losses)),
                        "val_accuracy": _val_accuracy(model, val_frames, cfg)})

    model.eval()
    if cfg.model == "unet":
        export_unet(out_path, model)
    else:
        export_mlp(out_path, model)

    config = asdict(cfg)
    config["split"] = list(cfg.split)
    config["hidden"] = list(cfg.hidden)
    log = {"config": config, "bands": bands,
           "class_weights": [float(v) for v in weights],
           "dataset": {"total": len(pairs), "train": len(train_pairs),
                       "val": len(val_pairs), "test": len(test_pairs)},
           "weights_file": str(out_path), "epochs": history}
    if log_path is not None:
        with open(log_path, "w") as fh:
            json.dump(log, fh, indent=2)
            fh.write("\n")
    return log
