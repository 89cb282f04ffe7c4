"""Per-pixel spectral baselines: MLP, ELM probe, band selection, and PCA.

These classifiers and reducers treat each pixel's 25-band spectrum
independently, so they need no spatial context and run on flattened
(N, bands) rows as happily as on full cubes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import hswt
from .errors import ConfigError, DataError, NumericError, WeightError
from .fcn import relu, softmax


# ---------------------------------------------------------------------------
# Per-pixel MLP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpConfig:
    """Fully connected per-pixel classifier; sizes include the input width.

    Hidden layers are ReLU-activated; the head is linear (softmax applied at
    inference time).
    """

    sizes: tuple = (25, 25, 100, 100, 5)

    def __post_init__(self):
        if len(self.sizes) < 2 or any(s < 1 for s in self.sizes):
            raise ConfigError("sizes must list input, hidden, and output widths")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @property
    def in_bands(self) -> int:
        return self.sizes[0]

    @property
    def classes(self) -> int:
        return self.sizes[-1]


def mlp_weight_shapes(cfg: MlpConfig) -> dict:
    shapes = {}
    for i in range(len(cfg.sizes) - 1):
        shapes[f"fc{i + 1}.w"] = (cfg.sizes[i + 1], cfg.sizes[i])
        shapes[f"fc{i + 1}.b"] = (cfg.sizes[i + 1],)
    return shapes


def mlp_init_weights(cfg: MlpConfig, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in mlp_weight_shapes(cfg).items():
        if name.endswith(".w"):
            weights[name] = rng.normal(0.0, np.sqrt(2.0 / shape[1]), shape).astype(np.float32)
        else:
            weights[name] = np.zeros(shape, dtype=np.float32)
    return weights


def mlp_validate_weights(cfg: MlpConfig, weights: dict) -> None:
    want = mlp_weight_shapes(cfg)
    missing = sorted(set(want) - set(weights))
    if missing:
        raise WeightError(f"missing tensors: {', '.join(missing[:5])}")
    for name, shape in want.items():
        if tuple(weights[name].shape) != shape:
            raise WeightError(f"{name}: shape {tuple(weights[name].shape)} != {shape}")


def mlp_forward(cfg: MlpConfig, weights: dict, x: np.ndarray,
                logits: bool = False) -> np.ndarray:
    """Classify spectra independently; x is (..., in_bands)."""
    mlp_validate_weights(cfg, weights)
    x = np.asarray(x)
    if x.shape[-1] != cfg.in_bands:
        raise DataError(f"input feature dim {x.shape[-1]} != {cfg.in_bands}")
    h = x.astype(np.float64)
    n = len(cfg.sizes) - 1
    for i in range(n):
        w = weights[f"fc{i + 1}.w"].astype(np.float64)
        b = weights[f"fc{i + 1}.b"].astype(np.float64)
        h = h @ w.T + b
        if i < n - 1:
            h = relu(h)
    if not logits:
        h = softmax(h)
    return h.astype(np.float32)


def mlp_param_count(cfg: MlpConfig) -> int:
    return sum(int(np.prod(s)) for s in mlp_weight_shapes(cfg).values())


def mlp_mac_count(cfg: MlpConfig, pixels: int = 1) -> int:
    """MACs to classify ``pixels`` spectra; bias adds excluded."""
    per_px = sum(cfg.sizes[i] * cfg.sizes[i + 1] for i in range(len(cfg.sizes) - 1))
    return per_px * pixels


def save_mlp_model(path, cfg: MlpConfig, weights: dict, extra_meta: dict = None) -> None:
    mlp_validate_weights(cfg, weights)
    meta = {"model": "mlp_f32", "sizes": ",".join(str(s) for s in cfg.sizes),
            "activation": "relu", **(extra_meta or {})}
    tensors = {name: np.asarray(weights[name], dtype=np.float32)
               for name in mlp_weight_shapes(cfg)}
    hswt.save_tensors(path, tensors, meta)


def load_mlp_model(path) -> tuple:
    tensors, meta = hswt.load_tensors(path)
    if meta.get("model") != "mlp_f32":
        raise WeightError(f"not an MLP model file (model={meta.get('model')!r})")
    try:
        sizes = tuple(int(s) for s in meta["sizes"].split(","))
    except (KeyError, ValueError):
        raise WeightError("model file lacks valid layer sizes") from None
    cfg = MlpConfig(sizes)
    mlp_validate_weights(cfg, tensors)
    return cfg, tensors


# ---------------------------------------------------------------------------
# Extreme learning machine probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ElmModel:
    hidden: int
    ridge: float
    seed: int
    w_in: np.ndarray  # (hidden, features)
    b_in: np.ndarray  # (hidden,)
    w_out: np.ndarray  # (hidden, classes)

    @property
    def classes(self) -> int:
        return self.w_out.shape[1]


def _elm_hidden(w_in, b_in, x):
    return expit(x @ w_in.T + b_in)


def elm_train(x: np.ndarray, labels: np.ndarray, hidden: int,
              ridge: float = 1e-3, seed: int = 0,
              num_classes: int = None) -> ElmModel:
    """Fit the output layer of a random-projection network in closed form.

    Input weights and biases are drawn once from uniform(-1, 1) with the
    given seed; the hidden layer is sigmoid; the linear readout solves the
    ridge system (H'H + ridge I) W = H'Y against one-hot targets. With
    ridge 0 a rank-deficient H raises NumericError.
    """
    if hidden < 1:
        raise ConfigError("hidden must be >= 1")
    if ridge < 0:
        raise ConfigError("ridge must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != labels.shape[0]:
        raise DataError("x must be (N, features) aligned with labels")
    if labels.min() < 0:
        raise DataError("labels out of range")
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    elif labels.max() >= num_classes:
        raise DataError("labels out of range")
    if x.shape[0] < num_classes:
        raise DataError(f"{x.shape[0]} samples cannot cover {num_classes} classes")
    rng = np.random.default_rng(seed)
    w_in = rng.uniform(-1.0, 1.0, (hidden, x.shape[1]))
    b_in = rng.uniform(-1.0, 1.0, hidden)
    h = _elm_hidden(w_in, b_in, x)
    y = np.zeros((x.shape[0], num_classes), dtype=np.float64)
    y[np.arange(x.shape[0]), labels] = 1.0
    gram = h.T @ h + ridge * np.eye(hidden)
    rhs = h.T @ y
    if ridge == 0.0 and np.linalg.matrix_rank(gram) < hidden:
        raise NumericError("hidden Gram matrix is singular; set ridge > 0")
    try:
        w_out = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        raise NumericError("hidden Gram matrix is singular; set ridge > 0") from None
    return ElmModel(hidden, ridge, seed, w_in, b_in, w_out)


def elm_scores(model: ElmModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return _elm_hidden(model.w_in, model.b_in, x) @ model.w_out


def elm_predict(model: ElmModel, x: np.ndarray) -> np.ndarray:
    """Predicted class per row; ties go to the lowest index."""
    return np.argmax(elm_scores(model, x), axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# Band selection and PCA
# ---------------------------------------------------------------------------

def select_bands(data: np.ndarray, indices) -> np.ndarray:
    """Keep the listed bands of a (..., B) array, in the order given.

    Indices must be distinct and in range; selecting all bands in their
    natural order is the identity.
    """
    data = np.asarray(data)
    bands = data.shape[-1]
    idx = [int(i) for i in indices]
    if not idx:
        raise ConfigError("need at least one band index")
    if len(set(idx)) != len(idx):
        raise ConfigError("band indices must be distinct")
    if min(idx) < 0 or max(idx) >= bands:
        raise ConfigError(f"band indices must lie in 0..{bands - 1}")
    return data[..., idx]


@dataclass(frozen=True)
class PcaBasis:
    """Full principal-axis basis of a spectrum population."""

    mean: np.ndarray  # (features,)
    components: np.ndarray  # (features, features), orthonormal rows
    explained_variance: np.ndarray  # (features,), non-increasing


def pca_fit(x: np.ndarray) -> PcaBasis:
    """All principal components by eigendecomposition of the covariance.

    Components are ordered by non-increasing variance; each one's sign is
    fixed so its largest-magnitude coefficient is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("need at least two sample rows")
    mean = x.mean(axis=0)
    cov = np.cov(x, rowvar=False, ddof=1).reshape(x.shape[1], x.shape[1])
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    comps = evecs[:, order].T.copy()
    for i in range(comps.shape[0]):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    var = np.maximum(evals[order], 0.0)
    return PcaBasis(mean, comps, var)


def pca_project(data: np.ndarray, basis: PcaBasis, k: int) -> np.ndarray:
    """Project (..., features) data onto the first k principal axes."""
    data = np.asarray(data, dtype=np.float64)
    features = basis.mean.shape[0]
    if data.shape[-1] != features:
        raise DataError(f"feature dim {data.shape[-1]} != {features}")
    if not 1 <= k <= features:
        raise ConfigError(f"k must be in 1..{features}")
    return (data - basis.mean) @ basis.components[:k].T
