"""Training side of the segmentation toolchain.

Fits U-Net and per-pixel MLP models on HSC cubes with paired PGM label maps
and exports HSWT weight files for the inference package. The two sides share
nothing but the file formats.
"""

from .data import (compute_class_weights, count_labels, patch_starts,
                   scan_pairs, split_pairs)
from .errors import (ConfigError, DataError, FormatError, HsitrainError,
                     NumericError)
from .formats import load_cube, load_labels, load_tensors, save_tensors
from .gradcheck import gradient_check, toy_setup
from .models import (Mlp, UNet, export_mlp, export_unet, init_weights,
                     load_into, mlp_tensors, unet_tensors)
from .train import SCHEMES, TrainConfig, build_model, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "FormatError", "HsitrainError", "NumericError",
    "Mlp", "SCHEMES", "TrainConfig", "UNet",
    "build_model", "compute_class_weights", "count_labels", "export_mlp",
    "export_unet", "gradient_check", "init_weights", "load_cube", "load_into",
    "load_labels", "load_tensors", "mlp_tensors", "patch_starts", "save_tensors",
    "scan_pairs", "split_pairs", "toy_setup", "train", "unet_tensors",
    "__version__",
]
