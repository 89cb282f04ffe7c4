"""Snapshot-mosaic hyperspectral segmentation pipeline."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    FormatError,
    NumericError,
    SpecdriveError,
    WeightError,
)
from .hypercube import (
    CalibrationSet,
    ClassScheme,
    HyperCube,
    IGNORE_LABEL,
    LabelMap,
    RawMosaicFrame,
    Stage,
    five_class_scheme,
    load_cube,
    load_labels,
    load_raw,
    remap_labels,
    save_cube,
    save_labels,
    save_raw,
    scheme_by_name,
    three_class_scheme,
)
from .scene import SceneSpec, SynthScene, make_signatures, synth_scene
# the preprocess() convenience stays on the submodule so the module name
# itself is not shadowed
from .preprocess import (
    PreprocessConfig,
    StageTiming,
    align_bands,
    crop,
    demosaic,
    median_filter,
    normalize,
    reflectance_correct,
    run_pipeline,
)
from .patchwork import PatchGrid, argmax_map, extract_patches, grid_starts, plan_grid, stitch
from .fcn import (
    UNetConfig,
    conv2d,
    forward,
    init_weights,
    load_float_model,
    load_weights,
    mac_count,
    param_count,
    save_float_model,
    save_weights,
    softmax,
)
from .spectral import (
    ElmModel,
    MlpConfig,
    PcaBasis,
    elm_predict,
    elm_train,
    mlp_forward,
    mlp_init_weights,
    pca_fit,
    pca_project,
    select_bands,
)
from .quant import (
    QuantModel,
    QuantParams,
    agreement,
    calibrate,
    fold_batchnorm,
    forward_quantized,
    quantize_model,
    quantize_weights,
)
# evaluate() itself stays on the submodule so the module name is not shadowed
from .evaluate import (
    ClassStats,
    MetricsReport,
    class_stats,
    confusion,
    jm_distance,
    jm_matrix,
    metrics,
)
from .bench import BenchReport, fps_stats, run_bench
from .runner import auto_grid, segment_cube
