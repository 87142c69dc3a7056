"""Time-series prompts, tokenizers and a small transformer forecaster."""

from ._ltsm import (
    Backbone,
    LtsmError,
    Quantizer,
    chronological_split,
    downsample_indices,
    extract_features,
    feature_names,
    feature_value,
    fit_quantizer,
    generate_synthetic,
    load_csv,
    mae,
    mse,
    patchify,
    run,
    standardized_prompts,
    window_count,
)

__all__ = [
    "Backbone",
    "LtsmError",
    "Quantizer",
    "chronological_split",
    "downsample_indices",
    "extract_features",
    "feature_names",
    "feature_value",
    "fit_quantizer",
    "generate_synthetic",
    "load_csv",
    "mae",
    "mse",
    "patchify",
    "run",
    "standardized_prompts",
    "window_count",
]
