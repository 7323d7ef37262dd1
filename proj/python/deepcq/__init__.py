"""Compression-quality surrogate toolkit (Python bindings)."""

from ._deepcq import (
    DEFAULT_SEED,
    DeepcqError,
    Model,
    compress_roundtrip,
    generate_synthetic,
    load_model,
    load_raw,
    mape,
    model_metadata,
    percentage_error,
    psnr,
    run_cli,
    ssim3d,
)

__all__ = [
    "DEFAULT_SEED",
    "DeepcqError",
    "Model",
    "compress_roundtrip",
    "generate_synthetic",
    "load_model",
    "load_raw",
    "mape",
    "model_metadata",
    "percentage_error",
    "psnr",
    "run_cli",
    "ssim3d",
]
