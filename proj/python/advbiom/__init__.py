"""Adversarial attacks on face and fingerprint matchers.

Images are float64 numpy arrays of shape (H, W) or (H, W, C) with values in [-1, 1].
"""

from ._core import (
    ConfigError,
    ToyEmbedder,
    cosine_similarity,
    fgsm,
    load_image,
    parse_config,
    pgd,
    read_report,
    run_cli,
    save_image,
    ssim,
    success_rate_impersonation,
    success_rate_obfuscation,
    tar_at_far,
    threshold_at_far,
    tps_displacement_field,
)

__all__ = [
    "ConfigError",
    "ToyEmbedder",
    "cosine_similarity",
    "fgsm",
    "load_image",
    "parse_config",
    "pgd",
    "read_report",
    "run_cli",
    "save_image",
    "ssim",
    "success_rate_impersonation",
    "success_rate_obfuscation",
    "tar_at_far",
    "threshold_at_far",
    "tps_displacement_field",
]
