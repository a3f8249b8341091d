"""Variational group NMF for multi-subject EEG spectral features."""

from ._bgnmf import (
    FitResult,
    Posterior,
    evaluate,
    fit,
    gig_moments,
    learning_curve,
    log_bessel_k,
    predict,
    sample_dataset,
)

__all__ = [
    "FitResult",
    "Posterior",
    "evaluate",
    "fit",
    "gig_moments",
    "learning_curve",
    "log_bessel_k",
    "predict",
    "sample_dataset",
]
