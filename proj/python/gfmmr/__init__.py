"""Generalized finite mixtures of multivariate regressions."""

from ._gfmmr import (
    ConvergenceError,
    DataError,
    GfmmrError,
    NumericalError,
    UsageError,
    __version__,
    affinity_propagation,
    e_step,
    fit,
    log_likelihood,
    match_clusters,
    pattern_labels,
    pipeline,
    plaid,
    quality,
    select_k,
    simulate,
)

__all__ = [
    "ConvergenceError",
    "DataError",
    "GfmmrError",
    "NumericalError",
    "UsageError",
    "__version__",
    "affinity_propagation",
    "e_step",
    "fit",
    "log_likelihood",
    "match_clusters",
    "pattern_labels",
    "pipeline",
    "plaid",
    "quality",
    "select_k",
    "simulate",
]
