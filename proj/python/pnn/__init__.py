"""Perturbed neural networks: probabilistic trust intervals around trained
weights, sibling sampling, agreement scoring and OOD detection metrics."""

from ._core import (
    Model,
    auroc,
    aupr,
    classify_ood,
    ensemble_kl_score,
    entropy_score,
    fpr_at_tpr,
    gaussian_images,
    load_idx_images,
    load_idx_labels,
    max_avg_softmax_score,
    measure_m,
    synth_digits,
    synth_garments,
)

__all__ = [
    "Model",
    "auroc",
    "aupr",
    "classify_ood",
    "ensemble_kl_score",
    "entropy_score",
    "fpr_at_tpr",
    "gaussian_images",
    "load_idx_images",
    "load_idx_labels",
    "max_avg_softmax_score",
    "measure_m",
    "synth_digits",
    "synth_garments",
]
