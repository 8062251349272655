"""Episodic image-label sequence lab.

Data generators with controllable distributional structure (burstiness,
Zipfian class marginals, label multiplicity, within-class variation), small
sequence models (causal transformer, vanilla RNN, LSTM) on a from-scratch
autodiff core, and the training/evaluation harness around them.
"""

from iclab._core import (
    ConfigError,
    Episode,
    Generator,
    LoadError,
    Model,
    NumericError,
    Registry,
    UsageError,
    __version__,
    chi_square_marginal,
    emit_plots,
    evaluate_checkpoint,
    fit_zipf_exponent,
    full_multiclass_accuracy,
    lr_at,
    restricted_two_way_accuracy,
    run_train,
    validate_stream,
    zipf_weights,
)

__all__ = [
    "ConfigError",
    "Episode",
    "Generator",
    "LoadError",
    "Model",
    "NumericError",
    "Registry",
    "UsageError",
    "__version__",
    "chi_square_marginal",
    "emit_plots",
    "evaluate_checkpoint",
    "fit_zipf_exponent",
    "full_multiclass_accuracy",
    "lr_at",
    "restricted_two_way_accuracy",
    "run_train",
    "validate_stream",
    "zipf_weights",
]
