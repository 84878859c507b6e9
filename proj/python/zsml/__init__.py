"""Meta-learned adversarial feature synthesis for zero-shot classification."""

from ._zsml import (
    DatasetBundle,
    EpisodeMode,
    EpisodeSpec,
    HyperParams,
    Model,
    SyntheticSpec,
    eval_gzsl,
    eval_zsl,
    fewshot_subsample,
    gen_synthetic,
    gradcheck,
    harmonic_mean,
    load_model,
    load_zsb,
    minmax_scale_attributes,
    train,
)

__all__ = [
    "DatasetBundle",
    "EpisodeMode",
    "EpisodeSpec",
    "HyperParams",
    "Model",
    "SyntheticSpec",
    "eval_gzsl",
    "eval_zsl",
    "fewshot_subsample",
    "gen_synthetic",
    "gradcheck",
    "harmonic_mean",
    "load_model",
    "load_zsb",
    "minmax_scale_attributes",
    "train",
]
