"""Unsupervised domain adaptation on feature vectors by selective pseudo-labelling,
optionally augmented with cross-domain features from a norm-VAE."""

from .classifier import TrainConfig, evaluate, predict_with_confidence, train_classifier
from .dataio import BenchmarkSpec, FeatureSample, generate_benchmark, load_feature_dataset
from .norm_vae import NormVaeConfig, train_norm_vae
from .pipeline import (PipelineConfig, run, run_ablation, run_baseline, run_naive_spl,
                       run_naive_spl_star, run_norm_vae_spl)

__all__ = ["BenchmarkSpec", "FeatureSample", "NormVaeConfig", "PipelineConfig", "TrainConfig", "evaluate",
           "generate_benchmark", "load_feature_dataset", "predict_with_confidence", "run", "run_ablation",
           "run_baseline", "run_naive_spl", "run_naive_spl_star", "run_norm_vae_spl", "train_classifier",
           "train_norm_vae"]
__version__ = "0.1.0"
