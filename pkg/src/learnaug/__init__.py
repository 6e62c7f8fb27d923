"""Learnable spectrum-preserving augmentation for time-series contrastive pre-training."""

from .augment import AugmentParams, apply_nonscalable, apply_scalable, apply_unified
from .augtrain import AugLossConfig, batch_aug_loss, train_augmentation
from .encoder import EncoderConfig, PretrainConfig, encode, init_encoder, pretrain
from .evalharness import bench_scaling, bias_sd_experiment, estimate_bias, finetune
from .series import Batch, SeriesInstance, load_csv, preprocess
from .spectral import amplitude_spectrum, spectral_distance

__version__ = "0.1.0"

__all__ = [
    "AugLossConfig", "AugmentParams", "Batch", "EncoderConfig", "PretrainConfig", "SeriesInstance",
    "amplitude_spectrum", "apply_nonscalable", "apply_scalable", "apply_unified", "batch_aug_loss",
    "bench_scaling", "bias_sd_experiment", "encode", "estimate_bias", "finetune", "init_encoder",
    "load_csv", "preprocess", "pretrain", "spectral_distance", "train_augmentation",
]
