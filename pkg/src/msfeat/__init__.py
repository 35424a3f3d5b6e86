"""Patch-based feature learning for texture and material classification.

Single-scale coders (K-means, sparse coding, autoencoder, spike-and-slab),
multi-scale spike-and-slab coders (stacked S4C and joint MS4C), LBP
baselines, pooling, SVM classifiers, dataset loaders and a CLI.
"""

__version__ = "0.1.0"

from .classify import (Chi2KernelSVM, KNNClassifier, LinearSVM, chi2_kernel, evaluate,
                       svm_train)
from .coders import AutoEncoderCoder, KMeansCoder, S3CCoder, SparseCoder
from .core import ZCAWhitener, extract_grid, normalize_patch, normalize_patches, to_grayscale
from .datasets import LabeledDataset, SynthSpec, load_dataset, synth_generate, synth_images
from .features import FeatureExtractor, PoolingConfig, encode_image, pool
from .lbp import LBPConfig, LBPTransformer, lbp_histogram
from .multiscale import MultiScaleS3C, StackedS3C
from .s3c import S3CParams, e_step, exact_posterior, free_energy, m_step, s3c_learn
from .scalespace import build_pyramid, gaussian_blur
from .serialization import load_model, save_model
from .viz import viz_filters

__all__ = [
    "AutoEncoderCoder",
    "Chi2KernelSVM",
    "FeatureExtractor",
    "KMeansCoder",
    "KNNClassifier",
    "LBPConfig",
    "LBPTransformer",
    "LabeledDataset",
    "LinearSVM",
    "MultiScaleS3C",
    "PoolingConfig",
    "S3CCoder",
    "S3CParams",
    "SparseCoder",
    "StackedS3C",
    "SynthSpec",
    "ZCAWhitener",
    "build_pyramid",
    "chi2_kernel",
    "e_step",
    "encode_image",
    "evaluate",
    "exact_posterior",
    "extract_grid",
    "free_energy",
    "gaussian_blur",
    "lbp_histogram",
    "load_dataset",
    "load_model",
    "m_step",
    "normalize_patch",
    "normalize_patches",
    "pool",
    "s3c_learn",
    "save_model",
    "svm_train",
    "synth_generate",
    "synth_images",
    "to_grayscale",
    "viz_filters",
]
