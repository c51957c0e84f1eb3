"""Inverse halftoning with a multiscale progressively residual network"""
from ._version import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig, load_train_config, parse_train_config
from .halftone import floyd_steinberg, gaussian_baseline
from .image import GrayImage, HalftoneImage, load_image, save_image
from .losses import LossWeights, fft_loss, l1_loss, total_loss
from .metrics import MetricReport, psnr, ssim
from .model import ModelConfig, MsprlModel, build_model, count_parameters, dump_feature_maps
from .optim import OptimizerState, adamw_step, cosine_lr
from .tensor import Tensor, backward, no_grad
from .trainer import Trainer, evaluate, train

__all__ = [
    "Checkpoint",
    "GrayImage",
    "HalftoneImage",
    "LossWeights",
    "MetricReport",
    "ModelConfig",
    "MsprlModel",
    "OptimizerState",
    "Tensor",
    "TrainConfig",
    "Trainer",
    "adamw_step",
    "backward",
    "build_model",
    "cosine_lr",
    "count_parameters",
    "dump_feature_maps",
    "evaluate",
    "fft_loss",
    "floyd_steinberg",
    "gaussian_baseline",
    "l1_loss",
    "load_checkpoint",
    "load_image",
    "load_train_config",
    "no_grad",
    "parse_train_config",
    "psnr",
    "save_checkpoint",
    "save_image",
    "ssim",
    "total_loss",
    "train",
]
