"""Unified scene recovery: synthetic weather degradation, the restoration
network with per-degradation learning nodes, training, and evaluation."""

from .degrade import KINDS, DegradationSpec, StreakParams
from .metrics import evaluate_set, psnr, ssim
from .model import USRNet
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "DegradationSpec",
    "StreakParams",
    "TrainConfig",
    "USRNet",
    "evaluate_set",
    "psnr",
    "ssim",
    "train",
]
