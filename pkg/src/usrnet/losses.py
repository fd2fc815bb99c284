"""Training losses: pixel MAE, Laplacian edge loss, and the layer-weighted
contrastive loss with its frozen feature pyramid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import laplacian_filter

LAYER_WEIGHTS = (1 / 32, 1 / 16, 1 / 8, 1 / 4, 1.0)

# ITU-R BT.601 luma weights, shared with the metrics module.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class LossWeights:
    gamma1: float = 0.85
    gamma2: float = 0.15
    lambda_edge: float = 0.1
    epsilon: float = 1e-7

    def __post_init__(self):
        if min(self.gamma1, self.gamma2, self.lambda_edge) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


class FeatureExtractor(nn.Module):
    """Frozen 5-stage conv pyramid used as the contrastive feature space.

    Defaults to seed-fixed random weights so the loss is self-contained and
    deterministic; pass `pretrained="vgg19"` to tap a torchvision VGG19
    instead (requires downloadable weights).
    """

    def __init__(self, seed: int = 0, channels=(8, 16, 32, 64, 64), pretrained=None):
        super().__init__()
        if pretrained is None:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                ins = (3,) + tuple(channels[:-1])
                self.stages = nn.ModuleList(
                    nn.Conv2d(i, o, 3, padding=1) for i, o in zip(ins, channels)
                )
        elif pretrained == "vgg19":
            from torchvision.models import VGG19_Weights, vgg19

            vgg = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).features
            # conv blocks between the max-pools; features() re-inserts the pools
            bounds = ((0, 4), (5, 9), (10, 18), (19, 27), (28, 36))
            self.stages = nn.ModuleList(vgg[a:b] for a, b in bounds)
        else:
            raise ValueError(f"unknown pretrained extractor {pretrained!r}")
        for p in self.parameters():
            p.requires_grad_(False)

    def features(self, x) -> list:
        """Per-stage feature taps, coarsening by 2x max-pooling between stages."""
        taps = []
        h = x
        for k, stage in enumerate(self.stages):
            if k > 0 and min(h.shape[-2:]) >= 2:
                h = F.max_pool2d(h, 2)
            h = F.relu(stage(h)) if isinstance(stage, nn.Conv2d) else stage(h)
            taps.append(h)
        return taps

    forward = features


def mae_loss(output: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference."""
    if output.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(output.shape)} vs {tuple(target.shape)}")
    return (output - target).abs().mean()


def edge_loss(output: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """MAE between the Laplacian transforms of the two images."""
    if output.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(output.shape)} vs {tuple(target.shape)}")
    return mae_loss(laplacian_filter(output), laplacian_filter(target))


def contrastive_loss(restored, target, degraded, extractor: FeatureExtractor,
                     weights=LAYER_WEIGHTS, epsilon: float = 1e-7,
                     reduction: str = "mean") -> torch.Tensor:
    """Layer-weighted ratio sum_i w_i * d_ap_i / (d_an_i + eps), pulling the
    restoration toward the clean anchor and away from the degraded negative."""
    if not restored.shape == target.shape == degraded.shape:
        raise ValueError("restored/target/degraded shapes must agree")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    taps_r = extractor.features(restored)
    taps_t = extractor.features(target)
    taps_d = extractor.features(degraded)
    if len(weights) != len(taps_r):
        raise ValueError(f"{len(taps_r)} feature taps but {len(weights)} layer weights")
    norm = torch.mean if reduction == "mean" else torch.sum
    loss = restored.new_zeros(())
    for w, fr, ft, fd in zip(weights, taps_r, taps_t, taps_d):
        d_ap = norm((ft - fr).abs())
        d_an = norm((ft - fd).abs())
        loss = loss + w * d_ap / (d_an + epsilon)
    return loss


def luminance(image: torch.Tensor) -> torch.Tensor:
    """BT.601 luma of a (B,3,H,W) image, keeping a singleton channel."""
    if image.shape[-3] != 3:
        raise ValueError(f"expected 3 channels, got {image.shape[-3]}")
    w = image.new_tensor(LUMA_WEIGHTS)
    return (image * w[:, None, None]).sum(dim=-3, keepdim=True)


def edge_target(target: torch.Tensor) -> torch.Tensor:
    """Supervision target for the edge decoder: Laplacian of the target luma."""
    return laplacian_filter(luminance(target))


class TotalLoss(NamedTuple):
    total: torch.Tensor
    mae: torch.Tensor
    contrastive: torch.Tensor
    edge: torch.Tensor


def total_loss(restored, edge_pred, target, degraded, extractor: FeatureExtractor,
               weights: LossWeights = LossWeights()) -> TotalLoss:
    """Combined objective: gamma1*MAE + gamma2*contrastive + lambda_edge*edge,
    where the edge term compares the predicted gradient map against the
    Laplacian of the target luma."""
    mae = mae_loss(restored, target)
    contrastive = contrastive_loss(restored, target, degraded, extractor,
                                   epsilon=weights.epsilon)
    edge = mae_loss(edge_pred, edge_target(target))
    total = weights.gamma1 * mae + weights.gamma2 * contrastive + weights.lambda_edge * edge
    return TotalLoss(total=total, mae=mae, contrastive=contrastive, edge=edge)
