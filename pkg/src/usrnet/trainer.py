"""Optimization loop: per-degradation node routing, step LR schedule, gradient
clipping, CSV loss logging, and resumable checkpoints."""

from __future__ import annotations

import csv
import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from . import checkpoint as ckpt_io
from .data import Batch, batches, load_manifest, present_kinds
from .losses import FeatureExtractor, LossWeights, TotalLoss, total_loss
from .model import USRNet

MODES = ("all_in_one", "one_to_one")


@dataclass
class TrainConfig:
    epochs: int = 100
    base_lr: float = 1e-3
    decay_factor: float = 0.1
    decay_every: int = 40
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch_size: int = 4
    patch: int = 64
    seed: int = 0
    mode: str = "all_in_one"
    channels: tuple = (16, 32, 64, 128)
    dilation: int = 2
    use_laplacian: bool = True
    use_dilated: bool = True
    hflip: bool = True
    grad_clip: float = 1.0
    gamma1: float = 0.85
    gamma2: float = 0.15
    lambda_edge: float = 0.1
    epsilon: float = 1e-7
    feature_seed: int = 0
    feature_extractor: str | None = None  # None = frozen random pyramid, or "vgg19"
    checkpoint_every: int = 0  # epochs between snapshots; 0 = final only

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if self.decay_every < 1:
            raise ValueError(f"decay_every must be >= 1, got {self.decay_every}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.channels = tuple(self.channels)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["channels"] = list(self.channels)
        return out

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(
            gamma1=self.gamma1, gamma2=self.gamma2,
            lambda_edge=self.lambda_edge, epsilon=self.epsilon,
        )


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Step schedule: base_lr * decay_factor ** floor(epoch / decay_every)."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    return cfg.base_lr * cfg.decay_factor ** (epoch // cfg.decay_every)


@dataclass
class TrainState:
    model: USRNet
    optimizer: torch.optim.Adam
    extractor: FeatureExtractor
    config: TrainConfig
    epoch: int = 0
    step: int = 0


def init_state(cfg: TrainConfig, kinds) -> TrainState:
    torch.manual_seed(cfg.seed)
    model = USRNet(
        kinds=kinds,
        channels=cfg.channels,
        dilation=cfg.dilation,
        use_laplacian=cfg.use_laplacian,
        use_dilated=cfg.use_dilated,
    )
    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.base_lr, betas=(cfg.adam_beta1, cfg.adam_beta2)
    )
    extractor = FeatureExtractor(seed=cfg.feature_seed, pretrained=cfg.feature_extractor)
    return TrainState(model=model, optimizer=optimizer, extractor=extractor, config=cfg)


def _to_tensor(arr: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(arr)).permute(0, 3, 1, 2)


def train_step(state: TrainState, batch: Batch) -> TotalLoss:
    """One optimizer step routed through the batch's dedicated node.

    Gradients flow only into that node plus the shared parameters; every other
    node's weights and Adam moments are untouched (grads stay None, so the
    optimizer never creates or updates their state).
    """
    if batch.kind not in state.model.bank.nodes:
        raise ValueError(
            f"batch kind {batch.kind!r} has no node; bank holds {state.model.bank.kinds}"
        )
    degraded = _to_tensor(batch.degraded)
    clean = _to_tensor(batch.clean)
    state.optimizer.zero_grad(set_to_none=True)
    out = state.model(degraded, route=batch.kind)
    parts = total_loss(
        out.restored, out.edge_map, clean, degraded, state.extractor,
        state.config.loss_weights,
    )
    parts.total.backward()
    if state.config.grad_clip:
        torch.nn.utils.clip_grad_norm_(state.model.parameters(), state.config.grad_clip)
    state.optimizer.step()
    state.step += 1
    return parts


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence((seed, epoch)).generate_state(1)[0])


LOG_COLUMNS = ("step", "epoch", "kind", "mae", "contrastive", "edge", "total", "lr")


def train(cfg: TrainConfig, manifest_path, out_dir, resume=None):
    """Run the full schedule; returns (checkpoint_path, log_path).

    Deterministic for a fixed (cfg, manifest, seed): data order is a pure
    function of the seed and epoch, and torch runs single-threaded. `resume`
    restarts from a checkpoint at its epoch boundary and continues the exact
    uninterrupted trajectory, appending to the loss log.
    """
    torch.set_num_threads(1)
    os.makedirs(out_dir, exist_ok=True)
    entries = load_manifest(manifest_path)
    if not entries:
        raise ValueError(f"manifest {manifest_path} has no entries")
    kinds = present_kinds(entries)

    state = init_state(cfg, kinds)
    if resume is not None:
        saved = ckpt_io.load_checkpoint(resume)
        ckpt_io.load_model_state(state.model, saved)
        ckpt_io.load_optimizer_state(state.optimizer, state.model, saved)
        state.epoch = saved.epoch
        state.step = saved.step

    ckpt_path = os.path.join(out_dir, "model.ckpt")
    log_path = os.path.join(out_dir, "train_log.csv")
    fresh_log = resume is None or not os.path.exists(log_path)

    def snapshot():
        ckpt_io.save_checkpoint(
            ckpt_path, state.model, state.optimizer,
            epoch=state.epoch, step=state.step, train_config=cfg.to_dict(),
        )

    with open(log_path, "w" if fresh_log else "a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh_log:
            writer.writerow(LOG_COLUMNS)
        for epoch in range(state.epoch, cfg.epochs):
            lr = lr_at(epoch, cfg)
            for group in state.optimizer.param_groups:
                group["lr"] = lr
            for batch in batches(
                entries, cfg.patch, cfg.batch_size,
                seed=_epoch_seed(cfg.seed, epoch), flip=cfg.hflip,
            ):
                parts = train_step(state, batch)
                writer.writerow([
                    state.step, epoch, batch.kind,
                    f"{parts.mae.item():.8f}", f"{parts.contrastive.item():.8f}",
                    f"{parts.edge.item():.8f}", f"{parts.total.item():.8f}",
                    f"{lr:.2e}",
                ])
            state.epoch = epoch + 1
            if cfg.checkpoint_every and state.epoch % cfg.checkpoint_every == 0:
                snapshot()
        snapshot()
    return ckpt_path, log_path
