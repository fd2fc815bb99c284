"""USRNet assembly: scene encoder, per-degradation node bank, edge decoder,
and scene restorer, wired into one forward pass."""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import ConvLayer, DualResBlock, GlobalContextAttention, ResBlock
from .degrade import KIND_ORDER, KINDS

DEFAULT_KINDS = ("haze", "rain", "snow")
DEFAULT_CHANNELS = (16, 32, 64, 128)


class EncoderFeatures(NamedTuple):
    pyramid: list  # global heads at scales 1, 1/2, 1/4, 1/8
    edge_taps: list  # edge heads at the same scales


class RestorationOutput(NamedTuple):
    restored: torch.Tensor  # B x 3 x H x W in [0, 1]
    edge_map: torch.Tensor  # B x 1 x H x W


class SceneEncoder(nn.Module):
    """Four dual-residual stages with 2x2 max-pooling between them; returns
    both heads of every stage."""

    def __init__(self, channels=DEFAULT_CHANNELS, dilation=2,
                 use_laplacian=True, use_dilated=True):
        super().__init__()
        self.stem = nn.Conv2d(3, channels[0], 3, padding=1)
        ins = (channels[0],) + tuple(channels[:-1])
        self.stages = nn.ModuleList(
            DualResBlock(i, o, dilation, use_laplacian, use_dilated)
            for i, o in zip(ins, channels)
        )
        self.pool = nn.MaxPool2d(2)

    def forward(self, x) -> EncoderFeatures:
        if x.shape[-2] % 8 or x.shape[-1] % 8:
            raise ValueError(f"encoder input dims must be multiples of 8, got {tuple(x.shape[-2:])}")
        pyramid, taps = [], []
        h = self.stem(x)
        for k, stage in enumerate(self.stages):
            if k > 0:
                h = self.pool(h)
            h, edge = stage(h)
            pyramid.append(h)
            taps.append(edge)
        return EncoderFeatures(pyramid, taps)


class LearningNode(nn.Module):
    """One dedicated degradation node: ConvLayer -> context attention ->
    ConvLayer, with an identity skip."""

    def __init__(self, channels: int):
        super().__init__()
        self.entry = ConvLayer(channels, channels)
        self.attention = GlobalContextAttention(channels)
        self.exit = ConvLayer(channels, channels)

    def forward(self, x):
        return x + self.exit(self.attention(self.entry(x)))


def canonical_kind_order(kinds) -> tuple:
    """Sort degradation kinds into the fixed bank order."""
    kinds = tuple(kinds)
    for k in kinds:
        if k not in KINDS:
            raise ValueError(f"unknown degradation kind {k!r}, expected one of {KINDS}")
    if len(set(kinds)) != len(kinds):
        raise ValueError(f"duplicate kinds in {kinds}")
    return tuple(sorted(kinds, key=KIND_ORDER.__getitem__))


class NodeBank(nn.Module):
    """Ordered per-degradation learning nodes.

    Single-node routing (`route=<kind>`) runs exactly one node and leaves the
    rest untouched; `route="all"` chains every node, the last bank entry first
    and the first entry last (output = node[0](node[1](...node[-1](x)))).
    """

    def __init__(self, kinds, channels: int):
        super().__init__()
        self.kinds = canonical_kind_order(kinds)
        if not self.kinds:
            raise ValueError("node bank needs at least one kind")
        self.nodes = nn.ModuleDict({k: LearningNode(channels) for k in self.kinds})

    def forward(self, x, route: str):
        if route == "all":
            for kind in reversed(self.kinds):
                x = self.nodes[kind](x)
            return x
        if route not in self.nodes:
            raise ValueError(f"unknown node kind {route!r}; bank holds {self.kinds}")
        return self.nodes[route](x)


class EdgeDecoder(nn.Module):
    """Coarse-to-fine chain of residual blocks and 2x upsampling over the
    encoder's edge taps, ending in a one-channel edge-gradient map."""

    def __init__(self, channels=DEFAULT_CHANNELS):
        super().__init__()
        self.blocks = nn.ModuleList(ResBlock(c) for c in channels)
        self.shrink = nn.ModuleList(
            nn.Conv2d(channels[k + 1], channels[k], 1) for k in range(len(channels) - 1)
        )
        self.head = nn.Conv2d(channels[0], 1, 3, padding=1)

    def forward(self, taps):
        if len(taps) != len(self.blocks):
            raise ValueError(f"expected {len(self.blocks)} pyramid levels, got {len(taps)}")
        h = self.blocks[-1](taps[-1])
        for k in range(len(self.blocks) - 2, -1, -1):
            h = self.shrink[k](F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False))
            h = self.blocks[k](h + taps[k])
        return self.head(h)


class SceneRestorer(nn.Module):
    """Aggregates encoder, edge, and node-bank features (channel concat plus a
    fusion conv at every scale) and decodes back to an RGB image in [0, 1]."""

    def __init__(self, channels=DEFAULT_CHANNELS):
        super().__init__()
        c = channels
        self.fuse = nn.ModuleList(
            [nn.Conv2d(2 * c[k] + 1, c[k], 1) for k in range(len(c) - 1)]
            + [nn.Conv2d(2 * c[-1] + 1, c[-1], 1)]
        )
        self.blocks = nn.ModuleList(ResBlock(ck) for ck in c)
        self.shrink = nn.ModuleList(nn.Conv2d(c[k + 1], c[k], 1) for k in range(len(c) - 1))
        self.head = nn.Conv2d(c[0], 3, 3, padding=1)

    def forward(self, pyramid, edge_map, nilm):
        def edge_at(level):
            size = pyramid[level].shape[-2:]
            if edge_map.shape[-2:] == size:
                return edge_map
            return F.interpolate(edge_map, size=size, mode="bilinear", align_corners=False)

        top = len(pyramid) - 1
        h = self.fuse[top](torch.cat([pyramid[top], nilm, edge_at(top)], dim=1))
        h = self.blocks[top](h)
        for k in range(top - 1, -1, -1):
            h = self.shrink[k](F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False))
            h = self.fuse[k](torch.cat([pyramid[k], h, edge_at(k)], dim=1))
            h = self.blocks[k](h)
        return torch.sigmoid(self.head(h))


class USRNet(nn.Module):
    """Unified scene recovery network.

    `forward(image, route)` restores a degraded image; `route` is either a
    degradation kind (single dedicated node, used for training and one-to-one
    inference) or "all" (sequential chain over every node).
    """

    def __init__(self, kinds=DEFAULT_KINDS, channels=DEFAULT_CHANNELS, dilation=2,
                 use_laplacian=True, use_dilated=True):
        super().__init__()
        channels = tuple(channels)
        if len(channels) != 4:
            raise ValueError(f"expected 4 encoder stages, got channels {channels}")
        self.encoder = SceneEncoder(channels, dilation, use_laplacian, use_dilated)
        self.bank = NodeBank(kinds, channels[-1])
        self.edge_decoder = EdgeDecoder(channels)
        self.restorer = SceneRestorer(channels)
        self.config = {
            "kinds": list(self.bank.kinds),
            "channels": list(channels),
            "dilation": dilation,
            "use_laplacian": use_laplacian,
            "use_dilated": use_dilated,
        }

    @classmethod
    def from_config(cls, config: dict) -> "USRNet":
        return cls(
            kinds=tuple(config["kinds"]),
            channels=tuple(config["channels"]),
            dilation=config["dilation"],
            use_laplacian=config["use_laplacian"],
            use_dilated=config["use_dilated"],
        )

    def shared_parameters(self):
        """Encoder + edge decoder + restorer parameters (everything outside the bank)."""
        for name, p in self.named_parameters():
            if not name.startswith("bank."):
                yield p

    def node_parameters(self, kind: str):
        if kind not in self.bank.nodes:
            raise ValueError(f"unknown node kind {kind!r}; bank holds {self.bank.kinds}")
        return self.bank.nodes[kind].parameters()

    def forward(self, image, route: str = "all") -> RestorationOutput:
        if image.dim() == 3:
            image = image.unsqueeze(0)
        if image.dim() != 4 or image.shape[1] != 3:
            raise ValueError(f"expected (B,3,H,W) input, got shape {tuple(image.shape)}")
        height, width = image.shape[-2:]
        if height < 16 or width < 16:
            raise ValueError(f"input dims must be >= 16, got {height}x{width}")
        pad_h = (-height) % 8
        pad_w = (-width) % 8
        if pad_h or pad_w:
            image = F.pad(image, (0, pad_w, 0, pad_h), mode="reflect")
        enc = self.encoder(image)
        nilm = self.bank(enc.pyramid[-1], route)
        edge = self.edge_decoder(enc.edge_taps)
        restored = self.restorer(enc.pyramid, edge, nilm)
        return RestorationOutput(
            restored=restored[..., :height, :width], edge_map=edge[..., :height, :width]
        )
