"""Seed-deterministic synthesis of haze, rain/snow streaks, and mixed degradations.

All images are H x W x 3 float arrays in [0, 1]; every function here is pure,
so identical arguments (including seeds) give bit-identical outputs.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

KINDS = ("haze", "rain", "snow", "haze_rain", "haze_snow")

# Canonical node/bank ordering shared with the model and trainer.
KIND_ORDER = {kind: i for i, kind in enumerate(KINDS)}

_STREAK_KIND = {"rain": "rain", "snow": "snow", "haze_rain": "rain", "haze_snow": "snow"}


@dataclass(frozen=True)
class StreakParams:
    """Per-layer streak parameters: one direction per layer (deg, CCW from +x)."""

    direction: float
    length: int
    density: float

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"streak length must be >= 1, got {self.length}")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError(f"streak density must be in [0, 1], got {self.density}")


@dataclass(frozen=True)
class DegradationSpec:
    """Full parameterization of one synthetic degradation."""

    kind: str
    atmospheric_light: float
    beta: float
    layers: tuple[StreakParams, ...]
    seed: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}, expected one of {KINDS}")
        if not 0.7 <= self.atmospheric_light <= 1.0:
            raise ValueError(f"atmospheric_light must be in [0.7, 1.0], got {self.atmospheric_light}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        n = len(self.layers)
        if self.kind == "haze" and n != 0:
            raise ValueError("kind=haze requires zero streak layers")
        if self.kind in ("rain", "snow") and self.beta != 0:
            raise ValueError(f"kind={self.kind} requires beta=0, got {self.beta}")
        if self.kind in ("haze_rain", "haze_snow") and (n < 1 or self.beta <= 0):
            raise ValueError(f"mixed kind {self.kind} requires >=1 streak layer and beta>0")

    @property
    def streak_layer_count(self) -> int:
        return len(self.layers)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "atmospheric_light": self.atmospheric_light,
            "beta": self.beta,
            "streak_layer_count": self.streak_layer_count,
            "layers": [dataclasses.asdict(p) for p in self.layers],
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DegradationSpec":
        expected = {"kind", "atmospheric_light", "beta", "streak_layer_count", "layers", "seed"}
        unknown = set(d) - expected
        if unknown:
            raise ValueError(f"unknown DegradationSpec fields: {sorted(unknown)}")
        missing = expected - set(d)
        if missing:
            raise ValueError(f"missing DegradationSpec fields: {sorted(missing)}")
        layers = tuple(StreakParams(**p) for p in d["layers"])
        if d["streak_layer_count"] != len(layers):
            raise ValueError(
                f"streak_layer_count={d['streak_layer_count']} but {len(layers)} layers given"
            )
        return cls(
            kind=str(d["kind"]),
            atmospheric_light=float(d["atmospheric_light"]),
            beta=float(d["beta"]),
            layers=layers,
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class TransmissionMap:
    """Per-pixel fraction of unscattered light, t = exp(-beta * depth)."""

    t: np.ndarray
    beta: float
    depth: np.ndarray


@dataclass(frozen=True)
class StreakLayer:
    """A sparse oriented streak mask, values in [0, 1]."""

    mask: np.ndarray
    direction: float
    length: int
    density: float


def make_depth(height: int, width: int, seed: int) -> np.ndarray:
    """Synthetic depth in [0, 1]: vertical ramp (far at the top) plus a smooth
    seeded random field, standing in for real depth data."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD39)))
    ramp = np.linspace(1.0, 0.0, height)[:, None] * np.ones((1, width))
    coarse = rng.random((4, 4))
    yy = np.linspace(0, 3, height)
    xx = np.linspace(0, 3, width)
    field = ndimage.map_coordinates(
        coarse, np.meshgrid(yy, xx, indexing="ij"), order=1, mode="nearest"
    )
    depth = 0.65 * ramp + 0.35 * field
    lo, hi = depth.min(), depth.max()
    if hi > lo:
        depth = (depth - lo) / (hi - lo)
    return depth


def make_transmission(depth: np.ndarray, beta: float) -> TransmissionMap:
    """Transmission t = exp(-beta * depth), elementwise."""
    depth = np.asarray(depth, dtype=np.float64)
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if not np.all(np.isfinite(depth)) or np.any(depth < 0):
        raise ValueError("depth must be finite and nonnegative")
    return TransmissionMap(t=np.exp(-beta * depth), beta=float(beta), depth=depth)


def _t_array(transmission) -> np.ndarray:
    if isinstance(transmission, TransmissionMap):
        return transmission.t
    return np.asarray(transmission, dtype=np.float64)


def apply_haze(image: np.ndarray, transmission, airlight: float) -> np.ndarray:
    """Atmospheric scattering: out = I*t + A*(1 - t), a convex combination."""
    image = np.asarray(image, dtype=np.float64)
    t = _t_array(transmission)
    if image.shape[:2] != t.shape:
        raise ValueError(f"image {image.shape} and transmission {t.shape} disagree")
    if not 0.0 <= airlight <= 1.0:
        raise ValueError(f"airlight must be in [0, 1], got {airlight}")
    t3 = t[..., None]
    return image * t3 + airlight * (1.0 - t3)


def invert_haze(hazy: np.ndarray, transmission, airlight: float, t_floor: float = 0.05) -> np.ndarray:
    """Inverse of apply_haze: (I_h - A*(1 - t)) / t. Requires t >= t_floor."""
    hazy = np.asarray(hazy, dtype=np.float64)
    t = _t_array(transmission)
    if hazy.shape[:2] != t.shape:
        raise ValueError(f"image {hazy.shape} and transmission {t.shape} disagree")
    if t.min() < t_floor:
        raise ValueError(f"transmission below floor {t_floor}: ill-conditioned inversion")
    t3 = t[..., None]
    return (hazy - airlight * (1.0 - t3)) / t3


def _line_kernel(length: int, direction_deg: float, width: int = 1) -> np.ndarray:
    """Motion-blur kernel: a centered line segment of given euclidean length."""
    k = int(length) if length % 2 == 1 else int(length) + 1
    kernel = np.zeros((k, k))
    c = (k - 1) / 2.0
    a = math.radians(direction_deg)
    dx, dy = math.cos(a), -math.sin(a)  # y grows downward
    px, py = -dy, dx  # unit perpendicular
    half = (length - 1) / 2.0
    for s in np.linspace(-half, half, max(2 * int(length), 2)):
        for w in range(width):
            x = int(round(c + s * dx + w * px))
            y = int(round(c + s * dy + w * py))
            if 0 <= x < k and 0 <= y < k:
                kernel[y, x] = 1.0
    return kernel


_BLOB = np.array([[0.0, 0.6, 0.0], [0.6, 1.0, 0.6], [0.0, 0.6, 0.0]])


def _streak_kernel(length: int, direction_deg: float, style: str) -> np.ndarray:
    if style == "snow":
        # Shorter, thicker strokes with a flake blob at the center.
        kernel = _line_kernel(length, direction_deg, width=2)
        c = (kernel.shape[0] - 1) // 2
        if c >= 1:
            patch = kernel[c - 1 : c + 2, c - 1 : c + 2]
            np.maximum(patch, _BLOB, out=patch)
    else:
        kernel = _line_kernel(length, direction_deg, width=1)
    return kernel / kernel.sum()


def render_streaks(spec: DegradationSpec, height: int, width: int) -> list[StreakLayer]:
    """Render the spec's streak layers: seeded salt noise smeared along each
    layer's direction, rescaled to [0, 1]. Deterministic in (spec, height, width)."""
    style = _STREAK_KIND.get(spec.kind)
    layers = []
    for i, params in enumerate(spec.layers):
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0x57A, i)))
        # exact seed count (not Bernoulli) keeps the sparsity bound provable:
        # floor(d*N) seeds, each smeared over at most ~2*length+4 < 4*length cells
        count = int(params.density * height * width)
        salt = np.zeros(height * width)
        if count:
            salt[rng.choice(height * width, size=count, replace=False)] = 1.0
        salt = salt.reshape(height, width)
        kernel = _streak_kernel(params.length, params.direction, style or "rain")
        mask = ndimage.convolve(salt, kernel, mode="constant", cval=0.0)
        peak = mask.max()
        if peak > 0:
            mask /= peak
        layers.append(
            StreakLayer(mask=mask, direction=params.direction, length=params.length, density=params.density)
        )
    return layers


def apply_streaks(image: np.ndarray, layers: list[StreakLayer]) -> np.ndarray:
    """Additive streak model: out = clamp(I + sum_i S_i, 0, 1), same mask on all channels."""
    image = np.asarray(image, dtype=np.float64)
    out = image.copy()
    for layer in layers:
        if layer.mask.shape != image.shape[:2]:
            raise ValueError(f"streak mask {layer.mask.shape} does not match image {image.shape}")
        out += layer.mask[..., None]
    return np.clip(out, 0.0, 1.0)


def apply_mixed(image: np.ndarray, layers: list[StreakLayer], transmission, airlight: float) -> np.ndarray:
    """Mixed model: scattering applied on top of the streaked scene,
    out = clamp(I + sum S_i, 0, 1) * t + A * (1 - t)."""
    return apply_haze(apply_streaks(image, layers), transmission, airlight)


def degrade_image(image: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Apply a full DegradationSpec to a clean image (depth derived from the seed)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {image.shape}")
    if image.shape[0] < 8 or image.shape[1] < 8:
        raise ValueError(f"image too small: {image.shape[:2]}, need at least 8 x 8")
    if image.min() < 0 or image.max() > 1:
        raise ValueError("image values must lie in [0, 1]")
    height, width = image.shape[:2]
    depth = make_depth(height, width, spec.seed)
    tmap = make_transmission(depth, spec.beta)
    streaks = render_streaks(spec, height, width)
    return apply_mixed(image, streaks, tmap, spec.atmospheric_light)


def random_spec(kind: str, seed: int) -> DegradationSpec:
    """Draw a plausible DegradationSpec for `kind`, deterministically from `seed`."""
    if kind not in KINDS:
        raise ValueError(f"unknown degradation kind {kind!r}, expected one of {KINDS}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5BEC)))
    hazy = kind in ("haze", "haze_rain", "haze_snow")
    airlight = float(rng.uniform(0.8, 1.0))
    beta = float(rng.uniform(0.6, 1.8)) if hazy else 0.0
    layers = []
    if kind != "haze":
        style = _STREAK_KIND[kind]
        for _ in range(int(rng.integers(1, 4))):
            if style == "rain":
                direction = float(rng.uniform(60.0, 120.0))
                length = int(rng.integers(9, 18))
                density = float(rng.uniform(0.002, 0.01))
            else:
                direction = float(rng.uniform(0.0, 360.0))
                length = int(rng.integers(5, 10))
                density = float(rng.uniform(0.004, 0.02))
            layers.append(StreakParams(direction=direction, length=length, density=density))
    return DegradationSpec(
        kind=kind, atmospheric_light=airlight, beta=beta, layers=tuple(layers), seed=seed
    )
