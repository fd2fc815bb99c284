"""Full-reference quality metrics (PSNR, SSIM) and mean/std report aggregation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .losses import LUMA_WEIGHTS

PSNR_CAP = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); identical images return the 100 dB cap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(10.0 * np.log10(peak * peak / mse))


def _luma(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 3:
        return image @ np.asarray(LUMA_WEIGHTS)
    raise ValueError(f"expected H x W or H x W x 3 image, got shape {image.shape}")


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian window."""
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Mean local SSIM on luminance (11x11 Gaussian window, sigma 1.5,
    K1=0.01, K2=0.03, valid windows only)."""
    la, lb = _luma(a), _luma(b)
    if la.shape != lb.shape:
        raise ValueError(f"shape mismatch: {la.shape} vs {lb.shape}")
    if min(la.shape) < SSIM_WINDOW:
        raise ValueError(f"image dims {la.shape} smaller than the {SSIM_WINDOW}-pixel window")
    w = gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2

    def filt(x):
        return signal.correlate2d(x, w, mode="valid")

    mu_a = filt(la)
    mu_b = filt(lb)
    var_a = filt(la * la) - mu_a ** 2
    var_b = filt(lb * lb) - mu_b ** 2
    cov = filt(la * lb) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    """Per-image PSNR/SSIM rows plus population mean/std aggregates."""

    names: list = field(default_factory=list)
    psnr_values: list = field(default_factory=list)
    ssim_values: list = field(default_factory=list)

    @property
    def psnr_mean(self) -> float:
        return float(np.mean(self.psnr_values))

    @property
    def psnr_std(self) -> float:
        return float(np.std(self.psnr_values))

    @property
    def ssim_mean(self) -> float:
        return float(np.mean(self.ssim_values))

    @property
    def ssim_std(self) -> float:
        return float(np.std(self.ssim_values))

    def to_json_dict(self) -> dict:
        return {
            "images": [
                {"name": n, "psnr": p, "ssim": s}
                for n, p, s in zip(self.names, self.psnr_values, self.ssim_values)
            ],
            "aggregate": {
                "psnr_mean": self.psnr_mean,
                "psnr_std": self.psnr_std,
                "ssim_mean": self.ssim_mean,
                "ssim_std": self.ssim_std,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def format_table(self) -> str:
        """Aligned text table, one row per image plus a mean+-std aggregate row."""
        name_w = max([len("image")] + [len(n) for n in self.names])
        lines = [f"{'image':<{name_w}}  {'PSNR':>14}  {'SSIM':>14}"]
        for n, p, s in zip(self.names, self.psnr_values, self.ssim_values):
            lines.append(f"{n:<{name_w}}  {p:>14.3f}  {s:>14.3f}")
        agg_p = f"{self.psnr_mean:.3f}+-{self.psnr_std:.3f}"
        agg_s = f"{self.ssim_mean:.3f}+-{self.ssim_std:.3f}"
        lines.append(f"{'mean+-std':<{name_w}}  {agg_p:>14}  {agg_s:>14}")
        return "\n".join(lines)


def evaluate_set(pairs, names=None, peak: float = 1.0) -> MetricReport:
    """Compute per-image PSNR/SSIM over (image, reference) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate an empty pair set")
    if names is None:
        names = [str(i) for i in range(len(pairs))]
    if len(names) != len(pairs):
        raise ValueError(f"{len(pairs)} pairs but {len(names)} names")
    report = MetricReport()
    for name, (a, b) in zip(names, pairs):
        report.names.append(name)
        report.psnr_values.append(psnr(a, b, peak))
        report.ssim_values.append(ssim(a, b, peak))
    return report
