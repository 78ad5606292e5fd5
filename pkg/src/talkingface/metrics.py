"""Image and landmark evaluation metrics: PSNR, SSIM, and landmark distance.

SSIM uses 8x8 uniform sliding windows (population statistics, C1=(0.01 L)^2,
C2=(0.03 L)^2) averaged over all window positions.  The landmark distance is
the mean Euclidean error over corresponding 2D points, averaged over frames;
projected mouth-region vertices stand in for detector landmarks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass
class MetricReport:
    psnr: float  # dB; +inf for identical images
    ssim: float
    lmd: float  # pixels
    frames: int

    def to_json(self) -> str:
        def clean(v):
            v = float(v)
            return v if np.isinf(v) else round(v, 6)

        return json.dumps(
            {
                "psnr": clean(self.psnr),
                "ssim": clean(self.ssim),
                "lmd": clean(self.lmd),
                "frames": self.frames,
            }
        )


def psnr(a, b, max_value=1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = ((a - b) ** 2).mean()
    if mse == 0.0:
        return np.inf
    return 10.0 * np.log10(max_value * max_value / mse)


def _window_stats(x, win):
    from numpy.lib.stride_tricks import sliding_window_view

    views = sliding_window_view(x, (win, win))
    return views.mean(axis=(-1, -2)), views


def ssim(a, b, max_value=1.0, window=8) -> float:
    """Single-scale SSIM over sliding uniform windows; RGB averages channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        return float(
            np.mean([ssim(a[..., c], b[..., c], max_value, window) for c in range(a.shape[2])])
        )
    if a.ndim != 2:
        raise ValueError(f"expected 2-D or (H, W, C) images, got shape {a.shape}")
    if min(a.shape) < window:
        raise ValueError(f"image smaller than the {window}x{window} SSIM window")

    c1 = (0.01 * max_value) ** 2
    c2 = (0.03 * max_value) ** 2
    mu_a, views_a = _window_stats(a, window)
    mu_b, views_b = _window_stats(b, window)
    var_a = (views_a**2).mean(axis=(-1, -2)) - mu_a**2
    var_b = (views_b**2).mean(axis=(-1, -2)) - mu_b**2
    cov = (views_a * views_b).mean(axis=(-1, -2)) - mu_a * mu_b
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(score.mean())


def lmd(pred_points, gt_points) -> float:
    """Mean Euclidean distance between corresponding 2D points.

    Accepts (K, 2) single frames or (T, K, 2) sequences; sequences average the
    per-frame means.
    """
    pred = np.asarray(pred_points, dtype=np.float64)
    gt = np.asarray(gt_points, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"point sets differ in shape: {pred.shape} vs {gt.shape}")
    if pred.ndim == 2:
        pred = pred[None]
        gt = gt[None]
    if pred.ndim != 3 or pred.shape[2] != 2:
        raise ValueError(f"expected (T, K, 2) points, got {pred.shape}")
    dists = np.sqrt(((pred - gt) ** 2).sum(axis=2))
    return float(dists.mean(axis=1).mean())
