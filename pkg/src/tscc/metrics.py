"""Image fidelity (PSNR, MS-SSIM), action fidelity and cliff detection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import convolve2d

from .core import ActionVector, ImageTensor

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
C1 = 0.01 ** 2
C2 = 0.03 ** 2
DEFAULT_TOLERANCE = 0.05


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ms_ssim: float
    action_mse: float
    task_score: float

    def __post_init__(self):
        if not (self.psnr == math.inf or math.isfinite(self.psnr)):
            raise ValueError("psnr must be finite or +inf")
        if not 0.0 <= self.ms_ssim <= 1.0:
            raise ValueError("ms_ssim outside [0, 1]")
        if not self.action_mse >= 0:
            raise ValueError("action_mse must be non-negative")
        if not 0.0 <= self.task_score <= 1.0:
            raise ValueError("task_score outside [0, 1]")


def _pixels(x) -> np.ndarray:
    return x.data if isinstance(x, ImageTensor) else np.asarray(x, dtype=np.float64)


def _actions(a) -> np.ndarray:
    if isinstance(a, ActionVector):
        return a.to_array()
    if isinstance(a, (list, tuple)) and a and isinstance(a[0], ActionVector):
        return np.stack([v.to_array() for v in a])
    return np.asarray(a, dtype=np.float64)


def psnr(x, y) -> float:
    """10 log10(1 / MSE) for intensities in [0, 1]; +inf for identical images."""
    x, y = _pixels(x), _pixels(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-r ** 2 / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_terms(x: np.ndarray, y: np.ndarray, win: np.ndarray) -> tuple[float, float]:
    """Mean luminance and contrast-structure terms for one 2-D plane."""
    f = lambda img: convolve2d(img, win, mode="valid")
    mx, my = f(x), f(y)
    sxx = f(x * x) - mx * mx
    syy = f(y * y) - my * my
    sxy = f(x * y) - mx * my
    lum = (2 * mx * my + C1) / (mx * mx + my * my + C1)
    cs = (2 * sxy + C2) / (sxx + syy + C2)
    return float(lum.mean()), float(cs.mean())


def _halve(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim(x, y, scales: int = 3, window: int = 7, sigma: float = 1.5) -> float:
    """Multi-scale SSIM averaged over channels.

    Uses the first ``scales`` of the standard five weights renormalised to sum
    to one.  Negative contrast-structure or luminance means are clamped to 0
    so the result stays in [0, 1].
    """
    x, y = _pixels(x), _pixels(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    if not 1 <= scales <= len(MSSSIM_WEIGHTS):
        raise ValueError("scales must be between 1 and 5")
    need = window * 2 ** (scales - 1)
    if min(x.shape[-2:]) < need:
        raise ValueError(f"image sides must be at least {need} for {scales} scales")
    weights = np.array(MSSSIM_WEIGHTS[:scales])
    weights /= weights.sum()
    win = _gaussian_window(window, sigma)
    values = []
    for xc, yc in zip(x, y):
        total = 1.0
        for s in range(scales):
            lum, cs = _ssim_terms(xc, yc, win)
            total *= max(cs, 0.0) ** weights[s]
            if s == scales - 1:
                total *= max(lum, 0.0) ** weights[s]
            else:
                xc, yc = _halve(xc), _halve(yc)
        values.append(total)
    return float(min(max(np.mean(values), 0.0), 1.0))


def action_mse(a, a_hat) -> float:
    """Mean squared componentwise error; over a batch, the mean of per-example values."""
    a, a_hat = _actions(a), _actions(a_hat)
    if a.shape != a_hat.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {a_hat.shape}")
    return float(np.mean((a - a_hat) ** 2))


def task_score(a, a_hat, tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Fraction of examples whose largest action error is within ``tolerance``."""
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    a, a_hat = np.atleast_2d(_actions(a)), np.atleast_2d(_actions(a_hat))
    if a.shape != a_hat.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {a_hat.shape}")
    if a.shape[0] == 0:
        raise ValueError("empty batch")
    return float(np.mean(np.max(np.abs(a - a_hat), axis=1) <= tolerance))


def detect_cliff(sweep: Sequence[tuple[float, float]], plateau_fraction: float = 0.5) -> float | None:
    """SNR where a score curve falls below ``plateau_fraction`` of its plateau.

    The plateau is the mean of the two best scores.  The highest grid SNR
    scoring below the cut is located and the crossing is interpolated
    linearly towards the next grid point up.  Returns None when no point is
    below the cut or the plateau is zero.
    """
    pts = [(float(s), float(v)) for s, v in sweep]
    if len(pts) < 4:
        raise ValueError("need at least 4 sweep points")
    snrs = [s for s, _ in pts]
    if any(b <= a for a, b in zip(snrs, snrs[1:])):
        raise ValueError("sweep SNRs must be strictly ascending")
    scores = sorted((v for _, v in pts), reverse=True)
    plateau = 0.5 * (scores[0] + scores[1])
    if plateau <= 0:
        warnings.warn("detect_cliff: zero plateau, no threshold defined", RuntimeWarning, stacklevel=2)
        return None
    cut = plateau_fraction * plateau
    below = [i for i, (_, v) in enumerate(pts) if v < cut]
    if not below:
        return None
    i = below[-1]
    if i == len(pts) - 1:
        return pts[i][0]
    (s0, v0), (s1, v1) = pts[i], pts[i + 1]
    return s0 + (cut - v0) / (v1 - v0) * (s1 - s0)


def metric_report(x, y, a, a_hat, tolerance: float = DEFAULT_TOLERANCE, scales: int = 3) -> MetricReport:
    """Batch report: mean per-image PSNR and MS-SSIM plus action metrics.

    ``x``/``y`` are (N, C, H, W) arrays or single images.
    """
    xs, ys = _pixels(x), _pixels(y)
    if xs.ndim == 3:
        xs, ys = xs[None], ys[None]
    p = [psnr(xi, yi) for xi, yi in zip(xs, ys)]
    s = [ms_ssim(xi, yi, scales=scales) for xi, yi in zip(xs, ys)]
    return MetricReport(float(np.mean(p)), float(np.mean(s)), action_mse(a, a_hat), task_score(a, a_hat, tolerance))
