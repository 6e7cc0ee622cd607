"""Gray-mapped square QAM with exact soft demapping.

Each symbol label splits into an in-phase half (leading bits) and a
quadrature half (trailing bits).  Per axis, amplitude levels are listed from
the most positive to the most negative and level i carries the Gray label
i ^ (i >> 1), so 0 maps to the positive side:

    QPSK   bits 00 -> (+1 + 1j) / sqrt(2)
    64-QAM levels {+7, +5, +3, +1, -1, -3, -5, -7} / sqrt(42)
           labels 000, 001, 011, 010, 110, 111, 101, 100

Bits are MSB first within a label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True, eq=False)
class QamConstellation:
    order: int
    points: np.ndarray   # indexed by integer label
    labels: np.ndarray   # (order, bits_per_symbol) bit table
    scale: float

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]


def _axis_levels(m: int) -> np.ndarray:
    """Amplitude for each Gray label on one axis (unnormalised, odd integers)."""
    n = 1 << m
    pos = np.arange(n)
    gray = pos ^ (pos >> 1)
    levels = np.empty(n)
    levels[gray] = (n - 1) - 2 * pos
    return levels


def qam_constellation(order: int = 64) -> QamConstellation:
    if order not in (4, 16, 64):
        raise ValueError("supported orders are 4, 16 and 64")
    b = int(math.log2(order))
    half = b // 2
    levels = _axis_levels(half)
    label = np.arange(order)
    raw = levels[label >> half] + 1j * levels[label & ((1 << half) - 1)]
    mean_energy = float(np.mean(np.abs(raw) ** 2))  # 2 for QPSK, 10 for 16-QAM, 42 for 64-QAM
    scale = 1.0 / math.sqrt(mean_energy)
    labels = ((label[:, None] >> np.arange(b - 1, -1, -1)) & 1).astype(np.uint8)
    return QamConstellation(order, raw * scale, labels, scale)


def qam_modulate(bits, constellation: QamConstellation) -> tuple[np.ndarray, int]:
    """Map bits to unit-energy symbols; returns (symbols, zero padding appended)."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    b = constellation.bits_per_symbol
    pad = (-bits.size) % b
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    groups = bits.reshape(-1, b).astype(np.int64)
    label = groups @ (1 << np.arange(b - 1, -1, -1))
    return constellation.points[label], pad


def qam_demodulate_llr(symbols, constellation: QamConstellation, noise_variance: float,
                       method: str = "full", chunk: int = 16384) -> np.ndarray:
    """Per-bit LLRs, positive favouring bit 0.

    ``full``: ln sum_{s: b=0} exp(-|r-s|^2/s2) - ln sum_{s: b=1} exp(-|r-s|^2/s2).
    ``maxlog`` replaces each log-sum by its largest term.
    """
    if not noise_variance > 0:
        raise ValueError("noise variance must be positive")
    r = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    b = constellation.bits_per_symbol
    zero = constellation.labels == 0  # (M, b)
    out = np.empty((r.size, b))
    for start in range(0, r.size, chunk):
        rc = r[start:start + chunk]
        metric = -np.abs(rc[:, None] - constellation.points[None, :]) ** 2 / noise_variance
        for j in range(b):
            m0, m1 = metric[:, zero[:, j]], metric[:, ~zero[:, j]]
            if method == "full":
                out[start:start + chunk, j] = logsumexp(m0, axis=1) - logsumexp(m1, axis=1)
            elif method == "maxlog":
                out[start:start + chunk, j] = m0.max(axis=1) - m1.max(axis=1)
            else:
                raise ValueError(f"unknown demapping method {method!r}")
    return out.reshape(-1)


def qam_hard_demodulate(symbols, constellation: QamConstellation) -> np.ndarray:
    r = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    idx = np.argmin(np.abs(r[:, None] - constellation.points[None, :]), axis=1)
    return constellation.labels[idx].reshape(-1)
