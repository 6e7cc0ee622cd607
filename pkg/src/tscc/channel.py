"""AWGN and Rayleigh block-fading channels acting on complex symbol frames.

Noise follows n ~ CN(0, s2 I) with s2 = P * 10^(-snr/10): each real and
imaginary component carries s2/2.  Every draw comes from the stream keyed by
(config.seed, channel kind, frame index), so a frame's noise is the same no
matter which worker processes it or in what order.
"""

from __future__ import annotations

import math

import numpy as np

from .core import ChannelConfig, SymbolFrame
from .rng import Stream

DEEP_FADE = 1e-12


def noise_stream(config: ChannelConfig, index=0) -> Stream:
    return Stream(config.seed, config.kind, "noise", index)


def fading_stream(config: ChannelConfig, index=0) -> Stream:
    return Stream(config.seed, config.kind, "fading", index)


def draw_noise(shape, variance: float, stream: Stream) -> np.ndarray:
    if variance == 0:
        return np.zeros(shape, dtype=np.complex128)
    return stream.complex_normal(shape, variance)


def draw_fading(shape, stream: Stream) -> np.ndarray:
    return stream.complex_normal(shape, 1.0)


def awgn(symbols: np.ndarray, variance: float, stream: Stream) -> np.ndarray:
    """Array form of the AWGN channel; works on any symbol array shape."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    return symbols + draw_noise(symbols.shape, variance, stream)


def rayleigh(symbols: np.ndarray, variance: float, fading: Stream, noise: Stream,
             equalize: bool = True) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.complex128)
    h = draw_fading(symbols.shape, fading)
    received = h * symbols + draw_noise(symbols.shape, variance, noise)
    if equalize:
        if np.any(np.abs(h) < DEEP_FADE):
            raise FloatingPointError("deep fade: |h| below 1e-12 with equalization enabled")
        received = received / h
    return received


def transmit_awgn(frame: SymbolFrame, config: ChannelConfig, index=0) -> SymbolFrame:
    if config.kind != "awgn":
        raise ValueError("transmit_awgn needs an AWGN channel config")
    received = awgn(frame.symbols, config.noise_variance, noise_stream(config, index))
    return SymbolFrame(received, frame.power_budget)


def transmit_rayleigh(frame: SymbolFrame, config: ChannelConfig, equalize: bool = True, index=0) -> SymbolFrame:
    if config.kind != "rayleigh":
        raise ValueError("transmit_rayleigh needs a Rayleigh channel config")
    received = rayleigh(frame.symbols, config.noise_variance, fading_stream(config, index),
                        noise_stream(config, index), equalize)
    return SymbolFrame(received, frame.power_budget)


def transmit(symbols: np.ndarray, config: ChannelConfig | None, index=0, equalize: bool = True) -> np.ndarray:
    """Dispatch on ``config.kind``; ``None`` is the noiseless identity channel."""
    if config is None:
        return np.asarray(symbols, dtype=np.complex128).copy()
    if config.kind == "awgn":
        return awgn(symbols, config.noise_variance, noise_stream(config, index))
    return rayleigh(symbols, config.noise_variance, fading_stream(config, index), noise_stream(config, index), equalize)


def measure_empirical_snr(sent, received) -> float:
    """10 log10(mean |s|^2 / mean |r - s|^2); +inf when no noise is present."""
    sent = np.concatenate([np.ravel(getattr(f, "symbols", f)) for f in _frames(sent)])
    received = np.concatenate([np.ravel(getattr(f, "symbols", f)) for f in _frames(received)])
    if sent.shape != received.shape:
        raise ValueError("sent and received must have equal lengths")
    noise = np.mean(np.abs(received - sent) ** 2)
    if noise == 0:
        return math.inf
    return 10.0 * math.log10(np.mean(np.abs(sent) ** 2) / noise)


def _frames(x):
    if isinstance(x, (SymbolFrame, np.ndarray)):
        return [x]
    return list(x)
