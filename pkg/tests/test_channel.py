import math

import numpy as np
import pytest

from tscc.channel import (awgn, draw_fading, fading_stream, measure_empirical_snr, noise_stream, rayleigh, transmit,
                          transmit_awgn, transmit_rayleigh)
from tscc.core import ChannelConfig, SymbolFrame
from tscc.rng import Stream


def _unit_frame(k, seed=0):
    return SymbolFrame(np.exp(2j * np.pi * Stream(seed, "phase").uniform(k)))


def test_awgn_noise_statistics():
    k = 1_000_000
    sent = _unit_frame(k)
    noise = transmit_awgn(sent, ChannelConfig(snr_db=0.0, seed=3)).symbols - sent.symbols
    assert abs(np.mean(np.abs(noise) ** 2) - 1.0) < 0.01
    assert abs(noise.mean().real) < 3 * math.sqrt(0.5 / k)
    assert abs(noise.mean().imag) < 3 * math.sqrt(0.5 / k)
    assert np.var(noise.real) == pytest.approx(0.5, rel=0.01)


def test_zero_noise_variance_is_identity():
    sent = _unit_frame(64)
    stream = noise_stream(ChannelConfig(seed=1))
    assert np.array_equal(awgn(sent.symbols, 0.0, stream), sent.symbols)


def test_awgn_is_seed_deterministic():
    sent = _unit_frame(256)
    cfg = ChannelConfig(snr_db=5.0, seed=11)
    a = transmit_awgn(sent, cfg, index=4).symbols
    assert np.array_equal(a, transmit_awgn(sent, cfg, index=4).symbols)
    assert not np.array_equal(a, transmit_awgn(sent, cfg, index=5).symbols)
    assert not np.array_equal(a, transmit_awgn(sent, ChannelConfig(snr_db=5.0, seed=12), index=4).symbols)


def test_rayleigh_identities():
    sent = _unit_frame(128)
    fade, noise = Stream(0, "f"), Stream(0, "n")
    assert np.allclose(rayleigh(sent.symbols, 0.0, fade, noise), sent.symbols, rtol=0, atol=1e-12)

    class Quarter:
        def complex_normal(self, shape, variance=1.0):
            return np.full(shape, 1j)

    rotated = rayleigh(sent.symbols, 0.0, Quarter(), noise, equalize=False)
    assert np.array_equal(rotated, 1j * sent.symbols)


def test_rayleigh_gain_and_deep_fade():
    h = draw_fading(1_000_000, fading_stream(ChannelConfig(kind="rayleigh", seed=2)))
    assert abs(np.mean(np.abs(h) ** 2) - 1.0) < 0.01

    class Dead:
        def complex_normal(self, shape, variance=1.0):
            return np.zeros(shape, dtype=complex)

    with pytest.raises(FloatingPointError):
        rayleigh(np.ones(3, dtype=complex), 0.1, Dead(), Stream(0, "n"))
    out = rayleigh(np.ones(3, dtype=complex), 0.0, Dead(), Stream(0, "n"), equalize=False)
    assert np.array_equal(out, np.zeros(3))


def test_transmit_dispatch_and_kind_checks():
    sent = _unit_frame(32)
    awgn_cfg = ChannelConfig(snr_db=3.0, seed=5)
    ray_cfg = ChannelConfig(kind="rayleigh", snr_db=3.0, seed=5)
    assert np.array_equal(transmit(sent.symbols, awgn_cfg), transmit_awgn(sent, awgn_cfg).symbols)
    assert np.array_equal(transmit(sent.symbols, ray_cfg), transmit_rayleigh(sent, ray_cfg).symbols)
    assert np.array_equal(transmit(sent.symbols, None), sent.symbols)
    with pytest.raises(ValueError):
        transmit_awgn(sent, ray_cfg)
    with pytest.raises(ValueError):
        transmit_rayleigh(sent, awgn_cfg)


@pytest.mark.parametrize("snr", [-10, 0, 10, 20])
def test_measured_snr_matches_dial(snr):
    sent = _unit_frame(1_000_000, seed=snr + 50)
    received = transmit_awgn(sent, ChannelConfig(snr_db=snr, seed=snr + 50))
    assert measure_empirical_snr(sent, received) == pytest.approx(snr, abs=0.1)


def test_measured_snr_examples():
    sent = _unit_frame(100)
    assert measure_empirical_snr(sent, sent) == math.inf
    assert measure_empirical_snr(sent.symbols, 2 * sent.symbols) == pytest.approx(0.0, abs=1e-12)
    frames = [_unit_frame(10, s) for s in range(3)]
    assert measure_empirical_snr(frames, [SymbolFrame(2 * f.symbols) for f in frames]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        measure_empirical_snr(sent, _unit_frame(99))
