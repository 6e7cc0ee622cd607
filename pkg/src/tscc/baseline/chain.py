"""Separate source and channel coding over AWGN: DCT codec, LDPC, QAM.

Transmit path for one image:

    dct_encode -> zero-pad to whole LDPC blocks -> seeded bit interleaver
    -> ldpc_encode per block -> qam_modulate (zero-pad to whole symbols)
    -> scale by sqrt(P) -> AWGN

and the receive path runs it backwards with soft demapping and sum-product
decoding.  Any unconverged block or an unparsable stream yields the
constant 0.5 failure image with ``failed=True``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..channel import transmit
from ..core import ChannelConfig, ImageTensor
from ..rng import Stream
from .bitstream import DecodeFailure
from .dct_codec import CodecQuality, dct_decode, dct_encode
from .ldpc import LdpcCode, bpsk_llrs, ldpc_build, ldpc_decode_bp, ldpc_encode
from .qam import QamConstellation, qam_constellation, qam_demodulate_llr, qam_hard_demodulate, qam_modulate

NOISELESS_LLR = 40.0
FAILURE_LEVEL = 0.5


@dataclass(frozen=True)
class ChainResult:
    image: ImageTensor
    failed: bool
    channel_uses: int
    source_bits: int
    coded_bits: int
    blocks: int
    failed_blocks: int
    mean_iterations: float
    bit_errors: int
    decode_error: str = ""

    @property
    def ratio(self) -> float:
        """Complex channel symbols per source sample."""
        return self.channel_uses / self.image.size


def interleaver(length: int, seed: int) -> np.ndarray:
    return Stream(seed, "interleaver", length).permutation(length)


def failure_image(dims) -> ImageTensor:
    return ImageTensor(np.full(dims, FAILURE_LEVEL))


def run_digital_chain(x: ImageTensor, quality: CodecQuality, code: LdpcCode,
                      constellation: QamConstellation, channel: ChannelConfig | None,
                      index=0, interleaver_seed: int = 0, max_iters: int = 50) -> ChainResult:
    """Send one image through the digital chain; ``channel=None`` is noiseless."""
    if channel is not None and channel.kind != "awgn":
        raise ValueError("the digital chain models AWGN only")
    encoded = dct_encode(x, quality)
    source = encoded.stream.to_bits()
    n_blocks = -(-source.size // code.k_info)
    padded = np.zeros(n_blocks * code.k_info, dtype=np.uint8)
    padded[:source.size] = source
    perm = interleaver(padded.size, interleaver_seed)
    messages = padded[perm].reshape(n_blocks, code.k_info)
    coded = ldpc_encode(code, messages).reshape(-1)
    symbols, pad = qam_modulate(coded, constellation)
    power = 1.0 if channel is None else channel.power_budget
    received = transmit(math.sqrt(power) * symbols, channel, index) / math.sqrt(power)

    if channel is None:
        hard = qam_hard_demodulate(received, constellation)
        llrs = NOISELESS_LLR * (1.0 - 2.0 * hard.astype(np.float64))
    else:
        llrs = qam_demodulate_llr(received, constellation, channel.noise_variance / power)
    llrs = llrs[:coded.size].reshape(n_blocks, code.n)
    decoded, converged, iters = ldpc_decode_bp(code, llrs, max_iters=max_iters)

    restored = np.empty_like(padded)
    restored[perm] = decoded.reshape(-1)
    bit_errors = int(np.count_nonzero(restored[:source.size] != source))
    failed_blocks = int(np.count_nonzero(~converged))
    stats = dict(channel_uses=int(symbols.size), source_bits=int(source.size), coded_bits=int(coded.size),
                 blocks=n_blocks, failed_blocks=failed_blocks, mean_iterations=float(np.mean(iters)),
                 bit_errors=bit_errors)
    if failed_blocks:
        return ChainResult(failure_image(x.dims), True, decode_error="ldpc did not converge", **stats)
    try:
        image = dct_decode(restored[:source.size])
    except DecodeFailure as exc:
        return ChainResult(failure_image(x.dims), True, decode_error=str(exc), **stats)
    return ChainResult(image, False, **stats)


def chain_channel_uses(source_bits: int, code: LdpcCode, constellation: QamConstellation) -> int:
    blocks = -(-source_bits // code.k_info)
    return -(-blocks * code.n // constellation.bits_per_symbol)


@dataclass(frozen=True)
class BerPoint:
    ebn0_db: float
    info_bits: int
    bit_errors: int
    frames: int
    frame_errors: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.info_bits

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames


def ber_point_bpsk(code: LdpcCode, ebn0_db: float, frames: int, seed: int = 0, batch: int = 200,
                   max_iters: int = 50) -> BerPoint:
    """Monte-Carlo BER of random messages over BPSK/AWGN."""
    errors = frame_errors = 0
    for start in range(0, frames, batch):
        nb = min(batch, frames - start)
        stream = Stream(seed, "ber-bpsk", float(ebn0_db), start)
        u = stream.bits((nb, code.k_info))
        llr = bpsk_llrs(ldpc_encode(code, u), ebn0_db, code.rate, stream.child("channel"))
        msg, _, _ = ldpc_decode_bp(code, llr, max_iters=max_iters)
        wrong = msg != u
        errors += int(wrong.sum())
        frame_errors += int(wrong.any(axis=1).sum())
    return BerPoint(float(ebn0_db), frames * code.k_info, errors, frames, frame_errors)


def ber_point_qam(code: LdpcCode, constellation: QamConstellation, snr_db: float, frames: int,
                  seed: int = 0, batch: int = 100, max_iters: int = 50) -> BerPoint:
    """Monte-Carlo coded BER over QAM/AWGN at a per-symbol SNR."""
    errors = frame_errors = 0
    channel = ChannelConfig(kind="awgn", snr_db=float(snr_db), seed=seed)
    for start in range(0, frames, batch):
        nb = min(batch, frames - start)
        u = Stream(seed, "ber-qam", float(snr_db), start).bits((nb, code.k_info))
        coded = ldpc_encode(code, u).reshape(-1)
        symbols, _ = qam_modulate(coded, constellation)
        received = transmit(symbols, channel, index=("ber", start))
        llr = qam_demodulate_llr(received, constellation, channel.noise_variance)[:coded.size]
        msg, _, _ = ldpc_decode_bp(code, llr.reshape(nb, code.n), max_iters=max_iters)
        wrong = msg != u
        errors += int(wrong.sum())
        frame_errors += int(wrong.any(axis=1).sum())
    return BerPoint(float(snr_db), frames * code.k_info, errors, frames, frame_errors)


def measure_threshold(points: list[BerPoint], target_ber: float = 1e-4) -> float | None:
    """Lowest SNR from which every point of an ascending sweep has BER below target."""
    snrs = [p.ebn0_db for p in points]
    if snrs != sorted(snrs):
        raise ValueError("sweep must be in ascending SNR order")
    threshold = None
    for p in reversed(points):
        if p.ber >= target_ber:
            break
        threshold = p.ebn0_db
    return threshold


def default_digital_setup(n: int = 1536, k_info: int = 512, order: int = 64, seed: int = 0):
    return ldpc_build(n, k_info, seed=seed), qam_constellation(order)
