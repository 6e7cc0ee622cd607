"""Parametric 8x8 block-DCT image codec.

Stream layout (big-endian, 24-byte header then payload bits):

    offset  size  field
    0       2     magic b"DQ"
    2       1     format version (1)
    3       1     channels C
    4       2     height H
    6       2     width W
    8       8     quantisation scale q (IEEE-754 double)
    16      4     payload length in bits
    20      4     CRC-32 of the packed payload bytes

Payload, per channel, blocks in raster order.  A block is empty when its DC
equals the previous DC of the channel and all its AC levels are zero.  Before
every non-empty block, and once more at the end of the channel if empty
blocks remain, ``ue(number of empty blocks skipped)`` is written.  A
non-empty block is ``se(DC - previous DC)``, ``ue(number of nonzero AC)``,
then per nonzero AC coefficient in zig-zag order ``ue(zero run)``,
``ue(|level| - 1)`` and one sign bit (1 = negative).  ``ue``/``se`` are
order-0 Exp-Golomb codes.  Samples are shifted by -0.5 before the orthonormal DCT and
each coefficient is divided by ``q * LUMA[u, v] / 255``.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from ..core import ImageTensor
from .bitstream import BitReader, Bitstream, BitWriter, DecodeFailure

MAGIC = b"DQ"
VERSION = 1
BLOCK = 8
HEADER = struct.Struct(">2sBBHHdII")
HEADER_BITS = HEADER.size * 8

LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def _zigzag() -> np.ndarray:
    idx = sorted(((u, v) for u in range(BLOCK) for v in range(BLOCK)),
                 key=lambda p: (p[0] + p[1], p[1] if (p[0] + p[1]) % 2 == 0 else p[0]))
    return np.array([u * BLOCK + v for u, v in idx])


ZIGZAG = _zigzag()


@dataclass(frozen=True)
class CodecQuality:
    q: float = 1.0
    block: int = BLOCK

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("quantisation scale must be positive")
        if self.block != BLOCK:
            raise ValueError("only 8x8 blocks are supported")

    @property
    def steps(self) -> np.ndarray:
        return self.q * LUMA / 255.0


@dataclass(frozen=True)
class EncodedImage:
    stream: Bitstream
    source_size: int

    @property
    def nbits(self) -> int:
        return self.stream.nbits

    @property
    def bits_per_sample(self) -> float:
        return self.nbits / self.source_size

    @property
    def ratio(self) -> float:
        """Compressed size relative to 8-bit raw samples."""
        return self.nbits / (8.0 * self.source_size)


def _blocks(data: np.ndarray) -> np.ndarray:
    c, h, w = data.shape
    ph, pw = -h % BLOCK, -w % BLOCK
    if ph or pw:
        data = np.pad(data, ((0, 0), (0, ph), (0, pw)), mode="edge")
    c, h, w = data.shape
    return data.reshape(c, h // BLOCK, BLOCK, w // BLOCK, BLOCK).transpose(0, 1, 3, 2, 4)


def _quantise(x: ImageTensor, quality: CodecQuality) -> np.ndarray:
    coef = dctn(_blocks(x.data) - 0.5, axes=(-2, -1), norm="ortho")
    return np.rint(coef / quality.steps).astype(np.int64)


def dct_encode(x: ImageTensor, quality: CodecQuality) -> EncodedImage:
    levels = _quantise(x, quality)
    c, bh, bw = levels.shape[:3]
    zz = levels.reshape(c, bh * bw, BLOCK * BLOCK)[:, :, ZIGZAG]
    w = BitWriter()
    for ch in range(c):
        prev = 0
        skipped = 0
        for blk in zz[ch]:
            dc = int(blk[0])
            nz = np.flatnonzero(blk[1:])
            if dc == prev and nz.size == 0:
                skipped += 1
                continue
            w.ue(skipped)
            skipped = 0
            w.se(dc - prev)
            prev = dc
            w.ue(nz.size)
            last = -1
            for pos in nz:
                level = int(blk[1 + pos])
                w.ue(int(pos - last - 1))
                w.ue(abs(level) - 1)
                w.write(1 if level < 0 else 0, 1)
                last = pos
        if skipped:
            w.ue(skipped)
    payload = Bitstream.from_string(w.getvalue())
    header = HEADER.pack(MAGIC, VERSION, x.channels, x.height, x.width, float(quality.q),
                         payload.nbits, zlib.crc32(payload.data))
    stream = Bitstream.from_bits(np.concatenate([np.unpackbits(np.frombuffer(header, np.uint8)), payload.to_bits()]))
    return EncodedImage(stream, x.size)


def parse_header(bits: np.ndarray) -> tuple:
    if bits.size < HEADER_BITS:
        raise DecodeFailure("stream shorter than the header")
    magic, version, c, h, w, q, nbits, crc = HEADER.unpack(np.packbits(bits[:HEADER_BITS]).tobytes())
    if magic != MAGIC:
        raise DecodeFailure("bad magic")
    if version != VERSION:
        raise DecodeFailure(f"unsupported stream version {version}")
    if c == 0 or h == 0 or w == 0 or not (q > 0 and np.isfinite(q)):
        raise DecodeFailure("invalid header fields")
    if HEADER_BITS + nbits > bits.size:
        raise DecodeFailure("stream truncated")
    return c, h, w, q, nbits, crc


def dct_decode(stream) -> ImageTensor:
    """Inverse of :func:`dct_encode`; raises :class:`DecodeFailure` on bad input.

    Trailing bits after the declared payload are ignored, so a stream that
    was zero-padded for transport decodes unchanged.
    """
    bits = stream.to_bits() if isinstance(stream, Bitstream) else np.asarray(stream, dtype=np.uint8)
    c, h, w, q, nbits, crc = parse_header(bits)
    payload = bits[HEADER_BITS:HEADER_BITS + nbits]
    if zlib.crc32(np.packbits(payload).tobytes()) != crc:
        raise DecodeFailure("payload checksum mismatch")
    r = BitReader((payload + ord("0")).tobytes().decode("ascii"))
    bh, bw = -(-h // BLOCK), -(-w // BLOCK)
    zz = np.zeros((c, bh * bw, BLOCK * BLOCK), dtype=np.int64)
    for ch in range(c):
        prev = 0
        b = 0
        while b < bh * bw:
            skip = r.ue()
            if b + skip > bh * bw:
                raise DecodeFailure("block skip past the end of a channel")
            zz[ch, b:b + skip, 0] = prev
            b += skip
            if b == bh * bw:
                break
            prev += r.se()
            zz[ch, b, 0] = prev
            count = r.ue()
            if count > BLOCK * BLOCK - 1:
                raise DecodeFailure("too many AC coefficients in a block")
            pos = 0
            for _ in range(count):
                pos += r.ue()
                if pos >= BLOCK * BLOCK - 1:
                    raise DecodeFailure("AC run past the end of a block")
                mag = r.ue() + 1
                zz[ch, b, 1 + pos] = -mag if r.read(1) else mag
                pos += 1
            b += 1
    if r.remaining:
        raise DecodeFailure("unused payload bits")
    levels = np.empty_like(zz)
    levels[:, :, ZIGZAG] = zz
    levels = levels.reshape(c, bh, bw, BLOCK, BLOCK)
    pix = idctn(levels * CodecQuality(q).steps, axes=(-2, -1), norm="ortho") + 0.5
    img = pix.transpose(0, 1, 3, 2, 4).reshape(c, bh * BLOCK, bw * BLOCK)[:, :h, :w]
    return ImageTensor(np.clip(img, 0.0, 1.0))


def codec_roundtrip(x: ImageTensor, quality: CodecQuality) -> ImageTensor:
    return dct_decode(dct_encode(x, quality).stream)
