"""Bit containers and Exp-Golomb coding helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DecodeFailure(Exception):
    """The received stream cannot be parsed into an image."""


@dataclass(frozen=True)
class Bitstream:
    """``nbits`` bits stored MSB-first in ``data`` (the last byte zero-padded)."""

    data: bytes
    nbits: int

    def __post_init__(self):
        if len(self.data) != (self.nbits + 7) // 8:
            raise ValueError("byte length does not match bit length")

    @classmethod
    def from_bits(cls, bits) -> "Bitstream":
        bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
        return cls(np.packbits(bits).tobytes(), int(bits.size))

    @classmethod
    def from_string(cls, s: str) -> "Bitstream":
        return cls.from_bits(np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0"))

    def to_bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.data, dtype=np.uint8))[:self.nbits]

    def to_string(self) -> str:
        return (self.to_bits() + ord("0")).tobytes().decode("ascii")

    def __len__(self) -> int:
        return self.nbits

    def __add__(self, other: "Bitstream") -> "Bitstream":
        return Bitstream.from_bits(np.concatenate([self.to_bits(), other.to_bits()]))

    def split(self, at: int) -> tuple["Bitstream", "Bitstream"]:
        if not 0 <= at <= self.nbits:
            raise ValueError("split point outside the stream")
        bits = self.to_bits()
        return Bitstream.from_bits(bits[:at]), Bitstream.from_bits(bits[at:])


class BitWriter:
    def __init__(self):
        self._parts: list[str] = []

    def write(self, value: int, width: int):
        if width:
            self._parts.append(format(value, f"0{width}b"))

    def ue(self, v: int):
        """Unsigned Exp-Golomb, order 0."""
        code = format(v + 1, "b")
        self._parts.append("0" * (len(code) - 1) + code)

    def se(self, v: int):
        self.ue(2 * v - 1 if v > 0 else -2 * v)

    def getvalue(self) -> str:
        return "".join(self._parts)


class BitReader:
    def __init__(self, bits: str, pos: int = 0):
        self.bits = bits
        self.pos = pos

    def read(self, width: int) -> int:
        end = self.pos + width
        if end > len(self.bits):
            raise DecodeFailure("stream truncated")
        v = int(self.bits[self.pos:end], 2) if width else 0
        self.pos = end
        return v

    def ue(self) -> int:
        one = self.bits.find("1", self.pos)
        if one < 0:
            raise DecodeFailure("stream truncated inside an Exp-Golomb code")
        zeros = one - self.pos
        if zeros > 32:
            raise DecodeFailure("Exp-Golomb prefix too long")
        self.pos = one
        return self.read(zeros + 1) - 1

    def se(self) -> int:
        k = self.ue()
        return (k + 1) // 2 if k % 2 else -(k // 2)

    @property
    def remaining(self) -> int:
        return len(self.bits) - self.pos
