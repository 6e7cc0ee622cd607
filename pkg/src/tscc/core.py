"""Shared domain types, SNR arithmetic and bandwidth accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

STATE_DIM = 6
ACTION_DIM = 3


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """A C x H x W image with intensities in [0, 1]."""

    data: np.ndarray

    def __init__(self, data):
        arr = _frozen(data)
        if arr.ndim != 3:
            raise ValueError(f"expected a C x H x W array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_flat(cls, flat, dims: Sequence[int]) -> "ImageTensor":
        flat = np.asarray(flat, dtype=np.float64)
        c, h, w = dims
        if flat.size != c * h * w:
            raise ValueError(f"flat length {flat.size} does not match {c}x{h}x{w}")
        return cls(flat.reshape(c, h, w))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        """Source bandwidth l = C*H*W."""
        return self.data.size

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __eq__(self, other):
        return isinstance(other, ImageTensor) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Measurement vector m fed to the driving agent next to the image."""

    speed: float
    throttle: float
    brake: float
    steer: float
    goal_dx: float
    goal_dy: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError("state components must be finite")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.speed, self.throttle, self.brake, self.steer, self.goal_dx, self.goal_dy)

    def to_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "StateVector":
        arr = np.asarray(arr, dtype=np.float64).reshape(-1)
        if arr.size != STATE_DIM:
            raise ValueError(f"state vector must have {STATE_DIM} components")
        return cls(*map(float, arr))

    def __eq__(self, other):
        return isinstance(other, StateVector) and self.as_tuple() == other.as_tuple()


@dataclass(frozen=True)
class ActionVector:
    """Control command (steer, throttle, brake)."""

    steer: float
    throttle: float
    brake: float

    def __post_init__(self):
        if not (-1.0 <= self.steer <= 1.0 and 0.0 <= self.throttle <= 1.0 and 0.0 <= self.brake <= 1.0):
            raise ValueError(f"action out of range: {self}")

    def to_array(self) -> np.ndarray:
        return np.array([self.steer, self.throttle, self.brake], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "ActionVector":
        arr = np.asarray(arr, dtype=np.float64).reshape(-1)
        if arr.size != ACTION_DIM:
            raise ValueError(f"action vector must have {ACTION_DIM} components")
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True, eq=False)
class LatentGaussian:
    """Encoder posterior N(mean, diag(std^2)) over the d-dimensional latent."""

    mean: np.ndarray
    std: np.ndarray

    def __init__(self, mean, std):
        mean, std = _frozen(mean).reshape(-1), _frozen(std).reshape(-1)
        if mean.shape != std.shape:
            raise ValueError("mean and std must have equal lengths")
        if not np.all(std > 0):
            raise ValueError("every std component must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class SymbolFrame:
    """Complex channel symbols together with the average-power budget P."""

    symbols: np.ndarray
    power_budget: float = 1.0

    def __init__(self, symbols, power_budget: float = 1.0):
        sym = _frozen(symbols, np.complex128).reshape(-1)
        if not np.all(np.isfinite(sym)):
            raise ValueError("symbols must be finite")
        if power_budget <= 0:
            raise ValueError("power budget must be positive")
        object.__setattr__(self, "symbols", sym)
        object.__setattr__(self, "power_budget", float(power_budget))

    def __len__(self) -> int:
        return self.symbols.size

    def average_power(self) -> float:
        return float(np.mean(np.abs(self.symbols) ** 2))


@dataclass(frozen=True)
class ChannelConfig:
    kind: str = "awgn"
    snr_db: float = 10.0
    power_budget: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("awgn", "rayleigh"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.power_budget <= 0:
            raise ValueError("power budget must be positive")

    @property
    def noise_variance(self) -> float:
        return snr_to_noise_variance(self.snr_db, self.power_budget)


@dataclass(frozen=True)
class CodecConfig:
    latent_dim: int = 32
    hidden_dims: tuple[int, ...] = (256,)
    beta_c_rec: float = 2048.0
    latent_samples: int = 1
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    power_budget: float = 1.0
    image_dims: tuple[int, int, int] = (3, 32, 64)
    objective: str = "task"

    def __post_init__(self):
        if self.latent_dim <= 0 or self.latent_dim % 2:
            raise ValueError("latent_dim must be a positive even number")
        if self.latent_samples < 1:
            raise ValueError("latent_samples must be >= 1")
        if self.beta_c_rec <= 0:
            raise ValueError("beta_c_rec must be positive")
        if self.objective not in ("task", "reconstruction"):
            raise ValueError(f"unknown objective {self.objective!r}")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "image_dims", tuple(int(v) for v in self.image_dims))

    @property
    def channel_dim(self) -> int:
        return self.latent_dim // 2

    @property
    def source_dim(self) -> int:
        c, h, w = self.image_dims
        return c * h * w


def snr_to_noise_variance(snr_db: float, power_budget: float = 1.0) -> float:
    """Complex noise variance per symbol for a given SNR: P * 10^(-snr/10)."""
    if not power_budget > 0:
        raise ValueError("power budget must be positive")
    return power_budget * 10.0 ** (-snr_db / 10.0)


def noise_variance_to_snr(variance: float, power_budget: float = 1.0) -> float:
    if not variance > 0 or not power_budget > 0:
        raise ValueError("variance and power budget must be positive")
    return 10.0 * math.log10(power_budget / variance)


def compression_ratio(channel_bandwidth: int, source_bandwidth: int) -> float:
    """Bandwidth ratio k/l."""
    if source_bandwidth <= 0:
        raise ValueError("source bandwidth must be positive")
    if channel_bandwidth < 1:
        raise ValueError("channel bandwidth must be >= 1")
    return float(Fraction(int(channel_bandwidth), int(source_bandwidth)))
