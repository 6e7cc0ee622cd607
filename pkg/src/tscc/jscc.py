"""Variational joint source-channel codec and its task-oriented training.

Transmit chain for one image x (length l):

    (mu, logvar) = encoder(x)            sigma = exp(logvar / 2)
    z  = eps * sigma + mu                eps ~ N(0, I), length d
    zc = pack(z)                         k = d/2 complex symbols
    zt = sqrt(k P) zc / ||zc||           average power exactly P
    zr = channel(zt)                     identity while training
    y  = decoder(unpack(zr))             logistic output in [0, 1]

Packing is a pure relabelling of the real vector, so on the autodiff path the
normalisation runs directly on the real pairs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .agent import coach_act
from .autodiff import Dense, Parameter, Tape, Tensor
from .channel import transmit
from .core import ChannelConfig, CodecConfig, ImageTensor, LatentGaussian, SymbolFrame
from .rng import Stream

log = logging.getLogger(__name__)

LOGVAR_MIN, LOGVAR_MAX = -30.0, 20.0


class JsccEncoder:
    def __init__(self, source_dim: int, latent_dim: int, hidden_dims: Sequence[int], seed: int):
        if latent_dim % 2:
            raise ValueError("latent_dim must be even")
        self.source_dim = int(source_dim)
        self.latent_dim = int(latent_dim)
        sizes = [self.source_dim, *hidden_dims, 2 * self.latent_dim]
        self.layers = [Dense(a, b, seed, f"enc{i}") for i, (a, b) in enumerate(zip(sizes, sizes[1:]))]

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, x) -> tuple[Tensor, Tensor]:
        x = ad.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.source_dim:
            raise ValueError(f"encoder expects inputs of length {self.source_dim}, got {x.shape}")
        h = x
        for layer in self.layers[:-1]:
            h = ad.relu(layer(h))
        out = self.layers[-1](h)
        d = self.latent_dim
        mu = out[:, :d]
        logvar = ad.clamp(out[:, d:], LOGVAR_MIN, LOGVAR_MAX)
        return mu, logvar


class JsccDecoder:
    def __init__(self, latent_dim: int, source_dim: int, hidden_dims: Sequence[int], seed: int):
        self.latent_dim = int(latent_dim)
        self.source_dim = int(source_dim)
        sizes = [self.latent_dim, *hidden_dims, self.source_dim]
        self.layers = [Dense(a, b, seed, f"dec{i}") for i, (a, b) in enumerate(zip(sizes, sizes[1:]))]

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, z) -> Tensor:
        z = ad.as_tensor(z)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ValueError(f"decoder expects latents of length {self.latent_dim}, got {z.shape}")
        h = z
        for layer in self.layers[:-1]:
            h = ad.relu(layer(h))
        return ad.sigmoid(self.layers[-1](h))


@dataclass
class JsccCodec:
    config: CodecConfig
    encoder: JsccEncoder
    decoder: JsccDecoder

    @classmethod
    def build(cls, config: CodecConfig) -> "JsccCodec":
        hidden = config.hidden_dims
        enc = JsccEncoder(config.source_dim, config.latent_dim, hidden, config.seed)
        dec = JsccDecoder(config.latent_dim, config.source_dim, tuple(reversed(hidden)), config.seed)
        return cls(config, enc, dec)

    def parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + self.decoder.parameters()


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction: float
    kl: float
    beta: float
    total: float


# ---------------------------------------------------------------- single-frame ops

def encode(enc: JsccEncoder, x) -> LatentGaussian:
    flat = x.flat() if isinstance(x, ImageTensor) else np.asarray(x, dtype=np.float64).reshape(-1)
    if flat.size != enc.source_dim:
        raise ValueError(f"image has {flat.size} samples, encoder expects {enc.source_dim}")
    with ad.no_grad():
        mu, logvar = enc(flat[None, :])
    return LatentGaussian(mu.value[0], np.exp(logvar.value[0] / 2.0))


def reparameterize(latent: LatentGaussian, epsilon) -> np.ndarray:
    eps = np.asarray(epsilon, dtype=np.float64).reshape(-1)
    if eps.size != latent.dim:
        raise ValueError(f"epsilon has length {eps.size}, latent has {latent.dim}")
    return eps * latent.std + latent.mean


def pack_complex(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] % 2:
        raise ValueError("latent length must be even to pack into complex symbols")
    return z[..., 0::2] + 1j * z[..., 1::2]


def unpack_complex(zc) -> np.ndarray:
    zc = np.asarray(zc, dtype=np.complex128)
    out = np.empty(zc.shape[:-1] + (2 * zc.shape[-1],), dtype=np.float64)
    out[..., 0::2] = zc.real
    out[..., 1::2] = zc.imag
    return out


def normalize_power(zc, k: int | None = None, power_budget: float = 1.0) -> SymbolFrame:
    zc = np.asarray(zc, dtype=np.complex128).reshape(-1)
    k = zc.size if k is None else int(k)
    energy = float(np.vdot(zc, zc).real)
    if energy == 0.0:
        raise ValueError("cannot normalise an all-zero latent")
    return SymbolFrame(math.sqrt(k * power_budget) * zc / math.sqrt(energy), power_budget)


def decode(dec: JsccDecoder, zr, dims: Sequence[int] | None = None) -> ImageTensor:
    symbols = zr.symbols if isinstance(zr, SymbolFrame) else np.asarray(zr)
    if symbols.size * 2 != dec.latent_dim:
        raise ValueError(f"frame has {symbols.size} symbols, decoder expects {dec.latent_dim // 2}")
    with ad.no_grad():
        y = dec(unpack_complex(symbols.reshape(-1))[None, :]).value[0]
    if dims is None:
        dims = (1, 1, y.size)
    return ImageTensor.from_flat(y, dims)


def compute_kl(latent: LatentGaussian) -> float:
    var = latent.std ** 2
    return float(0.5 * np.sum(latent.mean ** 2 + var - np.log(var) - 1.0))


def compute_vae_loss(x, reconstructions, latent: LatentGaussian, beta_rec: float = 1.0) -> LossBreakdown:
    x = _flat(x)
    recs = [_flat(r) for r in reconstructions]
    if not recs:
        raise ValueError("need at least one reconstruction sample")
    rec = float(np.mean([np.sum((x - r) ** 2) for r in recs]))
    kl = compute_kl(latent)
    return LossBreakdown(rec, kl, beta_rec, beta_rec * rec + kl)


def compute_tscc_loss(a, a_hats, latent: LatentGaussian, beta_c_rec: float = 2048.0) -> LossBreakdown:
    a = _flat(a)
    a_hats = [_flat(ah) for ah in a_hats]
    if not a_hats:
        raise ValueError("need at least one agent output")
    if any(ah.shape != a.shape for ah in a_hats):
        raise ValueError("action dimensions differ")
    rec = float(np.mean([np.sum((a - ah) ** 2) for ah in a_hats]))
    kl = compute_kl(latent)
    return LossBreakdown(rec, kl, beta_c_rec, beta_c_rec * rec + kl)


def _flat(v) -> np.ndarray:
    if isinstance(v, ImageTensor):
        return v.flat()
    if hasattr(v, "to_array"):
        return v.to_array()
    if isinstance(v, Tensor):
        return v.value.reshape(-1)
    return np.asarray(v, dtype=np.float64).reshape(-1)


# ---------------------------------------------------------------- batched autodiff path

def kl_terms(mu: Tensor, logvar: Tensor) -> Tensor:
    """Per-example KL to N(0, I), shape (B,)."""
    inner = ad.sub(ad.add(ad.square(mu), ad.exp(logvar)), ad.add(logvar, 1.0))
    return ad.mul(ad.sum(inner, axis=1), 0.5)


def normalize_power_tensor(z: Tensor, power_budget: float = 1.0) -> Tensor:
    """Row-wise power normalisation on the real (interleaved) representation."""
    k = z.shape[1] // 2
    energy = ad.sum(ad.square(z), axis=1, keepdims=True)
    return ad.mul(ad.div(z, ad.sqrt(energy)), math.sqrt(k * power_budget))


@dataclass
class PipelineOutput:
    mu: Tensor
    logvar: Tensor
    sent: Tensor
    received: Tensor
    y: Tensor

    def latents(self) -> list[LatentGaussian]:
        std = np.exp(self.logvar.value / 2.0)
        return [LatentGaussian(m, s) for m, s in zip(self.mu.value, std)]


def forward_pipeline(codec: JsccCodec, x, channel: ChannelConfig | None = None, epsilon=None,
                     index=0, equalize: bool = True) -> PipelineOutput:
    """Encoder -> reparameterisation -> packing/normalisation -> channel -> decoder.

    ``x`` is a batch (B, l) or a single ImageTensor.  ``channel=None`` is the
    noiseless training mode (received == sent).  ``epsilon`` of None means
    eps = 0, i.e. the latent mean is transmitted.  On the channel path the
    channel perturbation enters as an additive constant.
    """
    if isinstance(x, ImageTensor):
        x = x.flat()[None, :]
    mu, logvar = codec.encoder(x)
    if epsilon is None:
        z = mu
    else:
        eps = np.asarray(epsilon, dtype=np.float64).reshape(mu.shape)
        z = ad.add(ad.mul(eps, ad.exp(ad.mul(logvar, 0.5))), mu)
    sent = normalize_power_tensor(z, codec.config.power_budget)
    if channel is None:
        received = sent
    else:
        symbols = pack_complex(sent.value)
        out = transmit(symbols, channel, index=index, equalize=equalize)
        received = ad.add(sent, unpack_complex(out) - sent.value)
    y = codec.decoder(received)
    return PipelineOutput(mu, logvar, sent, received, y)


def transmit_images(codec: JsccCodec, images: np.ndarray, channel: ChannelConfig | None,
                    sample_latent: bool = False, index=0, equalize: bool = True) -> np.ndarray:
    """Inference helper: reconstructions (B, l) for a batch of images."""
    eps = None
    if sample_latent:
        eps = Stream(channel.seed if channel else 0, "eval-eps", index).normal((images.shape[0], codec.config.latent_dim))
    with ad.no_grad():
        return forward_pipeline(codec, images, channel, eps, index=index, equalize=equalize).y.value


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    codec: JsccCodec
    history: list[float] = field(default_factory=list)


def batch_loss(codec: JsccCodec, images: np.ndarray, states: np.ndarray, agent, coach_actions: np.ndarray | None,
               eps_list: Sequence[np.ndarray]) -> Tensor:
    """Mean over the batch of beta * (1/t) sum_i ||target - output_i||^2 + KL.

    With ``objective == "task"`` the squared error is on agent actions
    (coach actions vs agent on reconstructions).  With ``"reconstruction"``
    it is on pixels, i.e. the beta-VAE objective.
    """
    cfg = codec.config
    mu, logvar = codec.encoder(images)
    sigma = ad.exp(ad.mul(logvar, 0.5))
    rec = None
    for eps in eps_list:
        z = ad.add(ad.mul(eps, sigma), mu)
        y = codec.decoder(normalize_power_tensor(z, cfg.power_budget))
        if cfg.objective == "task":
            err = ad.sub(agent(y, states), coach_actions)
        else:
            err = ad.sub(y, images)
        term = ad.sum(ad.square(err), axis=1)
        rec = term if rec is None else ad.add(rec, term)
    rec = ad.mul(rec, 1.0 / len(eps_list))
    per_example = ad.add(ad.mul(rec, cfg.beta_c_rec), kl_terms(mu, logvar))
    return ad.mean(per_example)


def train_tscc(config: CodecConfig, dataset, agent=None, coach=None, steps: int | None = None,
               codec: JsccCodec | None = None) -> TrainResult:
    """Noiseless training of the codec against the frozen agent.

    ``dataset`` needs ``images`` (N, l) and ``states`` (N, 6) arrays.  The
    coach defaults to the agent itself evaluated off-tape on lossless input.
    ``steps`` overrides ``config.epochs`` with an explicit step count.
    """
    if config.objective == "task" and agent is None:
        raise ValueError("task-oriented training needs an agent")
    coach = agent if coach is None else coach
    codec = JsccCodec.build(config) if codec is None else codec
    images, states = np.asarray(dataset.images), np.asarray(dataset.states)
    n = images.shape[0]
    bs = min(config.batch_size, n)
    per_epoch = max(1, n // bs)
    total = steps if steps is not None else config.epochs * per_epoch
    targets = coach_act(coach, images, states) if config.objective == "task" else None
    params = codec.parameters()
    stream = Stream(config.seed, "train")
    history: list[float] = []
    order = None
    for step in range(total):
        if step % per_epoch == 0:
            order = stream.child("perm", step // per_epoch).permutation(n)
        idx = order[(step % per_epoch) * bs:(step % per_epoch + 1) * bs]
        eps_stream = stream.child("eps", step)
        eps_list = [eps_stream.normal((idx.size, config.latent_dim)) for _ in range(config.latent_samples)]
        for p in params:
            p.zero_grad()
        with Tape() as tape:
            loss = batch_loss(codec, images[idx], states[idx], agent,
                              None if targets is None else targets[idx], eps_list)
        value = float(loss.value)
        if not math.isfinite(value):
            raise FloatingPointError(f"non-finite training loss at step {step}")
        tape.backward(loss, params)
        ad.adam_update(params, config.learning_rate)
        history.append(value)
        if step % 200 == 0:
            log.debug("step %d loss %.5g", step, value)
    return TrainResult(codec, history)
