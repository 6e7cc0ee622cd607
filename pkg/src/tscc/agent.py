"""Frozen surrogate driving agent.

The agent maps a (flattened image, state vector) pair to an action
(steer, throttle, brake).  Its parameters never train: the codec learns to
make the agent's decisions on received images match its decisions on the
lossless source.  The same network, evaluated off-tape on the lossless image,
is the coach that provides the target action.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Dense, Tensor
from .core import ACTION_DIM, STATE_DIM, ActionVector, ImageTensor, StateVector


class SurrogateAgent:
    """Seeded random-but-fixed dense network ``A(y, m) -> a``.

    The image is centred at 0.5 before the first layer.  Outputs pass through
    tanh (steer) and logistic (throttle, brake) squashing, so every output is
    a valid action.  ``output_gain`` scales the pre-squash logits; it sets how
    strongly actions vary across scenes.
    """

    kind = "dense"

    def __init__(self, image_dims: Sequence[int], state_dim: int = STATE_DIM,
                 hidden_dims: Sequence[int] = (256, 64), seed: int = 7, output_gain: float = 1.0):
        if any(int(v) <= 0 for v in image_dims) or state_dim <= 0 or any(h <= 0 for h in hidden_dims):
            raise ValueError("agent dimensions must be positive")
        self.image_dims = tuple(int(v) for v in image_dims)
        self.state_dim = int(state_dim)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.seed = int(seed)
        self.output_gain = float(output_gain)
        sizes = [self.image_size + self.state_dim, *self.hidden_dims, ACTION_DIM]
        self.layers = [Dense(a, b, seed, f"agent{i}", frozen=True) for i, (a, b) in enumerate(zip(sizes, sizes[1:]))]

    @property
    def image_size(self) -> int:
        c, h, w = self.image_dims
        return c * h * w

    def parameters(self) -> list[ad.Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(np.ascontiguousarray(p.value).tobytes())
        return h.hexdigest()

    def describe(self) -> dict:
        return {"kind": self.kind, "image_dims": list(self.image_dims), "state_dim": self.state_dim,
                "hidden_dims": list(self.hidden_dims), "seed": self.seed, "output_gain": self.output_gain}

    def forward(self, images, states) -> Tensor:
        """Batched actions; ``images`` is (B, l), ``states`` is (B, state_dim)."""
        images, states = ad.as_tensor(images), ad.as_tensor(states)
        if images.ndim != 2 or images.shape[1] != self.image_size:
            raise ValueError(f"agent expects images of length {self.image_size}, got {images.shape}")
        if states.ndim != 2 or states.shape[1] != self.state_dim or states.shape[0] != images.shape[0]:
            raise ValueError(f"agent expects states of shape (B, {self.state_dim}), got {states.shape}")
        h = ad.concat([ad.sub(images, 0.5), states], axis=1)
        for layer in self.layers[:-1]:
            h = ad.relu(layer(h))
        logits = ad.mul(self.layers[-1](h), self.output_gain)
        return _squash(logits)

    __call__ = forward


class StructuredAgent:
    """Interpretable surrogate reading lane and obstacle evidence from pixels.

    Steering follows the brightness-weighted horizontal offset of lane-marking
    pixels in the upper part of the road; brake follows red obstacle evidence
    near the bottom of the frame; throttle trades off speed against brake.
    All features are smooth, so gradients w.r.t. the image exist everywhere.
    """

    kind = "structured"

    def __init__(self, image_dims: Sequence[int], state_dim: int = STATE_DIM, seed: int = 7, gain: float = 4.0):
        c, h, w = (int(v) for v in image_dims)
        if c != 3:
            raise ValueError("structured agent needs RGB images")
        self.image_dims = (c, h, w)
        self.state_dim = int(state_dim)
        self.seed = int(seed)
        self.gain = float(gain)
        rows = (np.arange(h) + 0.5) / h
        cols = (np.arange(w) + 0.5) / w - 0.5
        upper = np.exp(-((rows - 0.55) / 0.15) ** 2)
        lower = np.exp(-((rows - 0.85) / 0.12) ** 2)
        self._lane_mass = np.outer(upper, np.ones(w)).reshape(-1)
        self._lane_moment = np.outer(upper, cols).reshape(-1)
        self._near = (np.outer(lower, np.exp(-(cols / 0.3) ** 2))).reshape(-1)
        self._near /= self._near.sum()

    @property
    def image_size(self) -> int:
        c, h, w = self.image_dims
        return c * h * w

    def parameters(self) -> list[ad.Parameter]:
        return []

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self._lane_mass, self._lane_moment, self._near):
            h.update(arr.tobytes())
        return h.hexdigest()

    def describe(self) -> dict:
        return {"kind": self.kind, "image_dims": list(self.image_dims), "state_dim": self.state_dim,
                "seed": self.seed, "gain": self.gain}

    def forward(self, images, states) -> Tensor:
        images, states = ad.as_tensor(images), ad.as_tensor(states)
        if images.ndim != 2 or images.shape[1] != self.image_size:
            raise ValueError(f"agent expects images of length {self.image_size}, got {images.shape}")
        if states.ndim != 2 or states.shape[1] != self.state_dim:
            raise ValueError(f"agent expects states of shape (B, {self.state_dim}), got {states.shape}")
        n = self._lane_mass.size
        r, g, b = images[:, :n], images[:, n:2 * n], images[:, 2 * n:]
        # lane paint is bright in all channels; soft mask via product
        paint = ad.mul(ad.mul(r, g), b)
        mass = ad.add(ad.matmul(paint, self._lane_mass[:, None]), 1e-3)
        moment = ad.matmul(paint, self._lane_moment[:, None])
        offset = ad.div(moment, mass)
        red = ad.relu(ad.sub(r, ad.mul(ad.add(g, b), 0.5)))
        obstacle = ad.matmul(red, self._near[:, None])
        speed = states[:, 0:1]
        goal = states[:, 4:5]
        steer = ad.tanh(ad.add(ad.mul(offset, self.gain * 2.0), ad.mul(goal, 0.5)))
        brake_logit = ad.sub(ad.mul(obstacle, 12.0 * self.gain), 2.0)
        throttle_logit = ad.sub(ad.sub(1.0, ad.mul(speed, 2.0)), ad.mul(obstacle, 6.0 * self.gain))
        return ad.concat([steer, ad.sigmoid(throttle_logit), ad.sigmoid(brake_logit)], axis=1)

    __call__ = forward


def _squash(logits: Tensor) -> Tensor:
    steer = ad.tanh(logits[:, 0:1])
    rest = ad.sigmoid(logits[:, 1:3])
    return ad.concat([steer, rest], axis=1)


def build_surrogate_agent(image_dims: Sequence[int], state_dim: int = STATE_DIM,
                          hidden_dims: Sequence[int] = (256, 64), seed: int = 7,
                          kind: str = "dense", **kwargs):
    if kind == "dense":
        return SurrogateAgent(image_dims, state_dim, hidden_dims, seed, **kwargs)
    if kind == "structured":
        return StructuredAgent(image_dims, state_dim, seed, **kwargs)
    raise ValueError(f"unknown agent kind {kind!r}")


def _batch(agent, y, m):
    if isinstance(y, ImageTensor):
        if y.dims != agent.image_dims:
            raise ValueError(f"image dims {y.dims} do not match agent {agent.image_dims}")
        y = y.flat()[None, :]
    if isinstance(m, StateVector):
        m = m.to_array()[None, :]
    return y, m


def agent_act(agent, y, m) -> Tensor:
    """Differentiable agent output; records on the active tape if ``y`` does."""
    y, m = _batch(agent, y, m)
    return agent.forward(y, m)


def coach_act(agent, x, m) -> np.ndarray:
    """Target actions from lossless input, computed off-tape."""
    x, m = _batch(agent, x, m)
    if isinstance(x, Tensor):
        x = x.value
    with ad.no_grad():
        return agent.forward(np.asarray(x, dtype=np.float64), m).value


def act(agent, y: ImageTensor, m: StateVector) -> ActionVector:
    """Single-example convenience wrapper returning a typed action."""
    out = coach_act(agent, y, m)[0]
    out = np.clip(out, [-1.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    return ActionVector.from_array(out)
