"""Procedural road scenes and image-directory ingestion."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import STATE_DIM, ImageTensor, StateVector
from ..rng import Stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneSpec:
    image_dims: tuple[int, int, int] = (3, 32, 64)
    curvature_range: tuple[float, float] = (0.15, 1.0)
    obstacle_range: tuple[int, int] = (0, 3)
    lighting: tuple[float, float] = (0.6, 1.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "image_dims", tuple(int(v) for v in self.image_dims))
        if self.image_dims[0] != 3:
            raise ValueError("scenes are rendered in RGB")
        lo, hi = self.curvature_range
        if not 0 <= lo <= hi:
            raise ValueError("curvature range must satisfy 0 <= lo <= hi")


@dataclass
class Dataset:
    """Paired images (N, l) and states (N, STATE_DIM) with the image geometry."""

    images: np.ndarray
    states: np.ndarray
    image_dims: tuple[int, int, int]

    def __len__(self) -> int:
        return self.images.shape[0]

    def image(self, i: int) -> ImageTensor:
        return ImageTensor(self.images[i].reshape(self.image_dims))

    def state(self, i: int) -> StateVector:
        return StateVector.from_array(self.states[i])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.states[idx], self.image_dims)

    def split(self, n_train: int) -> tuple["Dataset", "Dataset"]:
        return self.subset(slice(0, n_train)), self.subset(slice(n_train, None))

    def save(self, path) -> None:
        np.savez(path, images=self.images, states=self.states, image_dims=np.array(self.image_dims))

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path) as z:
            return cls(z["images"], z["states"], tuple(int(v) for v in z["image_dims"]))


def _render(stream: Stream, spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    _, h, w = spec.image_dims
    u = stream.uniform(16)
    lo, hi = spec.curvature_range
    sign = 1.0 if u[0] < 0.5 else -1.0
    curvature = sign * (lo + (hi - lo) * u[1])
    offset = (u[2] - 0.5) * 0.2
    horizon = 0.35 + 0.1 * u[3]
    light = spec.lighting[0] + (spec.lighting[1] - spec.lighting[0]) * u[4]
    dash_phase = u[5]
    speed = u[6]
    n_obs = int(spec.obstacle_range[0] + np.floor(u[7] * (spec.obstacle_range[1] - spec.obstacle_range[0] + 1)))
    n_obs = min(n_obs, spec.obstacle_range[1])

    rows = ((np.arange(h) + 0.5) / h)[:, None]
    cols = ((np.arange(w) + 0.5) / w)[None, :]
    img = np.empty((3, h, w))

    sky_t = np.clip(rows / horizon, 0.0, 1.0)
    sky = np.stack([0.35 + 0.35 * sky_t, 0.55 + 0.3 * sky_t, 0.95 - 0.1 * sky_t])
    grass = np.array([0.25, 0.5, 0.2])[:, None, None] * (0.8 + 0.4 * rows)
    below = rows >= horizon
    img[:] = np.where(below, grass, sky)

    # depth: 0 at the horizon, 1 at the bottom edge
    t = np.clip((rows - horizon) / (1.0 - horizon), 0.0, 1.0)
    centre = 0.5 + offset + curvature * 0.35 * (1.0 - t) ** 2
    half = 0.04 + 0.42 * t
    road = below & (np.abs(cols - centre) <= half)
    img = np.where(road, np.array([0.42, 0.42, 0.45])[:, None, None], img)

    # dashed centre marking, dash period in perspective-corrected depth
    depth = 1.0 / (t + 0.15)
    dashed = (np.floor(depth * 1.2 + dash_phase) % 2) == 0
    marking = road & dashed & (np.abs(cols - centre) <= 0.01 + 0.03 * t) & (t > 0.05)
    img = np.where(marking, np.array([0.97, 0.95, 0.9])[:, None, None], img)

    palette = np.array([[0.85, 0.15, 0.1], [0.9, 0.2, 0.2], [0.95, 0.8, 0.1], [0.2, 0.3, 0.85]])
    nearest = 0.0
    ou = stream.uniform((max(n_obs, 1), 4))
    for i in range(n_obs):
        ot = 0.25 + 0.7 * ou[i, 0]
        row_c = horizon + ot * (1.0 - horizon)
        col_c = 0.5 + offset + curvature * 0.35 * (1.0 - ot) ** 2 + (ou[i, 1] - 0.5) * (0.04 + 0.42 * ot)
        size = 0.03 + 0.12 * ot
        box = (np.abs(rows - row_c) <= size * 0.8) & (np.abs(cols - col_c) <= size)
        colour = palette[int(ou[i, 2] * len(palette)) % len(palette)]
        img = np.where(box, colour[:, None, None], img)
        nearest = max(nearest, ot)

    img = np.clip(img * light, 0.0, 1.0)
    goal_dx = curvature * (0.6 + 0.4 * u[8])
    goal_dy = 0.5 + 0.5 * u[9]
    steer = float(np.clip(0.8 * curvature + 0.1 * (u[10] - 0.5), -1.0, 1.0))
    brake = float(np.clip(nearest - 0.5, 0.0, 1.0))
    throttle = float(np.clip((1.0 - speed) * (1.0 - brake), 0.0, 1.0))
    state = np.array([speed, throttle, brake, steer, goal_dx, goal_dy])
    assert state.size == STATE_DIM
    return img.reshape(-1), state


def generate_dataset(spec: SceneSpec, count: int) -> Dataset:
    """Render ``count`` road scenes with states derived from scene geometry."""
    if count < 1:
        raise ValueError("count must be >= 1")
    root = Stream(spec.seed, "scenes")
    l = int(np.prod(spec.image_dims))
    images = np.empty((count, l))
    states = np.empty((count, STATE_DIM))
    for i in range(count):
        images[i], states[i] = _render(root.child(i), spec)
    return Dataset(images, states, spec.image_dims)


def _resize(img, target_hw):
    from PIL import Image

    th, tw = target_hw
    w, h = img.size
    target_aspect = tw / th
    if w / h > target_aspect:
        new_w = int(round(h * target_aspect))
        left = (w - new_w) // 2
        box = (left, 0, left + new_w, h)
    else:
        new_h = int(round(w / target_aspect))
        top = (h - new_h) // 2
        box = (0, top, w, top + new_h)
    return img.crop(box).resize((tw, th), Image.Resampling.BILINEAR)


def load_image_dir(path, target_dims=(3, 32, 64)) -> tuple[list[ImageTensor], int]:
    """Load PNG/PPM files sorted by name; center-crop to aspect, then resize.

    Returns the images and the number of files that had to be skipped.
    """
    from PIL import Image, UnidentifiedImageError

    c, th, tw = target_dims
    if c != 3:
        raise ValueError("image ingestion produces RGB tensors")
    files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() in (".png", ".ppm", ".pnm"))
    if not files:
        log.warning("no PNG/PPM images found in %s", path)
    out, skipped = [], 0
    for f in files:
        try:
            with Image.open(f) as im:
                im = _resize(im.convert("RGB"), (th, tw))
                arr = np.asarray(im, dtype=np.float64) / 255.0
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            log.warning("skipping %s: %s", f.name, exc)
            skipped += 1
            continue
        out.append(ImageTensor(arr.transpose(2, 0, 1)))
    if skipped:
        log.warning("skipped %d undecodable file(s) in %s", skipped, path)
    return out, skipped
