"""
Synthetic video that follows the stochastic model exactly.

Frame ``t`` is the base image translated by the cumulative motion, plus the
local noise ``w_t``, plus the last ``L`` accumulated noise layers, each layer
translated by the motion since it was introduced::

    f_t(x, y) = v(x - phi_x(t,0), y - phi_y(t,0)) + w_t(x, y)
                + sum_{i=t-L+1}^{t} q_i(x - phi_x(t,i), y - phi_y(t,i))

All fields live on an extended canvas; frames are crops of it, so no padding
ever reaches the statistics.  Fractional translations use bilinear sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ModelParams, sigma_q_sq
from .sampling import ar1_field, sample_shifted


class MotionBoundsError(ValueError):
    """Motion leaves the extended canvas."""


# stream ids for deriving independent generators from one user seed
_BASE, _LAYER, _LOCAL, _WALK, _COMPRESS = range(5)


def _rng(seed, *stream) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, stream)])


@dataclass
class BaseImage:
    canvas: np.ndarray
    margin: int
    sigma_v_sq: float
    rho_v: float

    @property
    def frame_shape(self):
        return self.canvas.shape[0] - 2 * self.margin, self.canvas.shape[1] - 2 * self.margin


def gen_base_image(height, width, margin, sigma_v_sq, rho_v, seed) -> BaseImage:
    """Stationary AR(1) base image on a ``(H + 2M) x (W + 2M)`` canvas."""
    if height < 1 or width < 1 or margin < 0:
        raise ValueError("dimensions must be positive and margin non-negative")
    canvas = ar1_field((height + 2 * margin, width + 2 * margin), sigma_v_sq, rho_v, _rng(seed, _BASE))
    return BaseImage(canvas, margin, sigma_v_sq, rho_v)


@dataclass
class MotionPath:
    """Incremental displacements ``phi(t, t-1)`` for ``t = 1..T`` as rows ``(phi_x, phi_y)``."""

    increments: np.ndarray

    def __post_init__(self):
        self.increments = np.asarray(self.increments, dtype=float).reshape(-1, 2)
        self._cum = np.vstack([np.zeros((1, 2)), np.cumsum(self.increments, axis=0)])

    @property
    def T(self) -> int:
        return len(self.increments)

    def cumulative(self, t: int) -> np.ndarray:
        """``phi(t, 0)``; the scene is static before frame 0."""
        return self._cum[min(max(t, 0), self.T)].copy()

    def phi(self, t2: int, t1: int) -> np.ndarray:
        """Motion between two time points; telescopes and is antisymmetric."""
        return self.cumulative(t2) - self.cumulative(t1)

    def max_displacement(self) -> float:
        """Largest ``|phi(t2, t1)|`` component over all frame pairs."""
        span = self._cum.max(axis=0) - self._cum.min(axis=0)
        return float(span.max())

    def to_dict(self) -> dict:
        return {"increments": self.increments.tolist()}


def gen_motion_path(T: int, mode: str = "constant_velocity", vx: float = 1.0, vy: float = 0.0,
                    step_sigma: float = 1.0, seed: int = 0) -> MotionPath:
    """Motion path of ``T`` steps.

    ``constant_velocity`` moves by ``(vx, vy)`` every frame; ``random_walk``
    draws i.i.d. Gaussian steps with standard deviation ``step_sigma``.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if mode == "constant_velocity":
        inc = np.tile([float(vx), float(vy)], (T, 1))
    elif mode == "random_walk":
        inc = step_sigma * _rng(seed, _WALK).standard_normal((T, 2))
    else:
        raise ValueError(f"unknown motion mode {mode!r}")
    return MotionPath(inc)


@dataclass
class NoiseStack:
    """Accumulated-noise layers ``q_i`` for ``i = -L+1..T`` and local noise ``w_t``."""

    layers: np.ndarray  # (T + L, canvas_h, canvas_w); layers[i + L - 1] is q_i
    local: np.ndarray  # (T + 1, H, W)
    memory_length: int

    def layer(self, i: int) -> np.ndarray:
        return self.layers[i + self.memory_length - 1]


def gen_noise_stack(params: ModelParams, canvas_shape, frame_shape, T, seed) -> NoiseStack:
    L = params.memory_length
    sq = math.sqrt(sigma_q_sq(params))
    sw = math.sqrt(params.sigma_w_basic_sq)
    layers = np.empty((T + L,) + tuple(canvas_shape))
    for n in range(T + L):
        layers[n] = sq * _rng(seed, _LAYER, n).standard_normal(canvas_shape)
    local = np.empty((T + 1,) + tuple(frame_shape))
    for t in range(T + 1):
        local[t] = sw * _rng(seed, _LOCAL, t).standard_normal(frame_shape)
    return NoiseStack(layers, local, L)


@dataclass
class FrameSequence:
    frames: np.ndarray  # (T + 1, H, W)
    path: MotionPath
    params: Optional[ModelParams]
    seed: Optional[int]
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.frames) - 1

    @property
    def shape(self):
        return self.frames.shape[1:]

    def expected_frame_variance(self) -> float:
        p = self.params
        return p.sigma_v_sq + p.sigma_w_basic_sq + p.memory_length * sigma_q_sq(p)


def default_margin(path: MotionPath, search_range: int = 16) -> int:
    return int(math.ceil(path.max_displacement())) + search_range + 2


def render_sequence(params: ModelParams, dims, path: MotionPath, T: int, seed: int,
                    margin: Optional[int] = None) -> FrameSequence:
    """Render frames ``0..T`` of the model video.

    Parameters
    ----------
    params : ModelParams
        Model constants; ``sigma_w_basic_sq`` is the local-noise variance.
    dims : (int, int)
        Frame height and width.
    path : MotionPath
        Must cover at least ``T`` steps.
    T : int
        Index of the last frame.
    seed : int
        Determines every random field.
    margin : int, optional
        Canvas margin; defaults to ``ceil(max displacement) + 18``.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if path.T < T:
        raise ValueError(f"motion path covers {path.T} steps, need {T}")
    H, W = dims
    if margin is None:
        margin = default_margin(path)
    needed = path.max_displacement() + 1
    if needed > margin:
        raise MotionBoundsError(f"motion needs a margin of {needed:.2f} px, canvas margin is {margin}")
    base = gen_base_image(H, W, margin, params.sigma_v_sq, params.rho_v, seed)
    noise = gen_noise_stack(params, base.canvas.shape, (H, W), T, seed)
    L = params.memory_length
    origin = (margin, margin)
    frames = np.empty((T + 1, H, W))
    for t in range(T + 1):
        dx, dy = path.cumulative(t)
        try:
            f = sample_shifted(base.canvas, origin, (H, W), dx, dy)
            for i in range(t - L + 1, t + 1):
                qx, qy = path.phi(t, i)
                f += sample_shifted(noise.layer(i), origin, (H, W), qx, qy)
        except IndexError as exc:
            raise MotionBoundsError(str(exc)) from exc
        f += noise.local[t]
        frames[t] = f
    meta = {"margin": margin}
    return FrameSequence(frames, path, params, seed, meta)


def apply_compression_noise(frame: np.ndarray, mse: float, seed: int) -> np.ndarray:
    """Add white Gaussian noise of variance ``mse``, standing in for coding loss.

    For a fixed seed the noise field is the same up to its scale, so outputs
    at different ``mse`` are directly comparable.
    """
    if mse < 0:
        raise ValueError("mse must be non-negative")
    frame = np.asarray(frame, dtype=float)
    if mse == 0:
        return frame.copy()
    return frame + math.sqrt(mse) * _rng(seed, _COMPRESS).standard_normal(frame.shape)
