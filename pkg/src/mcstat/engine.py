"""
Block-based motion estimation and compensation.

Full-search block matching on the integer grid followed by half/quarter-pel
refinement on a bilinearly interpolated reference, MC prediction of an
available frame, bidirectional MC interpolation of an absent frame with a
linearly partitioned motion trajectory, and empirical residual statistics.

A motion vector ``(vx, vy)`` means block pixel ``(x, y)`` is predicted by the
reference at ``(x - vx, y - vy)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

# the bundled TBB is too old for numba; pick OpenMP unless the user chose
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
from numba import njit, prange  # noqa: E402

from .model import AutocorrMap, DomainError
from .sampling import sample_blocks

SUBPEL_STEPS = {"full": (), "half": (0.5,), "quarter": (0.5, 0.25)}


@dataclass(frozen=True)
class MEConfig:
    block_size: int = 16
    search_range: int = 16
    subpel: str = "half"
    metric: str = "ssd"

    def __post_init__(self):
        if self.block_size < 4:
            raise ValueError("block_size must be >= 4")
        if self.search_range < 1:
            raise ValueError("search_range must be >= 1")
        if self.subpel not in SUBPEL_STEPS:
            raise ValueError(f"subpel must be one of {sorted(SUBPEL_STEPS)}")
        if self.metric not in ("ssd", "sad"):
            raise ValueError("metric must be 'ssd' or 'sad'")

    @property
    def precision(self) -> float:
        steps = SUBPEL_STEPS[self.subpel]
        return steps[-1] if steps else 1.0

    @property
    def pad(self) -> int:
        return self.search_range + 2

    def to_dict(self) -> dict:
        return {
            "block_size": self.block_size,
            "search_range": self.search_range,
            "subpel": self.subpel,
            "metric": self.metric,
        }


@dataclass
class MotionField:
    """Per-block motion vectors ``vectors[by, bx] = (vx, vy)`` and matching costs."""

    vectors: np.ndarray
    costs: np.ndarray
    interior: np.ndarray
    block_size: int
    frame_shape: tuple

    @property
    def grid_shape(self):
        return self.vectors.shape[:2]

    def origins(self) -> np.ndarray:
        nby, nbx = self.grid_shape
        bs = self.block_size
        yy, xx = np.meshgrid(np.arange(nby) * bs, np.arange(nbx) * bs, indexing="ij")
        return np.stack([yy.ravel(), xx.ravel()], axis=1)

    def pixel_mask(self) -> np.ndarray:
        """Pixels covered by interior blocks."""
        mask = np.zeros(self.frame_shape, dtype=bool)
        bs = self.block_size
        nby, nbx = self.grid_shape
        full = np.repeat(np.repeat(self.interior, bs, axis=0), bs, axis=1)
        mask[: nby * bs, : nbx * bs] = full
        return mask


@dataclass
class ResidualField:
    values: np.ndarray
    mask: np.ndarray

    def variance(self) -> float:
        """Mean energy of the residual over valid pixels."""
        if not self.mask.any():
            raise DomainError("residual has no valid pixels")
        return float(np.mean(self.values[self.mask] ** 2))


@njit(parallel=True, cache=True)
def _full_search(cur, refpad, pad, bs, cand, ssd):
    # candidates arrive in tie-break order; only a strictly lower cost wins
    nby = cur.shape[0] // bs
    nbx = cur.shape[1] // bs
    best_idx = np.zeros(nby * nbx, dtype=np.int64)
    best_cost = np.empty(nby * nbx)
    for b in prange(nby * nbx):
        y0 = (b // nbx) * bs
        x0 = (b % nbx) * bs
        best = np.inf
        bi = 0
        for c in range(cand.shape[0]):
            ry = pad + y0 - cand[c, 1]
            rx = pad + x0 - cand[c, 0]
            s = 0.0
            for y in range(bs):
                for x in range(bs):
                    d = cur[y0 + y, x0 + x] - refpad[ry + y, rx + x]
                    s += d * d if ssd else abs(d)
                if s >= best:
                    break
            if s < best:
                best = s
                bi = c
        best_idx[b] = bi
        best_cost[b] = best
    return best_idx, best_cost


def _interior_blocks(nby, nbx, bs, shape, margin) -> np.ndarray:
    H, W = shape
    y0 = np.arange(nby) * bs
    x0 = np.arange(nbx) * bs
    oky = (y0 >= margin) & (y0 + bs <= H - margin)
    okx = (x0 >= margin) & (x0 + bs <= W - margin)
    return oky[:, None] & okx[None, :]


def _check_pair(current, reference):
    current = np.asarray(current, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if current.ndim != 2 or current.shape != reference.shape:
        raise ValueError(f"frames must be 2-D with equal shapes, got {current.shape} and {reference.shape}")
    return current, reference


def block_match(current, reference, config: MEConfig = MEConfig()) -> MotionField:
    """Full-search block matching with sub-pel refinement.

    Every block of the regular grid is matched; blocks whose search window
    would reach past the frame border are matched against an edge-extended
    reference and flagged as non-interior.  Ties go to the smallest vector
    norm, then to raster order (``vy`` first, then ``vx``).
    """
    current, reference = _check_pair(current, reference)
    H, W = current.shape
    bs, R, pad = config.block_size, config.search_range, config.pad
    nby, nbx = H // bs, W // bs
    if nby == 0 or nbx == 0:
        raise ValueError(f"frame {current.shape} is smaller than one block")
    Hc, Wc = nby * bs, nbx * bs
    cur = current[:Hc, :Wc]
    refpad = np.pad(reference, pad, mode="edge")

    rng = np.arange(-R, R + 1)
    cand = np.array([(vx, vy) for vy in rng for vx in rng])
    order = np.lexsort((cand[:, 0], cand[:, 1], cand[:, 0] ** 2 + cand[:, 1] ** 2))
    cand = cand[order]
    best, best_cost = _full_search(np.ascontiguousarray(cur), refpad, pad, bs, cand, config.metric == "ssd")
    vectors = cand[best].astype(float)

    origins = np.stack(np.meshgrid(np.arange(nby) * bs, np.arange(nbx) * bs, indexing="ij"), -1).reshape(-1, 2)
    cur_blocks = cur.reshape(nby, bs, nbx, bs).transpose(0, 2, 1, 3).reshape(-1, bs, bs)
    for step in SUBPEL_STEPS[config.subpel]:
        vectors, best_cost = _refine(cur_blocks, refpad, pad, origins, vectors, best_cost, step, R, config.metric)

    interior = _interior_blocks(nby, nbx, bs, (H, W), R + 1)
    return MotionField(vectors.reshape(nby, nbx, 2), best_cost.reshape(nby, nbx), interior, bs, (H, W))


def _refine(cur_blocks, refpad, pad, origins, vectors, best_cost, step, R, metric):
    offsets = [(ox, oy) for oy in (-step, 0.0, step) for ox in (-step, 0.0, step)]
    n = len(vectors)
    all_vec = np.empty((len(offsets), n, 2))
    all_cost = np.empty((len(offsets), n))
    for c, (ox, oy) in enumerate(offsets):
        vec = vectors + (ox, oy)
        all_vec[c] = vec
        if ox == 0 and oy == 0:
            all_cost[c] = best_cost
            continue
        inside = (np.abs(vec) <= R).all(axis=1)
        pred = sample_blocks(refpad, pad, origins, np.clip(vec, -R, R), cur_blocks.shape[1])
        d = cur_blocks - pred
        e = d * d if metric == "ssd" else np.abs(d)
        all_cost[c] = np.where(inside, e.sum(axis=(1, 2)), np.inf)
    vx, vy = all_vec[..., 0].T, all_vec[..., 1].T
    idx = np.lexsort((vx, vy, vx**2 + vy**2, all_cost.T), axis=-1)[:, 0]
    pick = np.arange(n)
    return all_vec[idx, pick], all_cost[idx, pick]


def motion_compensate(reference, motion: MotionField, pad: Optional[int] = None, scale: float = 1.0) -> np.ndarray:
    """Assemble a prediction from ``reference`` along ``scale * motion``.

    Pixels outside the block grid are copied from the reference unchanged.
    """
    reference = np.asarray(reference, dtype=float)
    if pad is None:
        pad = int(np.ceil(np.abs(motion.vectors).max(initial=0) * abs(scale))) + 2
    refpad = np.pad(reference, pad, mode="edge")
    bs = motion.block_size
    nby, nbx = motion.grid_shape
    blocks = sample_blocks(refpad, pad, motion.origins(), scale * motion.vectors.reshape(-1, 2), bs)
    out = reference.copy()
    out[: nby * bs, : nbx * bs] = blocks.reshape(nby, nbx, bs, bs).transpose(0, 2, 1, 3).reshape(nby * bs, nbx * bs)
    return out


def mc_predict_coding(current, reference, config: MEConfig = MEConfig(), me_reference=None,
                      motion: Optional[MotionField] = None):
    """MC prediction of ``current`` from ``reference``.

    Motion is estimated against ``me_reference`` when given (e.g. the pristine
    version of a compressed reference) and applied to ``reference``.

    Returns
    -------
    prediction : ndarray
    residual : ResidualField
        ``current - prediction`` with the interior-block mask.
    """
    current, reference = _check_pair(current, reference)
    if motion is None:
        target = reference if me_reference is None else _check_pair(current, me_reference)[1]
        motion = block_match(current, target, config)
    prediction = motion_compensate(reference, motion, config.pad)
    return prediction, ResidualField(current - prediction, motion.pixel_mask())


def empirical_acf(residual: ResidualField, half_window=(3, 3)) -> AutocorrMap:
    """Biased sample autocorrelation of a residual over its valid pixels.

    ``C(k, l) = (1/N) sum (e(x,y) - m)(e(x+k, y+l) - m)`` over pairs where both
    pixels are valid, then symmetrized as ``(C(k,l) + C(-k,-l)) / 2``.
    """
    mask = np.asarray(residual.mask, dtype=bool)
    N = int(mask.sum())
    if N == 0:
        raise DomainError("residual has no valid pixels")
    vals = np.asarray(residual.values, dtype=float)
    z = np.where(mask, vals - vals[mask].mean(), 0.0)
    K, Lw = half_window
    H, W = z.shape
    out = np.zeros((2 * K + 1, 2 * Lw + 1))
    for k in range(-K, K + 1):
        for l in range(-Lw, Lw + 1):
            a = z[max(0, -l) : H - max(0, l), max(0, -k) : W - max(0, k)]
            b = z[max(0, l) : H + min(0, l), max(0, k) : W + min(0, k)]
            out[k + K, l + Lw] = float(np.sum(a * b)) / N
    out = 0.5 * (out + out[::-1, ::-1])
    return AutocorrMap((K, Lw), out)


@dataclass
class FrucResult:
    frame: np.ndarray
    backward: np.ndarray
    forward: np.ndarray
    mask: np.ndarray
    motion: MotionField


def fruc_interpolate(f0, fD, D: int, j: int, theta: float = 0.5, config: MEConfig = MEConfig(),
                     motion: Optional[MotionField] = None) -> FrucResult:
    """Interpolate frame ``j`` between available frames ``f0`` and ``fD``.

    One motion field is estimated from ``f0`` to ``fD`` and split linearly
    along the trajectory: the backward prediction samples ``f0`` at
    ``x - (j/D) mv`` and the forward prediction samples ``fD`` at
    ``x + ((D-j)/D) mv``.  Blocks are anchored on the interpolated frame's
    grid, so the output has no holes.
    """
    if not 1 <= j <= D - 1:
        raise ValueError(f"j must satisfy 1 <= j <= D-1, got j={j}, D={D}")
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    f0, fD = _check_pair(f0, fD)
    if motion is None:
        motion = block_match(fD, f0, config)
    backward = motion_compensate(f0, motion, config.pad, scale=j / D)
    forward = motion_compensate(fD, motion, config.pad, scale=-(D - j) / D)
    frame = theta * backward + (1.0 - theta) * forward
    return FrucResult(frame, backward, forward, motion.pixel_mask(), motion)


def fruc_mse_measure(interpolated, ground_truth, mask=None) -> float:
    interpolated = np.asarray(interpolated, dtype=float)
    ground_truth = np.asarray(ground_truth, dtype=float)
    if interpolated.shape != ground_truth.shape:
        raise ValueError("frames must have equal shapes")
    if mask is None:
        mask = np.ones(interpolated.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DomainError("empty mask")
    d = interpolated[mask] - ground_truth[mask]
    return float(np.mean(d * d))
