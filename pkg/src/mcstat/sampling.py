"""Random-field generation and bilinear sub-pixel sampling shared by the engines."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter


def ar1_field(shape, sigma_sq: float, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian field with autocorrelation ``sigma_sq * rho**(|k|+|l|)``.

    The separable AR(1) recursion is run along each axis in turn.  The first
    sample of every line is drawn from the stationary marginal, so the field
    is stationary from its first pixel and no warm-up border is needed.
    """
    if not 0 <= rho < 1:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    if sigma_sq < 0:
        raise ValueError("sigma_sq must be non-negative")
    h, w = shape
    z = rng.standard_normal((h, w))
    if rho > 0:
        gain = math.sqrt(1.0 - rho * rho)
        for axis in (1, 0):
            e = z * gain
            if axis == 1:
                e[:, 0] = z[:, 0]
            else:
                e[0, :] = z[0, :]
            z = lfilter([1.0], [1.0, -rho], e, axis=axis)
    return math.sqrt(sigma_sq) * z


def sample_shifted(canvas: np.ndarray, origin, shape, dx: float, dy: float) -> np.ndarray:
    """Window of ``canvas`` translated by ``(dx, dy)`` with bilinear interpolation.

    Returns ``out[y, x] = canvas[oy + y - dy, ox + x - dx]`` for a window of
    ``shape`` whose unshifted top-left corner sits at ``origin = (oy, ox)``.
    Integer shifts are exact copies.
    """
    oy, ox = origin
    h, w = shape
    sy, sx = oy - dy, ox - dx
    iy, ix = math.floor(sy), math.floor(sx)
    fy, fx = sy - iy, sx - ix
    need_y = iy + h + (1 if fy else 0)
    need_x = ix + w + (1 if fx else 0)
    if iy < 0 or ix < 0 or need_y > canvas.shape[0] or need_x > canvas.shape[1]:
        raise IndexError(f"shift ({dx}, {dy}) leaves the canvas")
    a = canvas[iy : iy + h, ix : ix + w]
    if not fy and not fx:
        return a.copy()
    if not fy:
        b = canvas[iy : iy + h, ix + 1 : ix + 1 + w]
        return (1.0 - fx) * a + fx * b
    c = canvas[iy + 1 : iy + 1 + h, ix : ix + w]
    if not fx:
        return (1.0 - fy) * a + fy * c
    b = canvas[iy : iy + h, ix + 1 : ix + 1 + w]
    d = canvas[iy + 1 : iy + 1 + h, ix + 1 : ix + 1 + w]
    return (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)


def sample_blocks(padded: np.ndarray, pad: int, origins: np.ndarray, vectors: np.ndarray, bs: int) -> np.ndarray:
    """Motion-compensated blocks from a padded reference.

    Parameters
    ----------
    padded : ndarray
        Reference frame padded by ``pad`` pixels on every side.
    origins : ndarray, shape (n, 2)
        ``(y, x)`` top-left corners of the blocks in unpadded coordinates.
    vectors : ndarray, shape (n, 2)
        ``(vx, vy)`` motion per block; block pixel ``(y, x)`` is predicted by
        the reference at ``(y - vy, x - vx)``.
    bs : int
        Block size.

    Returns
    -------
    ndarray, shape (n, bs, bs)
    """
    origins = np.asarray(origins)
    vectors = np.asarray(vectors, dtype=float)
    sy = origins[:, 0] + pad - vectors[:, 1]
    sx = origins[:, 1] + pad - vectors[:, 0]
    iy = np.floor(sy).astype(np.intp)
    ix = np.floor(sx).astype(np.intp)
    fy = (sy - iy)[:, None, None]
    fx = (sx - ix)[:, None, None]
    r = np.arange(bs)
    rows = (iy[:, None] + r)[:, :, None]
    cols = (ix[:, None] + r)[:, None, :]
    if rows.min() < 0 or cols.min() < 0 or rows.max() + 1 >= padded.shape[0] or cols.max() + 1 >= padded.shape[1]:
        raise IndexError("motion vector reaches outside the padded reference")
    a = padded[rows, cols]
    b = padded[rows, cols + 1]
    c = padded[rows + 1, cols]
    d = padded[rows + 1, cols + 1]
    top = a + fx * (b - a)
    bot = c + fx * (d - c)
    out = top + fy * (bot - top)
    # exact copy where the vector is integer so noiseless shifts stay bit-exact
    integer = ((fy == 0) & (fx == 0))[:, 0, 0]
    if integer.any():
        out[integer] = a[integer]
    return out
