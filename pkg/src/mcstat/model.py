"""
Closed-form statistics of motion-compensated prediction.

The video model is a translating stationary image ``v`` with separable
exponential autocorrelation, plus a finite-memory accumulated noise built
from white layers ``q`` (variance ``sigma_q_sq`` per frame) and a per-frame
local noise ``w``.  On top of it this module evaluates

* the compression-noise variance for several rate-distortion models,
* the autocorrelation of the motion-compensated noise difference,
* the residual autocorrelation / variance of MC prediction from an available
  reference frame (inter-frame coding),
* the error autocorrelation / MSE of bidirectional MC interpolation of an
  absent frame (frame-rate up-conversion),
* two separable approximations of the coding residual autocorrelation.

Lags ``(k, l)`` are horizontal and vertical pixel offsets.  All evaluators are
pure functions of immutable scenario objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np


class DomainError(ValueError):
    """Raised when a formula is evaluated outside the region it is valid in."""


# ---------------------------------------------------------------------------
# Compression models
# ---------------------------------------------------------------------------


def _check_rate(rate: float) -> None:
    if rate < 0:
        raise ValueError(f"bit-rate must be non-negative, got {rate}")


@dataclass(frozen=True)
class EmpiricalRD:
    """Empirical distortion-rate curve ``beta * r**-alpha``."""

    alpha: float = 1.0
    beta: float = 10.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")

    def mse(self, rate: float) -> float:
        _check_rate(rate)
        if rate == 0:
            raise DomainError("empirical rate-distortion curve diverges at r = 0")
        return self.beta * rate ** (-self.alpha)


@dataclass(frozen=True)
class GaussianRD:
    """Distortion-rate bound of a memoryless Gaussian source, ``s2 * 2**(-2r)``."""

    source_variance: float

    def __post_init__(self):
        if self.source_variance < 0:
            raise ValueError("source_variance must be non-negative")

    def mse(self, rate: float) -> float:
        _check_rate(rate)
        return self.source_variance * 2.0 ** (-2.0 * rate)


@dataclass(frozen=True)
class ExplicitMSE:
    """Externally measured compression MSE, independent of the rate."""

    mse_value: float

    def __post_init__(self):
        if self.mse_value < 0:
            raise ValueError("mse must be non-negative")

    def mse(self, rate: float) -> float:
        _check_rate(rate)
        return self.mse_value


@dataclass(frozen=True)
class Uncompressed:
    def mse(self, rate: float) -> float:
        _check_rate(rate)
        return 0.0


CompressionModel = Union[EmpiricalRD, GaussianRD, ExplicitMSE, Uncompressed]


def compression_mse(model: CompressionModel, rate: Optional[float]) -> float:
    """Variance of the compression error at ``rate`` bits per pixel.

    ``rate=None`` denotes a pristine (never compressed) frame and yields 0.
    """
    if rate is None:
        return 0.0
    return float(model.mse(rate))


def compression_model_from_dict(d: dict) -> CompressionModel:
    """Build a compression model from ``{"kind": ..., **fields}``."""
    d = dict(d)
    kind = d.pop("kind", "uncompressed").lower()
    if kind in ("empirical", "empirical_rd"):
        return EmpiricalRD(**d)
    if kind in ("gaussian", "gaussian_rd"):
        return GaussianRD(**d)
    if kind in ("explicit", "explicit_mse"):
        if "mse" in d:
            d["mse_value"] = d.pop("mse")
        return ExplicitMSE(**d)
    if kind == "uncompressed":
        return Uncompressed()
    raise ValueError(f"unknown compression model kind {kind!r}")


def compression_model_to_dict(model: CompressionModel) -> dict:
    if isinstance(model, EmpiricalRD):
        return {"kind": "empirical", "alpha": model.alpha, "beta": model.beta}
    if isinstance(model, GaussianRD):
        return {"kind": "gaussian", "source_variance": model.source_variance}
    if isinstance(model, ExplicitMSE):
        return {"kind": "explicit", "mse": model.mse_value}
    return {"kind": "uncompressed"}


# ---------------------------------------------------------------------------
# Model parameters and scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Constants of the stochastic video model.

    Attributes
    ----------
    sigma_v_sq : float
        Variance of the base image.
    rho_v : float
        Horizontal/vertical correlation coefficient of the base image.
    memory_length : int
        Number of accumulated noise layers ``L`` in every frame.
    sigma_q_tilde_sq : float
        Energy of the non-translational frame change per second.
    frame_rate : float
        Frames per second.
    sigma_w_basic_sq : float
        Variance of the non-compression part of the local noise.
    compression : CompressionModel
        Maps a bit-rate to a compression-noise variance.
    """

    sigma_v_sq: float = 2312.0
    rho_v: float = 0.95
    memory_length: int = 5
    sigma_q_tilde_sq: float = 100.0
    frame_rate: float = 25.0
    sigma_w_basic_sq: float = 0.0
    compression: CompressionModel = field(default_factory=Uncompressed)

    def __post_init__(self):
        if self.sigma_v_sq < 0:
            raise ValueError("sigma_v_sq must be non-negative")
        if not 0 <= self.rho_v < 1:
            raise ValueError(f"rho_v must lie in [0, 1), got {self.rho_v}")
        if int(self.memory_length) != self.memory_length or self.memory_length < 1:
            raise ValueError("memory_length must be an integer >= 1")
        if self.sigma_q_tilde_sq < 0:
            raise ValueError("sigma_q_tilde_sq must be non-negative")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")
        if self.sigma_w_basic_sq < 0:
            raise ValueError("sigma_w_basic_sq must be non-negative")

    @property
    def sigma_q_sq(self) -> float:
        return sigma_q_sq(self)

    def local_noise_var(self, rate: Optional[float]) -> float:
        """Total local-noise variance of a frame coded at ``rate``."""
        return self.sigma_w_basic_sq + compression_mse(self.compression, rate)

    def to_dict(self) -> dict:
        return {
            "sigma_v_sq": self.sigma_v_sq,
            "rho_v": self.rho_v,
            "memory_length": self.memory_length,
            "sigma_q_tilde_sq": self.sigma_q_tilde_sq,
            "frame_rate": self.frame_rate,
            "sigma_w_basic_sq": self.sigma_w_basic_sq,
            "compression": compression_model_to_dict(self.compression),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        d = dict(d)
        if "compression" in d and isinstance(d["compression"], dict):
            d["compression"] = compression_model_from_dict(d["compression"])
        return cls(**d)


def sigma_q_sq(params: ModelParams) -> float:
    """Per-frame accumulated-noise layer variance ``sigma_q_tilde_sq / frame_rate``."""
    return params.sigma_q_tilde_sq / params.frame_rate


def me_error_variance(precision: float) -> float:
    """Variance of a displacement error uniform on ``[-p/2, p/2]``.

    ``precision`` is the motion-vector step in pixels (0.5 for half-pel).
    """
    if precision < 0:
        raise ValueError("precision must be non-negative")
    return precision**2 / 12.0


@dataclass(frozen=True)
class CodingScenario:
    """Prediction of frame ``t`` from an available reference ``t - i``.

    ``rate_current`` / ``rate_ref`` of ``None`` mean the frame carries no
    compression noise.
    """

    params: ModelParams
    temporal_distance: int = 1
    sigma_dx_sq: float = me_error_variance(0.5)
    sigma_dy_sq: float = me_error_variance(0.5)
    rate_current: Optional[float] = None
    rate_ref: Optional[float] = None

    def __post_init__(self):
        if int(self.temporal_distance) != self.temporal_distance or self.temporal_distance < 1:
            raise ValueError("temporal_distance must be an integer >= 1")
        if self.sigma_dx_sq < 0 or self.sigma_dy_sq < 0:
            raise ValueError("ME error variances must be non-negative")

    @property
    def sigma_w_current_sq(self) -> float:
        return self.params.local_noise_var(self.rate_current)

    @property
    def sigma_w_ref_sq(self) -> float:
        return self.params.local_noise_var(self.rate_ref)

    @property
    def d_t(self) -> float:
        """Temporal distance in seconds."""
        return self.temporal_distance / self.params.frame_rate

    def with_(self, **changes) -> "CodingScenario":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "temporal_distance": self.temporal_distance,
            "sigma_dx_sq": self.sigma_dx_sq,
            "sigma_dy_sq": self.sigma_dy_sq,
            "rate_current": self.rate_current,
            "rate_ref": self.rate_ref,
        }


@dataclass(frozen=True)
class FrucScenario:
    """Interpolation of absent frame ``j`` between available frames 0 and ``D``.

    The two available frames share ``rate_available``; the absent frame is the
    pristine original and only carries the basic local noise.
    """

    params: ModelParams
    D: int = 2
    j: int = 1
    theta: float = 0.5
    gamma_abs: float = 2.0
    sigma_dx_sq: float = me_error_variance(0.5)
    sigma_dy_sq: float = me_error_variance(0.5)
    rate_available: Optional[float] = None

    def __post_init__(self):
        if int(self.D) != self.D or self.D < 2:
            raise ValueError("D must be an integer >= 2")
        if int(self.j) != self.j or not 1 <= self.j <= self.D - 1:
            raise ValueError(f"j must satisfy 1 <= j <= D-1, got j={self.j}, D={self.D}")
        if not 0 <= self.theta <= 1:
            raise ValueError("theta must lie in [0, 1]")
        if self.gamma_abs < 1:
            raise ValueError("gamma_abs must be >= 1")
        if self.sigma_dx_sq < 0 or self.sigma_dy_sq < 0:
            raise ValueError("ME error variances must be non-negative")

    @property
    def sigma_dx_abs_sq(self) -> float:
        return self.gamma_abs * self.sigma_dx_sq

    @property
    def sigma_dy_abs_sq(self) -> float:
        return self.gamma_abs * self.sigma_dy_sq

    @property
    def sigma_w0_sq(self) -> float:
        return self.params.local_noise_var(self.rate_available)

    @property
    def sigma_wD_sq(self) -> float:
        return self.params.local_noise_var(self.rate_available)

    @property
    def sigma_wj_sq(self) -> float:
        return self.params.sigma_w_basic_sq

    def with_(self, **changes) -> "FrucScenario":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "D": self.D,
            "j": self.j,
            "theta": self.theta,
            "gamma_abs": self.gamma_abs,
            "sigma_dx_sq": self.sigma_dx_sq,
            "sigma_dy_sq": self.sigma_dy_sq,
            "rate_available": self.rate_available,
        }


# ---------------------------------------------------------------------------
# Autocorrelation maps
# ---------------------------------------------------------------------------


@dataclass
class AutocorrMap:
    """Autocorrelation values on the lag window ``|k| <= K``, ``|l| <= Lw``.

    ``values[k + K, l + Lw]`` holds the value at horizontal lag ``k`` and
    vertical lag ``l``.
    """

    half_window: tuple
    values: np.ndarray
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        K, Lw = self.half_window
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (2 * K + 1, 2 * Lw + 1):
            raise ValueError(
                f"values shape {self.values.shape} does not match half window {self.half_window}"
            )
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.values.shape:
                raise ValueError("stderr must have the same shape as values")

    def at(self, k: int, l: int) -> float:
        K, Lw = self.half_window
        if abs(k) > K or abs(l) > Lw:
            raise IndexError(f"lag ({k}, {l}) outside half window {self.half_window}")
        return float(self.values[k + K, l + Lw])

    def lags(self):
        """Iterate ``(k, l)`` in row-major order of ``values``."""
        K, Lw = self.half_window
        for k in range(-K, K + 1):
            for l in range(-Lw, Lw + 1):
                yield k, l

    def rows(self):
        """Tabular form: dicts with ``k, l, value`` (and ``stderr``)."""
        out = []
        for k, l in self.lags():
            row = {"k": k, "l": l, "value": self.at(k, l)}
            if self.stderr is not None:
                K, Lw = self.half_window
                row["stderr"] = float(self.stderr[k + K, l + Lw])
            out.append(row)
        return out

    def to_dict(self) -> dict:
        d = {"half_window": list(self.half_window), "values": self.values.tolist()}
        if self.stderr is not None:
            d["stderr"] = self.stderr.tolist()
        return d


def acf_map(func: Callable[[int, int], float], half_window=(3, 3)) -> AutocorrMap:
    """Evaluate ``func(k, l)`` over a lag window."""
    K, Lw = half_window
    if K < 0 or Lw < 0:
        raise ValueError("half window must be non-negative")
    values = np.empty((2 * K + 1, 2 * Lw + 1))
    for k in range(-K, K + 1):
        for l in range(-Lw, Lw + 1):
            values[k + K, l + Lw] = func(k, l)
    return AutocorrMap((K, Lw), values)


# ---------------------------------------------------------------------------
# Elementary autocorrelations
# ---------------------------------------------------------------------------


def _delta(k: int, l: int = 0) -> float:
    return 1.0 if k == 0 and l == 0 else 0.0


def base_image_acf(k: int, l: int, params: ModelParams) -> float:
    """Separable first-order Markov autocorrelation of the base image."""
    return params.sigma_v_sq * params.rho_v ** (abs(k) + abs(l))


def accumulated_noise_acf(k: int, l: int, params: ModelParams, sigma_w_sq: float) -> float:
    """Autocorrelation of the accumulated noise of one frame (white in space)."""
    return (sigma_w_sq + params.memory_length * sigma_q_sq(params)) * _delta(k, l)


def delta_noise_acf(
    k: int,
    l: int,
    frame_gap: int,
    sigma_w1_sq: float,
    sigma_w2_sq: float,
    params: ModelParams,
) -> float:
    """Autocorrelation of the motion-compensated noise difference ``n_t2 - n_t1``.

    Only valid while the two frames still share accumulated layers, i.e.
    ``0 <= frame_gap <= memory_length``.
    """
    if frame_gap < 0:
        raise ValueError("frame_gap must be non-negative")
    if frame_gap > params.memory_length:
        raise DomainError(
            f"frame gap {frame_gap} exceeds noise memory length {params.memory_length}"
        )
    return (2.0 * sigma_q_sq(params) * frame_gap + sigma_w1_sq + sigma_w2_sq) * _delta(k, l)


# ---------------------------------------------------------------------------
# MC-coding residual
# ---------------------------------------------------------------------------


def coding_residual_acf(k: int, l: int, scenario: CodingScenario) -> float:
    """Residual autocorrelation of MC prediction from an available reference."""
    p = scenario.params
    sx, sy = scenario.sigma_dx_sq, scenario.sigma_dy_sq
    sv, rho = p.sigma_v_sq, p.rho_v
    ref_noise = p.memory_length * sigma_q_sq(p) + scenario.sigma_w_ref_sq
    ak, al = abs(k), abs(l)
    return (
        2.0 * (sx + sy) * (sv * rho ** (ak + al) + ref_noise * _delta(k, l))
        - sx * sv * rho**al * (rho ** abs(k - 1) + rho ** abs(k + 1))
        - sx * ref_noise * (_delta(k - 1, l) + _delta(k + 1, l))
        - sy * sv * rho**ak * (rho ** abs(l - 1) + rho ** abs(l + 1))
        - sy * ref_noise * (_delta(k, l - 1) + _delta(k, l + 1))
        + (
            2.0 * scenario.temporal_distance * sigma_q_sq(p)
            + scenario.sigma_w_current_sq
            + scenario.sigma_w_ref_sq
        )
        * _delta(k, l)
    )


def coding_residual_variance(scenario: CodingScenario) -> float:
    """Residual variance; affine in the temporal distance with slope ``2 sigma_q^2``."""
    p = scenario.params
    return (
        2.0
        * (scenario.sigma_dx_sq + scenario.sigma_dy_sq)
        * (
            p.sigma_v_sq * (1.0 - p.rho_v)
            + p.memory_length * sigma_q_sq(p)
            + scenario.sigma_w_ref_sq
        )
        + 2.0 * scenario.temporal_distance * sigma_q_sq(p)
        + scenario.sigma_w_current_sq
        + scenario.sigma_w_ref_sq
    )


def coding_residual_variance_seconds(scenario: CodingScenario, d_t: float) -> float:
    """Residual variance with the temporal distance given in seconds.

    The layer variance is expressed through ``sigma_q_tilde_sq``, so the result
    is affine in ``d_t`` at fixed frame rate.  ``scenario.temporal_distance`` is
    ignored.
    """
    if d_t < 0:
        raise ValueError("d_t must be non-negative")
    p = scenario.params
    return (
        2.0
        * (scenario.sigma_dx_sq + scenario.sigma_dy_sq)
        * (
            p.sigma_v_sq * (1.0 - p.rho_v)
            + p.memory_length / p.frame_rate * p.sigma_q_tilde_sq
            + scenario.sigma_w_ref_sq
        )
        + 2.0 * p.sigma_q_tilde_sq * d_t
        + scenario.sigma_w_current_sq
        + scenario.sigma_w_ref_sq
    )


def coding_acf_map(scenario: CodingScenario, half_window=(3, 3)) -> AutocorrMap:
    return acf_map(lambda k, l: coding_residual_acf(k, l, scenario), half_window)


def horizontal_acf(k: int, scenario: CodingScenario) -> float:
    """Coding residual autocorrelation along the horizontal axis, ``R(k, 0)``.

    Written out in its one-dimensional form rather than by calling
    :func:`coding_residual_acf`, so the two can be checked against each other.
    """
    p = scenario.params
    sx, sy = scenario.sigma_dx_sq, scenario.sigma_dy_sq
    sv, rho = p.sigma_v_sq, p.rho_v
    ref_noise = p.memory_length * sigma_q_sq(p) + scenario.sigma_w_ref_sq
    ak = abs(k)
    d0 = 1.0 if k == 0 else 0.0
    d1 = (1.0 if k == 1 else 0.0) + (1.0 if k == -1 else 0.0)
    return (
        2.0 * (sx + sy) * (sv * rho**ak + ref_noise * d0)
        - sx * sv * (rho ** abs(k - 1) + rho ** abs(k + 1))
        - sx * ref_noise * d1
        - 2.0 * sy * sv * rho ** (ak + 1)
        + (
            2.0 * scenario.temporal_distance * sigma_q_sq(p)
            + scenario.sigma_w_current_sq
            + scenario.sigma_w_ref_sq
        )
        * d0
    )


def _transposed(scenario: CodingScenario) -> CodingScenario:
    return replace(scenario, sigma_dx_sq=scenario.sigma_dy_sq, sigma_dy_sq=scenario.sigma_dx_sq)


def vertical_acf(l: int, scenario: CodingScenario) -> float:
    """``R(0, l)``: the horizontal profile with the roles of x and y exchanged."""
    return horizontal_acf(l, _transposed(scenario))


def _positive_variance(scenario: CodingScenario) -> float:
    var = coding_residual_variance(scenario)
    if not var > 0:
        raise DomainError("residual variance is zero; normalized autocorrelation undefined")
    return var


def separable_acf(k: int, l: int, scenario: CodingScenario) -> float:
    """Separable construction ``R(0,0) * rho_horz(k) * rho_vert(l)``."""
    var = _positive_variance(scenario)
    return var * (horizontal_acf(k, scenario) / var) * (vertical_acf(l, scenario) / var)


def markov_coefficients(scenario: CodingScenario) -> tuple:
    """Lag-one correlation coefficients ``(rho_h, rho_v)`` of the residual."""
    var = _positive_variance(scenario)
    return coding_residual_acf(1, 0, scenario) / var, coding_residual_acf(0, 1, scenario) / var


def markov_acf(k: int, l: int, scenario: CodingScenario) -> float:
    """Separable first-order Markov approximation of the residual autocorrelation."""
    var = _positive_variance(scenario)
    rho_h, rho_v = markov_coefficients(scenario)
    return var * rho_h ** abs(k) * rho_v ** abs(l)


# ---------------------------------------------------------------------------
# MC-FRUC error
# ---------------------------------------------------------------------------


def _check_fruc_memory(scenario: FrucScenario) -> None:
    L = scenario.params.memory_length
    if scenario.j > L or scenario.D - scenario.j > L:
        raise DomainError(
            f"j={scenario.j} and D-j={scenario.D - scenario.j} must not exceed memory length {L}"
        )


def fruc_error_acf(k: int, l: int, scenario: FrucScenario) -> float:
    """Autocorrelation of the bidirectional interpolation error of frame ``j``.

    The derivative terms of the two available frames' noise are merged because
    the accumulated noise autocorrelation does not depend on time.
    """
    _check_fruc_memory(scenario)
    p = scenario.params
    th = scenario.theta
    blend = th**2 + (1.0 - th) ** 2
    w0, wj, wD = scenario.sigma_w0_sq, scenario.sigma_wj_sq, scenario.sigma_wD_sq

    def rv(a, b):
        return base_image_acf(a, b, p)

    def rn(a, b):
        return accumulated_noise_acf(a, b, p, w0)

    dx_term = 2 * rv(k, l) - rv(k - 1, l) - rv(k + 1, l) + 2 * rn(k, l) - rn(k - 1, l) - rn(k + 1, l)
    dy_term = 2 * rv(k, l) - rv(k, l - 1) - rv(k, l + 1) + 2 * rn(k, l) - rn(k, l - 1) - rn(k, l + 1)
    return (
        th**2 * delta_noise_acf(k, l, scenario.j, w0, wj, p)
        + (1.0 - th) ** 2 * delta_noise_acf(k, l, scenario.D - scenario.j, wj, wD, p)
        + scenario.sigma_dx_abs_sq * blend * dx_term
        + scenario.sigma_dy_abs_sq * blend * dy_term
    )


def fruc_acf_map(scenario: FrucScenario, half_window=(3, 3)) -> AutocorrMap:
    return acf_map(lambda k, l: fruc_error_acf(k, l, scenario), half_window)


def fruc_mse(scenario: FrucScenario) -> float:
    """Interpolation MSE for a general blend weight.

    The second bracket carries ``sigma_w0^2 + sigma_wj^2`` exactly as the model
    states it; with both available frames at the same rate this coincides with
    ``sigma_wD^2 + sigma_wj^2``.
    """
    _check_fruc_memory(scenario)
    p = scenario.params
    sq = sigma_q_sq(p)
    th, D, j = scenario.theta, scenario.D, scenario.j
    w0, wj = scenario.sigma_w0_sq, scenario.sigma_wj_sq
    return (
        th**2 * (2.0 * sq * j + w0 + wj)
        + (1.0 - th) ** 2 * (2.0 * sq * (D - j) + w0 + wj)
        + 2.0
        * (scenario.sigma_dx_abs_sq + scenario.sigma_dy_abs_sq)
        * (th**2 + (1.0 - th) ** 2)
        * ((1.0 - p.rho_v) * p.sigma_v_sq + p.memory_length * sq + w0)
    )


def fruc_mse_half(scenario: FrucScenario) -> float:
    """Interpolation MSE for equal blending; independent of ``j`` and affine in ``D``.

    ``scenario.theta`` is ignored.
    """
    _check_fruc_memory(scenario)
    p = scenario.params
    sq = sigma_q_sq(p)
    w0, wj = scenario.sigma_w0_sq, scenario.sigma_wj_sq
    return 0.5 * (sq * scenario.D + w0 + wj) + (
        scenario.sigma_dx_abs_sq + scenario.sigma_dy_abs_sq
    ) * ((1.0 - p.rho_v) * p.sigma_v_sq + p.memory_length * sq + w0)


def is_close(a: float, b: float, rel: float = 1e-12) -> bool:
    """Relative comparison that treats values near zero absolutely."""
    return math.isclose(a, b, rel_tol=rel, abs_tol=rel)
