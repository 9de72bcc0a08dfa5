"""
Monte Carlo check of the closed-form autocorrelations.

Each trial draws a base image, accumulated-noise layers, local noise and ME
displacement errors, forms the prediction-error field term by term from its
first-order expansion (forward-difference derivatives), and measures its
autocorrelation on a lag window.  The trial mean is compared with the closed
form lag by lag; the standard error is taken across trials only, because
pixels within one field are correlated.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    AutocorrMap,
    CodingScenario,
    DomainError,
    FrucScenario,
    coding_acf_map,
    fruc_acf_map,
    sigma_q_sq,
)
from .sampling import ar1_field

Z_LIMIT = 3.0
PASS_FRACTION = 0.95
MIN_TRIALS = 100
MIN_FIELD = 64


@dataclass
class OracleReport:
    kind: str
    half_window: tuple
    oracle: AutocorrMap
    closed: AutocorrMap
    z: np.ndarray
    trials: int
    field_size: int
    seed: int
    scenario: dict
    extras: dict = field(default_factory=dict)

    @property
    def effective_samples(self) -> int:
        """Trials times interior pixels; an upper bound, as pixels are correlated."""
        return self.trials * self.field_size**2

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(np.abs(self.z) <= Z_LIMIT))

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= PASS_FRACTION

    def rows(self):
        K, Lw = self.half_window
        out = []
        for k, l in self.oracle.lags():
            i, j = k + K, l + Lw
            out.append({
                "k": k,
                "l": l,
                "oracle": float(self.oracle.values[i, j]),
                "stderr": float(self.oracle.stderr[i, j]),
                "closed_form": float(self.closed.values[i, j]),
                "z": float(self.z[i, j]),
            })
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "half_window": list(self.half_window),
            "trials": self.trials,
            "field_size": self.field_size,
            "effective_samples": self.effective_samples,
            "seed": self.seed,
            "scenario": self.scenario,
            "pass_fraction": self.pass_fraction,
            "passed": self.passed,
            "z_limit": Z_LIMIT,
            "required_fraction": PASS_FRACTION,
            "lags": self.rows(),
            "extras": self.extras,
        }


def lag_products(e: np.ndarray, half_window) -> np.ndarray:
    """Mean of ``e(x, y) * e(x + k, y + l)`` over all overlapping pairs.

    No mean is removed: the error fields are zero-mean by construction, and
    this keeps the per-trial estimate unbiased.
    """
    K, Lw = half_window
    H, W = e.shape
    out = np.empty((2 * K + 1, 2 * Lw + 1))
    for k in range(-K, K + 1):
        for l in range(-Lw, Lw + 1):
            a = e[max(0, -l) : H - max(0, l), max(0, -k) : W - max(0, k)]
            b = e[max(0, l) : H + min(0, l), max(0, k) : W + min(0, k)]
            out[k + K, l + Lw] = np.mean(a * b)
    return out


def _dx(f, S):
    return f[:S, 1 : S + 1] - f[:S, :S]


def _dy(f, S):
    return f[1 : S + 1, :S] - f[:S, :S]


def _layers(rng, count, shape, sigma):
    return [sigma * rng.standard_normal(shape) for _ in range(count)]


def _white(rng, shape, var):
    return math.sqrt(var) * rng.standard_normal(shape) if var > 0 else np.zeros(shape)


def _check_sizes(trials, field_size):
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {trials}")
    if field_size < MIN_FIELD:
        raise ValueError(f"field_size must be >= {MIN_FIELD}, got {field_size}")


def _coding_trial(scenario: CodingScenario, S: int, half_window, seed: int, trial: int):
    p = scenario.params
    i, L = scenario.temporal_distance, p.memory_length
    rng = np.random.default_rng([seed, trial, 1])
    shape = (S + 1, S + 1)
    v = ar1_field(shape, p.sigma_v_sq, p.rho_v, rng)
    # q_h for h = t-i-L+1 .. t
    q = _layers(rng, i + L, shape, math.sqrt(sigma_q_sq(p)))
    n_ref = _white(rng, shape, scenario.sigma_w_ref_sq) + sum(q[:L])
    n_cur = _white(rng, shape, scenario.sigma_w_current_sq) + sum(q[i : i + L])
    a_x = math.sqrt(3.0 * scenario.sigma_dx_sq)
    a_y = math.sqrt(3.0 * scenario.sigma_dy_sq)
    dx, dy = rng.uniform(-a_x, a_x), rng.uniform(-a_y, a_y)
    e = (
        dx * (_dx(v, S) + _dx(n_ref, S))
        + dy * (_dy(v, S) + _dy(n_ref, S))
        + (n_cur - n_ref)[:S, :S]
    )
    return lag_products(e, half_window), None


def _fruc_trial(scenario: FrucScenario, S: int, half_window, seed: int, trial: int, coupled: bool):
    p = scenario.params
    L, D, j, th = p.memory_length, scenario.D, scenario.j, scenario.theta
    rng = np.random.default_rng([seed, trial, 2])
    shape = (S + 1, S + 1)
    sq = math.sqrt(sigma_q_sq(p))
    v = ar1_field(shape, p.sigma_v_sq, p.rho_v, rng)
    s_x = math.sqrt(scenario.sigma_dx_abs_sq)
    s_y = math.sqrt(scenario.sigma_dy_abs_sq)
    dx0, dxD, dy0, dyD = rng.normal(0.0, [s_x, s_x, s_y, s_y])

    if coupled:
        # one noise history for all three frames: q_h for h = -L+1 .. D
        q = _layers(rng, D + L, shape, sq)
        n0 = _white(rng, shape, scenario.sigma_w0_sq) + sum(q[0:L])
        nj = _white(rng, shape, scenario.sigma_wj_sq) + sum(q[j : j + L])
        nD = _white(rng, shape, scenario.sigma_wD_sq) + sum(q[D : D + L])
        dn_j0, dn_Dj = nj - n0, nD - nj
    else:
        # q_h for h = -L+1 .. j
        qa = _layers(rng, j + L, shape, sq)
        n0 = _white(rng, shape, scenario.sigma_w0_sq) + sum(qa[0:L])
        nj = _white(rng, shape, scenario.sigma_wj_sq) + sum(qa[j : j + L])
        # an independent history, q_h for h = j-L+1 .. D
        qb = _layers(rng, D - j + L, shape, sq)
        nj_b = _white(rng, shape, scenario.sigma_wj_sq) + sum(qb[0:L])
        nD = _white(rng, shape, scenario.sigma_wD_sq) + sum(qb[D - j : D - j + L])
        dn_j0, dn_Dj = nj - n0, nD - nj_b

    e = (
        th * dn_j0[:S, :S]
        - (1.0 - th) * dn_Dj[:S, :S]
        + (th * dx0 - (1.0 - th) * dxD) * _dx(v, S)
        + (th * dy0 - (1.0 - th) * dyD) * _dy(v, S)
        + th * (dx0 * _dx(n0, S) + dy0 * _dy(n0, S))
        - (1.0 - th) * (dxD * _dx(nD, S) + dyD * _dy(nD, S))
    )
    cross = float(np.mean(dn_j0[:S, :S] * dn_Dj[:S, :S]))
    return lag_products(e, half_window), cross


def _run_trials(fn, trials, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, range(trials)))
    return [fn(t) for t in range(trials)]


def _z_scores(mean, stderr, closed):
    diff = mean - closed
    scale = max(1.0, float(np.abs(closed).max()))
    z = np.zeros_like(diff)
    nz = stderr > 0
    z[nz] = diff[nz] / stderr[nz]
    # a degenerate lag (no spread across trials) passes only if it is exact
    z[~nz & (np.abs(diff) > 1e-9 * scale)] = np.inf
    return z


def _summarize(kind, estimates, closed: AutocorrMap, half_window, trials, S, seed, scenario, extras):
    est = np.asarray(estimates)
    mean = est.mean(axis=0)
    stderr = est.std(axis=0, ddof=1) / math.sqrt(trials)
    oracle = AutocorrMap(tuple(half_window), mean, stderr)
    z = _z_scores(mean, stderr, closed.values)
    return OracleReport(kind, tuple(half_window), oracle, closed, z, trials, S, seed, scenario, extras)


def oracle_coding_acf(scenario: CodingScenario, half_window=(3, 3), trials: int = 400,
                      field_size: int = 128, seed: int = 0, threads: Optional[int] = None) -> OracleReport:
    """Sample the coding residual expression and compare with the closed form."""
    _check_sizes(trials, field_size)
    if scenario.temporal_distance > scenario.params.memory_length:
        raise DomainError("temporal distance exceeds the noise memory length")
    closed = coding_acf_map(scenario, half_window)
    results = _run_trials(lambda t: _coding_trial(scenario, field_size, half_window, seed, t), trials, threads)
    return _summarize("coding", [r[0] for r in results], closed, half_window, trials, field_size, seed,
                      scenario.to_dict(), {})


def oracle_fruc_acf(scenario: FrucScenario, half_window=(3, 3), trials: int = 400, field_size: int = 128,
                    seed: int = 0, threads: Optional[int] = None, coupled: bool = False) -> OracleReport:
    """Sample the interpolation error expression and compare with the closed form.

    By default the two noise differences come from independent noise
    histories, which is what makes their cross-correlation vanish.  With
    ``coupled=True`` all three frames share one history; the error variance
    then exceeds the closed form by
    ``2 theta (1 - theta) (sigma_wj^2 + max(D - L, 0) sigma_q^2)``.
    """
    _check_sizes(trials, field_size)
    closed = fruc_acf_map(scenario, half_window)  # raises DomainError outside memory
    results = _run_trials(
        lambda t: _fruc_trial(scenario, field_size, half_window, seed, t, coupled), trials, threads
    )
    cross = np.array([r[1] for r in results])
    extras = {
        "coupled": coupled,
        "cross_corr_00": float(cross.mean()),
        "cross_corr_00_stderr": float(cross.std(ddof=1) / math.sqrt(trials)),
    }
    return _summarize("fruc", [r[0] for r in results], closed, half_window, trials, field_size, seed,
                      scenario.to_dict(), extras)


def coupled_excess_variance(scenario: FrucScenario) -> float:
    """Extra error variance when both noise differences share frame ``j``."""
    th = scenario.theta
    L = scenario.params.memory_length
    return 2.0 * th * (1.0 - th) * (
        scenario.sigma_wj_sq + max(scenario.D - L, 0) * sigma_q_sq(scenario.params)
    )


@dataclass
class ValidationRun:
    reports: list
    required_passes: int = 2

    @property
    def passes(self) -> int:
        return sum(r.passed for r in self.reports)

    @property
    def passed(self) -> bool:
        return self.passes >= self.required_passes


def validate(oracle_fn, scenario, seeds=(0, 1, 2), **kwargs) -> ValidationRun:
    """Run an oracle on several seeds; pass when at least two of three agree."""
    reports = [oracle_fn(scenario, seed=s, **kwargs) for s in seeds]
    return ValidationRun(reports, required_passes=max(1, math.ceil(2 * len(seeds) / 3)))
