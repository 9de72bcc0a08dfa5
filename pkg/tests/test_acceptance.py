"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line."""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, HALF_PEL
from mcstat import cli
from mcstat.engine import MEConfig, block_match, fruc_interpolate, fruc_mse_measure, mc_predict_coding
from mcstat.model import (
    CodingScenario,
    EmpiricalRD,
    FrucScenario,
    GaussianRD,
    ModelParams,
    base_image_acf,
    coding_residual_acf,
    coding_residual_variance,
    delta_noise_acf,
    fruc_mse,
    fruc_mse_half,
    horizontal_acf,
    markov_acf,
    separable_acf,
    sigma_q_sq,
    vertical_acf,
)
from mcstat.oracle import oracle_coding_acf, oracle_fruc_acf, validate
from mcstat.synth import gen_base_image, gen_motion_path, render_sequence
from mcstat.tables import read_csv

REL = 1e-12


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


def rel_err(a, b, scale=0.0):
    """Relative difference; ``scale`` floors the denominator.

    ACF values at some lags are small differences of terms of the size of the
    variance, so those comparisons pass ``scale = R(0, 0)``.
    """
    return abs(a - b) / max(abs(a), abs(b), scale, 1e-300)


def r_squared(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    return 1.0 - resid @ resid / np.sum((y - y.mean()) ** 2), slope


def _param_grid():
    for sv, rho, L, sqt, F, wb in itertools.product(
        (500.0, 2312.0), (0.5, 0.95), (3, 5), (0.0, 100.0, 400.0), (25.0,), (0.0, 3.0)
    ):
        yield ModelParams(sv, rho, L, sqt, F, wb, EmpiricalRD(1.0, 10.0))


# ---------------------------------------------------------------------------


def test_criterion_1_algebraic_identities():
    t0 = time.perf_counter()
    worst = {k: 0.0 for k in "abcdef"}
    sds = [(HALF_PEL, HALF_PEL), (1 / 192, 0.03)]
    rates = [None, 0.5]
    for p in _param_grid():
        sq = sigma_q_sq(p)
        for (sx, sy), rr, rc in itertools.product(sds, rates, rates):
            for i in range(1, p.memory_length):
                a = CodingScenario(p, i, sx, sy, rc, rr)
                diff = coding_residual_variance(a.with_(temporal_distance=i + 1)) - coding_residual_variance(a)
                worst["a"] = max(worst["a"], abs(diff - 2 * sq) / max(2 * sq, coding_residual_variance(a)))
            sc = CodingScenario(p, 1, sx, sy, rc, rr)
            r0 = coding_residual_variance(sc)
            for k in range(-4, 5):
                worst["c"] = max(worst["c"], rel_err(separable_acf(k, 0, sc), coding_residual_acf(k, 0, sc), r0),
                                 rel_err(separable_acf(0, k, sc), coding_residual_acf(0, k, sc), r0),
                                 rel_err(horizontal_acf(k, sc), coding_residual_acf(k, 0, sc), r0),
                                 rel_err(vertical_acf(k, sc), coding_residual_acf(0, k, sc), r0))
            for k, l in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)]:
                worst["d"] = max(worst["d"], rel_err(markov_acf(k, l, sc), coding_residual_acf(k, l, sc), r0))
        for D in range(2, 2 * p.memory_length + 1):
            for j in range(max(1, D - p.memory_length), min(D - 1, p.memory_length) + 1):
                for th, rate, g in itertools.product((0.0, 0.3, 0.5, 0.8), (None, 1.0), (1.0, 2.0)):
                    f = FrucScenario(p, D, j, th, g, HALF_PEL, HALF_PEL, rate)
                    worst["f"] = max(worst["f"], rel_err(fruc_mse(f), fruc_mse(f.with_(theta=1 - th, j=D - j))))
                    if th == 0.5:
                        worst["b"] = max(worst["b"], rel_err(fruc_mse(f), fruc_mse_half(f)))
    for var in (1.0, 255.0**2 / 12):
        m = GaussianRD(var)
        for r in np.linspace(0.0, 6.0, 25):
            worst["e"] = max(worst["e"], rel_err(m.mse(r) / m.mse(r + 1.0), 4.0))
    elapsed = time.perf_counter() - t0
    ok = all(v <= REL for v in worst.values()) and elapsed < 1.0
    detail = ", ".join(f"({k}) {v:.1e}" for k, v in worst.items())
    record(1, "algebraic identities", ok, f"max rel err {detail}; {elapsed:.2f} s")


def test_criterion_2_oracle_agreement(coding_fixture, fruc_fixture):
    fixture_ok = abs(coding_residual_variance(coding_fixture) - 33.8) <= REL * 33.8
    lines = []
    ok = fixture_ok
    for name, fn, sc in (("coding", oracle_coding_acf, coding_fixture), ("fruc", oracle_fruc_acf, fruc_fixture)):
        t0 = time.perf_counter()
        run = validate(fn, sc, seeds=(0, 1, 2), half_window=(3, 3), trials=400, field_size=128)
        elapsed = time.perf_counter() - t0
        fracs = [f"{r.pass_fraction:.2f}" for r in run.reports]
        ok &= run.passed and elapsed / len(run.reports) < 120
        lines.append(f"{name} {run.passes}/3 seeds pass, lag fractions {fracs}, {elapsed / 3:.1f} s/oracle")
        if name == "coding":
            r0 = run.reports[0]
            z = (r0.oracle.at(0, 0) - 33.8) / r0.oracle.stderr[3, 3]
            ok &= abs(z) <= 3
            lines.append(f"variance 33.8 fixture: oracle {r0.oracle.at(0, 0):.2f} (z={z:+.2f})")
    record(2, "oracle agreement on 7x7 window", ok, "; ".join(lines))


def _columns(rows, key, x, y):
    groups = {}
    for r in rows:
        groups.setdefault(r[key], []).append((r[x], r[y]))
    return {g: (np.array([a for a, _ in v]), np.array([b for _, b in v])) for g, v in groups.items()}


def test_criterion_3_theory_trends(tmp_path):
    assert cli.main(["theory", "--preset", "paper-sec5", "--out-dir", str(tmp_path)]) == 0
    t = {name: read_csv(tmp_path / f"{name}.csv") for name in (
        "coding_vs_rate", "coding_vs_distance", "coding_vs_frames", "coding_vs_sigma_q",
        "fruc_vs_rate", "fruc_vs_distance", "fruc_vs_sigma_q")}
    checks = []

    def convex_decreasing(cols):
        return all(np.all(np.diff(y) <= 1e-9) and np.all(np.diff(y, 2) >= -1e-9) for _, y in cols.values())

    def affine(cols):
        out = True
        for x, y in cols.values():
            h = np.diff(x)
            out &= bool(np.allclose(h, h[0], rtol=1e-9)) and bool(np.all(np.abs(np.diff(y, 2)) <= 1e-9))
        return out

    def increasing(cols):
        return all(np.all(np.diff(y) > 0) for _, y in cols.values())

    checks.append(("coding vs rate", convex_decreasing(_columns(t["coding_vs_rate"], "frame_rate", "rate", "variance"))))
    checks.append(("fruc vs rate", convex_decreasing(_columns(t["fruc_vs_rate"], "distance", "rate", "mse"))))
    checks.append(("coding vs d_t", affine(_columns(t["coding_vs_distance"], "rate", "d_t", "variance"))))
    checks.append(("coding vs i", affine(_columns(t["coding_vs_frames"], "rate", "frame_distance", "variance"))))
    checks.append(("fruc vs D", affine(_columns(t["fruc_vs_distance"], "rate", "distance", "mse"))))
    checks.append(("coding vs sigma_q", increasing(_columns(t["coding_vs_sigma_q"], "rate", "sigma_q_tilde_sq", "variance"))))
    checks.append(("fruc vs sigma_q", increasing(_columns(t["fruc_vs_sigma_q"], "distance", "sigma_q_tilde_sq", "mse"))))
    ok = all(c for _, c in checks)
    record(3, "theory sweep shapes (paper-sec5)", ok, ", ".join(f"{n} {'ok' if c else 'BAD'}" for n, c in checks))


@pytest.mark.slow
def test_criterion_4_synthetic_experiment(tmp_path):
    t0 = time.perf_counter()
    assert cli.main(["code", "--out-dir", str(tmp_path / "code")]) == 0
    assert cli.main(["fruc", "--out-dir", str(tmp_path / "fruc")]) == 0
    elapsed = time.perf_counter() - t0
    code = read_csv(tmp_path / "code" / "code_variance.csv")
    fruc = read_csv(tmp_path / "fruc" / "fruc_mse.csv")
    assert all(r["samples"] == 20 for r in code + fruc)

    def rate_key(r):
        return math.inf if r["rate"] is None else r["rate"]

    ok = elapsed < 600
    notes = []
    by_rate = {}
    for r in code:
        by_rate.setdefault(rate_key(r), []).append(r)
    fits = []
    for rate, rows in by_rate.items():
        rows.sort(key=lambda r: r["distance"])
        r2, slope = r_squared([r["distance"] for r in rows], [r["measured_variance"] for r in rows])
        fits.append(r2)
        ok &= r2 >= 0.9 and slope > 0
    notes.append(f"coding vs i: min R^2 {min(fits):.4f}")
    by_dist = {}
    for r in code:
        by_dist.setdefault(r["distance"], []).append(r)
    mono = all(np.all(np.diff([r["measured_variance"] for r in sorted(rows, key=rate_key)]) <= 0)
               for rows in by_dist.values())
    ok &= mono
    notes.append(f"non-increasing in reference rate {'ok' if mono else 'BAD'}")
    by_rate = {}
    for r in fruc:
        by_rate.setdefault(rate_key(r), []).append(r)
    fits = []
    for rows in by_rate.values():
        rows.sort(key=lambda r: r["distance"])
        y = [r["measured_mse"] for r in rows]
        r2, _ = r_squared([r["distance"] for r in rows], y)
        fits.append(r2)
        ok &= r2 >= 0.9 and bool(np.all(np.diff(y) > 0))
    notes.append(f"fruc vs D increasing, min R^2 {min(fits):.4f}")
    record(4, "synthetic coding/FRUC trends (20 seeds, 512^2)", ok, f"{'; '.join(notes)}; {elapsed:.0f} s")


def test_criterion_5_degenerate_exactness():
    params = ModelParams(sigma_q_tilde_sq=0.0)
    cfg = MEConfig(block_size=16, search_range=8)
    warm = np.zeros((64, 64))
    block_match(warm, warm, cfg)  # keep JIT compilation out of the timing
    t0 = time.perf_counter()
    seq = render_sequence(params, (128, 128), gen_motion_path(4, vx=2, vy=-1), 4, seed=11)
    f = seq.frames
    residuals = [mc_predict_coding(f[i], f[0], cfg)[1] for i in (1, 2, 3)]
    coding = max(np.abs(r.values[r.mask]).max() for r in residuals)
    fr = max(fruc_mse_measure(r.frame, f[D // 2], r.mask)
             for D in (2, 4) for r in [fruc_interpolate(f[0], f[D], D, D // 2, 0.5, cfg)])
    mf = block_match(f[2], f[2], MEConfig(block_size=16, search_range=8, subpel="quarter"))
    elapsed = time.perf_counter() - t0
    ok = coding == 0.0 and fr == 0.0 and not mf.vectors.any() and elapsed < 1.0
    record(5, "degenerate exactness", ok,
           f"max |coding residual| {coding}, FRUC MSE {fr}, identical-frame vectors all zero "
           f"{not mf.vectors.any()}; {elapsed:.2f} s")


def test_criterion_6_synthesizer_fidelity():
    p = ModelParams(sigma_w_basic_sq=2.0)
    notes = []
    b = gen_base_image(1024, 1024, 0, p.sigma_v_sq, p.rho_v, seed=0).canvas
    errs = {
        (1, 0): np.mean(b[:, 1:] * b[:, :-1]) / base_image_acf(1, 0, p) - 1,
        (0, 1): np.mean(b[1:, :] * b[:-1, :]) / base_image_acf(0, 1, p) - 1,
        (1, 1): np.mean(b[1:, 1:] * b[:-1, :-1]) / base_image_acf(1, 1, p) - 1,
    }
    ok = all(abs(e) <= 0.05 for e in errs.values())
    notes.append("ACF rel err " + ", ".join(f"{k}: {v:+.3f}" for k, v in errs.items()))

    L = p.memory_length
    seq = render_sequence(p, (1024, 1024), gen_motion_path(L, vx=1, vy=1), L, seed=0)
    expected = p.sigma_v_sq + p.sigma_w_basic_sq + L * sigma_q_sq(p)
    energy = [np.mean(f * f) / expected - 1 for f in seq.frames]
    ok &= all(abs(e) <= 0.15 for e in energy)
    notes.append(f"energy rel err max {max(map(abs, energy)):.3f}")

    # motion-compensated frame differences: the base image cancels, the noise remains
    per_seed = {g: [] for g in range(1, L + 1)}
    for s in range(30):
        seq = render_sequence(p, (128, 128), gen_motion_path(L, vx=1, vy=1), L, seed=100 + s)
        for g in range(1, L + 1):
            d = seq.frames[g][g:, g:] - seq.frames[0][:-g, :-g]
            per_seed[g].append(np.mean(d * d))
    zs = []
    for g, vals in per_seed.items():
        target = delta_noise_acf(0, 0, g, p.sigma_w_basic_sq, p.sigma_w_basic_sq, p)
        zs.append((np.mean(vals) - target) / (np.std(vals, ddof=1) / math.sqrt(len(vals))))
    ok &= all(abs(z) <= 3 for z in zs)
    notes.append("frame-diff z " + ", ".join(f"{z:+.2f}" for z in zs))
    record(6, "synthesizer fidelity", ok, "; ".join(notes))
