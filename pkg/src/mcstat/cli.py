"""
Command-line experiment harness.

Subcommands
-----------
theory    closed-form sweeps and ACF surfaces
synth     render a synthetic sequence to raw float planes
code      measured MC-coding residual statistics next to the model
fruc      measured interpolation MSE next to the model
validate  Monte Carlo oracles against the closed forms

Configuration is a YAML file merged over a compiled-in preset; command-line
flags (including ``--set section.key=value``) win over both.  Every table is
written as CSV plus a JSON twin that embeds the resolved configuration.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .engine import MEConfig, block_match, empirical_acf, fruc_interpolate, fruc_mse_measure, mc_predict_coding
from .model import (
    CodingScenario,
    DomainError,
    FrucScenario,
    ModelParams,
    coding_acf_map,
    coding_residual_variance,
    coding_residual_variance_seconds,
    compression_mse,
    fruc_acf_map,
    fruc_mse,
    markov_acf,
    me_error_variance,
    separable_acf,
)
from .oracle import oracle_coding_acf, oracle_fruc_acf, validate
from .rawio import atomic_write_text, export_y8, read_sequence, read_y8, write_sequence
from .synth import apply_compression_noise, gen_motion_path, render_sequence
from .tables import write_table

EXIT_OK = 0
EXIT_GATE = 1
EXIT_USAGE = 2
EXIT_IO = 3


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _grid(start, stop, step):
    n = int(round((stop - start) / step))
    return [round(start + k * step, 10) for k in range(n + 1)]


PRESETS = {
    "paper-sec5": {
        "seed": 0,
        "threads": None,
        "out_dir": "mcstat-out",
        "model": {
            "sigma_v_sq": 2312.0,
            "rho_v": 0.95,
            "memory_length": 5,
            "sigma_q_tilde_sq": 100.0,
            "frame_rate": 25.0,
            "sigma_w_basic_sq": 0.0,
            "compression": {"kind": "empirical", "alpha": 1.0, "beta": 10.0},
        },
        "me": {"block_size": 16, "search_range": 16, "subpel": "half", "metric": "ssd"},
        "theory": {
            "half_window": [3, 3],
            "rates": _grid(0.2, 2.0, 0.2),
            "frame_rates": [60.0, 30.0, 15.0],
            "d_t": _grid(0.02, 0.2, 0.02),
            "distance_rates": [0.5, 1.0, 2.0],
            "frame_distances": [1, 2, 3, 4, 5],
            "sigma_q_tilde_sq": [50.0, 100.0, 200.0, 400.0],
            "fruc_D": [2, 4, 6, 8, 10],
            "acf_rate": 1.0,
            "acf_distance": 1,
            "acf_D": 2,
        },
        "synth": {
            "height": 512,
            "width": 512,
            "frames": 6,
            "margin": None,
            "motion": {"mode": "constant_velocity", "vx": 2.0, "vy": 1.0, "step_sigma": 1.0},
            "export_y8": False,
        },
        "code": {
            "distances": [1, 2, 3, 4],
            "rates": [0.25, 0.5, 1.0, 2.0],
            "n_seeds": 20,
            "half_window": [3, 3],
        },
        "fruc": {
            "D": [2, 4, 6],
            "j": None,
            "theta": 0.5,
            "gamma_abs": 2.0,
            "rates": [0.25, 0.5, 1.0, 2.0],
            "n_seeds": 20,
        },
        "validate": {
            "trials": 400,
            "field_size": 128,
            "seeds": [0, 1, 2],
            "half_window": [3, 3],
            "coding": {"model": {"sigma_q_tilde_sq": 250.0}, "temporal_distance": 1,
                       "rate_current": None, "rate_ref": None},
            "fruc": {"model": {"sigma_q_tilde_sq": 250.0, "sigma_w_basic_sq": 2.0}, "D": 4, "j": 2,
                     "rate_available": None},
        },
    }
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_set(item: str) -> dict:
    if "=" not in item:
        raise ConfigError(f"--set expects key.path=value, got {item!r}")
    path, raw = item.split("=", 1)
    value = yaml.safe_load(raw)
    out: dict = {}
    node = out
    keys = path.strip().split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value
    return out


def resolve_config(args) -> dict:
    """Preset, then config file, then ``--set`` items, then dedicated flags."""
    cfg = copy.deepcopy(PRESETS[args.preset])
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        loaded = yaml.safe_load(path.read_text()) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        cfg = deep_merge(cfg, loaded)
    for item in args.set or []:
        cfg = deep_merge(cfg, _parse_set(item))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.out_dir is not None:
        cfg["out_dir"] = args.out_dir
    raw = {k: getattr(args, k, None) for k in ("raw_y8", "input", "width", "height", "frames")}
    if any(v is not None for v in raw.values()):
        cfg["raw"] = {k: v for k, v in raw.items() if v is not None}
    return cfg


def model_params(cfg: dict, overrides: dict | None = None) -> ModelParams:
    return ModelParams.from_dict(deep_merge(cfg["model"], overrides or {}))


def me_config(cfg: dict) -> MEConfig:
    return MEConfig(**cfg["me"])


def _nonempty(section: dict, *keys) -> None:
    for key in keys:
        if not section.get(key):
            raise ConfigError(f"sweep list {key!r} must be non-empty")


def _at(axis: str, value, fn, *args):
    """Evaluate ``fn`` and prefix any precondition error with the sweep point."""
    try:
        return fn(*args)
    except ValueError as exc:
        raise ConfigError(f"{axis}={value}: {exc}") from exc


def _meta(cfg: dict, **extra) -> dict:
    return {"version": __version__, "config": cfg, **extra}


def _emit(cfg, name, rows, **extra):
    return write_table(cfg["out_dir"], name, rows, _meta(cfg, **extra))


def _set_threads(cfg: dict) -> None:
    n = cfg.get("threads")
    if n:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _sigma_d_sq(cfg) -> float:
    return me_error_variance(me_config(cfg).precision)


# ---------------------------------------------------------------------------
# theory
# ---------------------------------------------------------------------------


def cmd_theory(cfg: dict) -> int:
    th = cfg["theory"]
    _nonempty(th, "rates", "frame_rates", "d_t", "distance_rates", "frame_distances", "sigma_q_tilde_sq", "fruc_D")
    base = model_params(cfg)
    sd = _sigma_d_sq(cfg)
    fr = cfg["fruc"]
    hw = tuple(th["half_window"])

    def coding(params, i, rate):
        sc = CodingScenario(params, i, sd, sd, None, rate)
        _check_gap(sc)
        return coding_residual_variance(sc)

    def fruc(params, D, rate):
        return fruc_mse(_fruc_scenario(cfg, params, D, rate))

    rows = []
    for F in th["frame_rates"]:
        params = _at("frame_rate", F, lambda: replace(base, frame_rate=float(F)))
        for r in th["rates"]:
            rows.append({"frame_rate": F, "d_t": 1.0 / F, "rate": r,
                         "compression_mse": _at("rate", r, compression_mse, base.compression, r),
                         "variance": _at("rate", r, coding, params, 1, r)})
    _emit(cfg, "coding_vs_rate", rows)

    rows = []
    for r in th["distance_rates"]:
        for d in th["d_t"]:
            if not d > 0:
                raise ConfigError(f"d_t={d}: must be positive")
            params = replace(base, frame_rate=1.0 / d)
            sc = CodingScenario(params, 1, sd, sd, None, r)
            rows.append({"rate": r, "d_t": d, "frame_rate": 1.0 / d,
                         "variance": _at("d_t", d, coding_residual_variance_seconds, sc, d)})
    _emit(cfg, "coding_vs_distance", rows)

    rows = []
    for r in th["distance_rates"]:
        for i in th["frame_distances"]:
            rows.append({"rate": r, "frame_distance": i, "d_t": i / base.frame_rate,
                         "variance": _at("frame_distance", i, coding, base, int(i), r)})
    _emit(cfg, "coding_vs_frames", rows)

    rows = []
    for r in th["distance_rates"]:
        for s in th["sigma_q_tilde_sq"]:
            params = _at("sigma_q_tilde_sq", s, lambda: replace(base, sigma_q_tilde_sq=float(s)))
            rows.append({"rate": r, "sigma_q_tilde_sq": s, "variance": _at("sigma_q_tilde_sq", s, coding, params, 1, r)})
    _emit(cfg, "coding_vs_sigma_q", rows)

    for D in th["fruc_D"]:
        _at("distance", D, fruc, base, D, None)

    rows = []
    for D in th["fruc_D"]:
        for r in th["rates"]:
            rows.append({"distance": D, "j": _fruc_j(cfg, D), "rate": r, "theta": fr["theta"],
                         "mse": _at("rate", r, fruc, base, D, r)})
    _emit(cfg, "fruc_vs_rate", rows)

    rows = []
    for r in th["distance_rates"]:
        for D in th["fruc_D"]:
            rows.append({"rate": r, "distance": D, "j": _fruc_j(cfg, D), "d_t": D / base.frame_rate,
                         "mse": _at("distance", D, fruc, base, D, r)})
    _emit(cfg, "fruc_vs_distance", rows)

    rows = []
    for D in th["fruc_D"]:
        for s in th["sigma_q_tilde_sq"]:
            params = _at("sigma_q_tilde_sq", s, lambda: replace(base, sigma_q_tilde_sq=float(s)))
            rows.append({"distance": D, "sigma_q_tilde_sq": s,
                         "mse": _at("sigma_q_tilde_sq", s, fruc, params, D, th["acf_rate"])})
    _emit(cfg, "fruc_vs_sigma_q", rows)

    sc = _at("acf_distance", th["acf_distance"], CodingScenario, base, int(th["acf_distance"]), sd, sd,
             None, th["acf_rate"])
    full = _at("acf_distance", th["acf_distance"], coding_acf_map, sc, hw)
    rows = []
    for k, l in full.lags():
        f, s, m = full.at(k, l), separable_acf(k, l, sc), markov_acf(k, l, sc)
        rows.append({"k": k, "l": l, "full": f, "separable": s, "markov": m,
                     "abs_diff_separable": abs(f - s), "abs_diff_markov": abs(f - m)})
    _emit(cfg, "coding_acf_surface", rows, scenario=sc.to_dict())

    fsc = _fruc_scenario(cfg, base, int(th["acf_D"]), th["acf_rate"])
    fmap = _at("acf_D", th["acf_D"], fruc_acf_map, fsc, hw)
    _emit(cfg, "fruc_acf_surface", [{"k": k, "l": l, "value": v} for k, l, v in fmap.rows()],
          scenario=fsc.to_dict())
    return EXIT_OK


def _check_gap(sc: CodingScenario) -> None:
    # the closed form extrapolates silently past the noise memory; sweeps refuse
    if sc.temporal_distance > sc.params.memory_length:
        raise DomainError(f"temporal distance exceeds noise memory length {sc.params.memory_length}")


def _fruc_j(cfg, D) -> int:
    j = cfg["fruc"].get("j")
    return int(D) // 2 if j is None else int(j)


def _fruc_scenario(cfg, params, D, rate) -> FrucScenario:
    fr = cfg["fruc"]
    sd = _sigma_d_sq(cfg)
    return _at("distance", D, FrucScenario, params, int(D), _fruc_j(cfg, D), float(fr["theta"]),
               float(fr["gamma_abs"]), sd, sd, rate)


# ---------------------------------------------------------------------------
# synthetic sequences and raw input
# ---------------------------------------------------------------------------


def _render(cfg, seed, T=None):
    sy = cfg["synth"]
    T = int(sy["frames"]) if T is None else T
    mo = sy["motion"]
    path = gen_motion_path(T, mo["mode"], mo.get("vx", 0.0), mo.get("vy", 0.0), mo.get("step_sigma", 1.0), seed)
    return render_sequence(model_params(cfg), (int(sy["height"]), int(sy["width"])), path, T, seed, sy.get("margin"))


def cmd_synth(cfg: dict) -> int:
    seq = _render(cfg, int(cfg["seed"]))
    out = Path(cfg["out_dir"])
    write_sequence(seq, out / "sequence.f32")
    if cfg["synth"].get("export_y8"):
        export_y8(seq.frames, out / "sequence.y8")
    expected = seq.expected_frame_variance()
    rows = [{"frame": t, "mean": float(f.mean()), "energy": float(np.mean(f * f)), "expected_energy": expected}
            for t, f in enumerate(seq.frames)]
    _emit(cfg, "synth_frames", rows, sequence="sequence.f32")
    return EXIT_OK


def _raw_frames(cfg):
    """Frames from ``--raw-y8`` or ``--input``, or ``None`` for synthetic mode."""
    raw = cfg.get("raw") or {}
    if raw.get("raw_y8"):
        for key in ("width", "height"):
            if not raw.get(key):
                raise ConfigError(f"--raw-y8 needs --{key}")
        path = Path(raw["raw_y8"])
        if not path.is_file():
            raise FileNotFoundError(f"raw input not found: {path}")
        return read_y8(path, int(raw["width"]), int(raw["height"]), raw.get("frames"))
    if raw.get("input"):
        path = Path(raw["input"])
        if not path.is_file():
            raise FileNotFoundError(f"input sequence not found: {path}")
        frames = read_sequence(path).frames
        n = raw.get("frames")
        return frames[: int(n)] if n else frames
    return None


def _stats(values):
    a = np.asarray(values, dtype=float)
    se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else None
    return float(a.mean()), se


def _seeds(cfg, section):
    return [int(cfg["seed"]) + k for k in range(int(cfg[section]["n_seeds"]))]


def cmd_code(cfg: dict) -> int:
    co = cfg["code"]
    _nonempty(co, "distances")
    distances = [int(i) for i in co["distances"]]
    rates = [None] + list(co.get("rates") or [])
    me = me_config(cfg)
    params = model_params(cfg)
    hw = tuple(co["half_window"])
    for i in distances:
        _at("distance", i, _check_gap, CodingScenario(params, i))
    raw = _raw_frames(cfg)

    # pairs of (current, reference, compression seed) per temporal distance
    if raw is None:
        seqs = [(s, _render(cfg, s, max(distances)).frames) for s in _seeds(cfg, "code")]
    else:
        seqs = [(int(cfg["seed"]), raw)]
    samples = {(i, r): [] for i in distances for r in rates}
    acfs = {i: [] for i in distances}
    for seed, frames in seqs:
        n = len(frames)
        for i in distances:
            if i >= n:
                raise ConfigError(f"distance={i}: sequence has only {n} frames")
            targets = [n - 1] if raw is None else range(i, n)
            for t in targets:
                cur, ref = frames[t], frames[t - i]
                motion = block_match(cur, ref, me)
                for r in rates:
                    mse = _at("rate", r, compression_mse, params.compression, r)
                    ref_c = apply_compression_noise(ref, mse, seed * 1009 + t * 31 + i)
                    _, res = mc_predict_coding(cur, ref_c, me, motion=motion)
                    samples[(i, r)].append(res.variance())
                    if r is None:
                        acfs[i].append(empirical_acf(res, hw).values)

    sd = me_error_variance(me.precision)
    rows = []
    for i in distances:
        for r in rates:
            m, se = _stats(samples[(i, r)])
            sc = CodingScenario(params, i, sd, sd, None, r)
            rows.append({"distance": i, "rate": r, "compression_mse": compression_mse(params.compression, r),
                         "measured_variance": m, "measured_stderr": se,
                         "predicted_variance": _at("distance", i, coding_residual_variance, sc),
                         "samples": len(samples[(i, r)])})
    _emit(cfg, "code_variance", rows, mode="raw" if raw is not None else "synthetic")

    rows = []
    for i in distances:
        measured = np.mean(acfs[i], axis=0)
        closed = coding_acf_map(CodingScenario(params, i, sd, sd), hw)
        for k, l in closed.lags():
            rows.append({"distance": i, "k": k, "l": l, "measured": float(measured[k + hw[0], l + hw[1]]),
                         "predicted": closed.at(k, l)})
    _emit(cfg, "code_acf", rows, mode="raw" if raw is not None else "synthetic")
    return EXIT_OK


def cmd_fruc(cfg: dict) -> int:
    fr = cfg["fruc"]
    _nonempty(fr, "D")
    Ds = [int(D) for D in fr["D"]]
    rates = [None] + list(fr.get("rates") or [])
    me = me_config(cfg)
    params = model_params(cfg)
    theta = float(fr["theta"])
    raw = _raw_frames(cfg)
    for D in Ds:
        _fruc_scenario(cfg, params, D, None)  # precondition check up front

    if raw is None:
        seqs = [(s, _render(cfg, s, max(Ds)).frames) for s in _seeds(cfg, "fruc")]
    else:
        seqs = [(int(cfg["seed"]), raw)]
    samples = {(D, r): [] for D in Ds for r in rates}
    for seed, frames in seqs:
        n = len(frames)
        for D in Ds:
            if D >= n:
                raise ConfigError(f"distance={D}: sequence has only {n} frames")
            j = _fruc_j(cfg, D)
            starts = [0] if raw is None else range(0, n - D)
            for s0 in starts:
                for r in rates:
                    mse = compression_mse(params.compression, r)
                    f0 = apply_compression_noise(frames[s0], mse, seed * 1009 + s0 * 31 + 1)
                    fD = apply_compression_noise(frames[s0 + D], mse, seed * 1009 + (s0 + D) * 31 + 1)
                    res = fruc_interpolate(f0, fD, D, j, theta, me)
                    samples[(D, r)].append(fruc_mse_measure(res.frame, frames[s0 + j], res.mask))

    rows = []
    for D in Ds:
        for r in rates:
            m, se = _stats(samples[(D, r)])
            rows.append({"distance": D, "j": _fruc_j(cfg, D), "rate": r,
                         "compression_mse": compression_mse(params.compression, r),
                         "measured_mse": m, "measured_stderr": se,
                         "predicted_mse": fruc_mse(_fruc_scenario(cfg, params, D, r)),
                         "samples": len(samples[(D, r)])})
    _emit(cfg, "fruc_mse", rows, mode="raw" if raw is not None else "synthetic")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validation_scenarios(cfg: dict):
    va = cfg["validate"]
    sd = _sigma_d_sq(cfg)
    c = va["coding"]
    coding = CodingScenario(model_params(cfg, c.get("model")), int(c["temporal_distance"]), sd, sd,
                            c.get("rate_current"), c.get("rate_ref"))
    f = va["fruc"]
    fr = cfg["fruc"]
    fruc = FrucScenario(model_params(cfg, f.get("model")), int(f["D"]), int(f["j"]), float(fr["theta"]),
                        float(fr["gamma_abs"]), sd, sd, f.get("rate_available"))
    return coding, fruc


def cmd_validate(cfg: dict) -> int:
    va = cfg["validate"]
    _nonempty(va, "seeds")
    coding, fruc = validation_scenarios(cfg)
    kw = {"half_window": tuple(va["half_window"]), "trials": int(va["trials"]),
          "field_size": int(va["field_size"]), "threads": cfg.get("threads")}
    seeds = [int(cfg["seed"]) + int(s) for s in va["seeds"]]
    summary = []
    overall = True
    for kind, fn, sc in (("coding", oracle_coding_acf, coding), ("fruc", oracle_fruc_acf, fruc)):
        t0 = time.perf_counter()
        run = validate(fn, sc, seeds=seeds, **kw)
        elapsed = time.perf_counter() - t0
        overall &= run.passed
        for rep in run.reports:
            doc = rep.to_dict()
            _emit(cfg, f"validate_{kind}_seed{rep.seed}", rep.rows(),
                  report={k: v for k, v in doc.items() if k != "lags"})
            summary.append({"kind": kind, "seed": rep.seed, "pass_fraction": rep.pass_fraction,
                            "max_abs_z": float(np.max(np.abs(rep.z))), "passed": rep.passed,
                            "variance_oracle": rep.oracle.at(0, 0), "variance_closed": rep.closed.at(0, 0),
                            "seconds": elapsed / len(run.reports)})
        summary.append({"kind": kind, "seed": None, "pass_fraction": run.passes / len(run.reports),
                        "passed": run.passed})
    _emit(cfg, "validate_summary", summary, passed=overall)
    return EXIT_OK if overall else EXIT_GATE


COMMANDS = {"theory": cmd_theory, "synth": cmd_synth, "code": cmd_code, "fruc": cmd_fruc, "validate": cmd_validate}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file merged over the preset")
    common.add_argument("--preset", default="paper-sec5", choices=sorted(PRESETS))
    common.add_argument("--out-dir", dest="out_dir", help="output directory")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--threads", type=int, help="worker threads for block matching and oracles")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. theory.rates=[0.5,1.0]")
    common.add_argument("--error-json", action="store_true", help="print failures as JSON on stderr")
    raw = argparse.ArgumentParser(add_help=False)
    raw.add_argument("--raw-y8", dest="raw_y8", help="8-bit grayscale planes to analyze")
    raw.add_argument("--input", help="float32 sequence written by 'synth'")
    raw.add_argument("--width", type=int)
    raw.add_argument("--height", type=int)
    raw.add_argument("--frames", type=int, help="number of frames to read")

    parser = argparse.ArgumentParser(prog="mcstat", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"mcstat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("theory", parents=[common], help="closed-form sweeps and ACF surfaces")
    sub.add_parser("synth", parents=[common], help="render a synthetic sequence")
    sub.add_parser("code", parents=[common, raw], help="MC-coding residual experiment")
    sub.add_parser("fruc", parents=[common, raw], help="frame interpolation experiment")
    sub.add_parser("validate", parents=[common], help="Monte Carlo oracle validation")
    return parser


def _fail(args, code: int, exc: BaseException) -> int:
    if getattr(args, "error_json", False):
        doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        print(json.dumps(doc), file=sys.stderr)
    else:
        print(f"mcstat: error: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / f"config.{args.command}.yaml", yaml.safe_dump(cfg, sort_keys=False))
        _set_threads(cfg)
        return COMMANDS[args.command](cfg)
    except (OSError, yaml.YAMLError) as exc:
        return _fail(args, EXIT_IO, exc)
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(args, EXIT_USAGE, exc)


if __name__ == "__main__":
    sys.exit(main())
