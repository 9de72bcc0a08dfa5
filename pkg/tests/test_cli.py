import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from mcstat import cli
from mcstat.rawio import export_y8
from mcstat.tables import read_csv, write_table

SMALL = ["--set", "synth.height=96", "--set", "synth.width=96", "--set", "me.search_range=8"]


def run(tmp_path, *args):
    return cli.main([*args, "--out-dir", str(tmp_path)])


def test_write_table_csv_and_json(tmp_path):
    rows = [{"k": -1, "l": 0, "value": 1.5}, {"k": 0, "l": 0, "value": None}]
    write_table(tmp_path, "t", rows, {"config": {"a": 1}})
    text = (tmp_path / "t.csv").read_text().splitlines()
    assert text == ["k,l,value", "-1,0,1.5", "0,0,"]
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["rows"] == rows and doc["config"] == {"a": 1}
    assert read_csv(tmp_path / "t.csv")[1]["value"] is None


def test_theory_outputs(tmp_path):
    assert run(tmp_path, "theory") == 0
    names = {p.stem for p in tmp_path.glob("*.csv")}
    assert names == {
        "coding_vs_rate", "coding_vs_distance", "coding_vs_frames", "coding_vs_sigma_q",
        "fruc_vs_rate", "fruc_vs_distance", "fruc_vs_sigma_q", "coding_acf_surface", "fruc_acf_surface",
    }
    for csv in tmp_path.glob("*.csv"):
        header = csv.read_text().splitlines()[0].split(",")
        assert all(h == h.lower() and " " not in h for h in header)
        doc = json.loads(csv.with_suffix(".json").read_text())
        assert doc["config"]["model"]["sigma_v_sq"] == 2312.0
        assert len(doc["rows"]) == len(csv.read_text().splitlines()) - 1
    surf = read_csv(tmp_path / "coding_acf_surface.csv")
    assert len(surf) == 49
    assert all(float(r["k"]).is_integer() for r in surf)


def test_theory_gamma_default(tmp_path):
    run(tmp_path, "theory")
    doc = json.loads((tmp_path / "fruc_acf_surface.json").read_text())
    assert doc["scenario"]["gamma_abs"] == 2.0
    assert doc["scenario"]["theta"] == 0.5


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"seed": 5, "theory": {"rates": [1.0, 2.0]}, "model": {"rho_v": 0.9}}))
    out = tmp_path / "out"
    assert cli.main(["theory", "--config", str(cfg), "--seed", "7", "--set", "theory.rates=[0.5]",
                     "--out-dir", str(out)]) == 0
    doc = json.loads((out / "coding_vs_rate.json").read_text())
    assert doc["config"]["seed"] == 7
    assert doc["config"]["theory"]["rates"] == [0.5]
    assert doc["config"]["model"]["rho_v"] == 0.9


def test_rerun_from_embedded_config_is_identical(tmp_path):
    a = tmp_path / "a"
    assert cli.main(["synth", "--out-dir", str(a), "--seed", "3", *SMALL, "--set", "synth.frames=2"]) == 0
    embedded = json.loads((a / "synth_frames.json").read_text())["config"]
    cfg = tmp_path / "embedded.yaml"
    cfg.write_text(yaml.safe_dump(embedded))
    b = tmp_path / "b"
    assert cli.main(["synth", "--config", str(cfg), "--out-dir", str(b)]) == 0
    assert (a / "sequence.f32").read_bytes() == (b / "sequence.f32").read_bytes()


def test_precondition_error_names_axis(tmp_path, capsys):
    code = run(tmp_path, "theory", "--set", "theory.fruc_D=[2,12]", "--error-json")
    assert code == cli.EXIT_USAGE
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2
    assert "distance=12" in err["message"]


def test_empty_sweep_rejected(tmp_path, capsys):
    assert run(tmp_path, "theory", "--set", "theory.rates=[]") == cli.EXIT_USAGE
    assert "non-empty" in capsys.readouterr().err


def test_missing_input_file(tmp_path, capsys):
    code = run(tmp_path, "code", "--raw-y8", str(tmp_path / "nope.y8"), "--width", "8", "--height", "8",
               "--error-json")
    assert code == cli.EXIT_IO
    assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"


def test_raw_needs_dims(tmp_path):
    f = tmp_path / "x.y8"
    f.write_bytes(bytes(64))
    assert run(tmp_path, "code", "--raw-y8", str(f), "--width", "8") == cli.EXIT_USAGE


def test_code_noiseless_integer_motion_is_zero(tmp_path):
    code = run(tmp_path, "code", *SMALL, "--set", "model.sigma_q_tilde_sq=0", "--set", "code.n_seeds=2",
               "--set", "code.distances=[1,2]", "--set", "code.rates=[]")
    assert code == 0
    rows = read_csv(tmp_path / "code_variance.csv")
    assert [r["measured_variance"] for r in rows] == [0.0, 0.0]
    assert {"distance", "rate", "measured_variance", "predicted_variance", "samples"} <= set(rows[0])


def test_fruc_static_is_zero(tmp_path):
    code = run(tmp_path, "fruc", *SMALL, "--set", "model.sigma_q_tilde_sq=0", "--set", "synth.motion.vx=0",
               "--set", "synth.motion.vy=0", "--set", "fruc.n_seeds=1", "--set", "fruc.rates=[]")
    assert code == 0
    rows = read_csv(tmp_path / "fruc_mse.csv")
    assert [r["distance"] for r in rows] == [2.0, 4.0, 6.0]
    assert all(r["measured_mse"] == 0.0 for r in rows)


def test_code_on_raw_y8(tmp_path):
    rng = np.random.default_rng(0)
    base = 40 * rng.standard_normal((80, 80))
    frames = np.stack([np.roll(base, t, axis=1) for t in range(4)])
    src = tmp_path / "in.y8"
    export_y8(frames, src)
    out = tmp_path / "out"
    code = cli.main(["code", "--raw-y8", str(src), "--width", "80", "--height", "80", "--frames", "3",
                     "--set", "me.search_range=4", "--set", "code.distances=[1,2]", "--set", "code.rates=[]",
                     "--out-dir", str(out)])
    assert code == 0
    rows = read_csv(out / "code_variance.csv")
    assert [r["samples"] for r in rows] == [2.0, 1.0]
    assert all(r["measured_variance"] == 0.0 for r in rows)
    assert json.loads((out / "code_variance.json").read_text())["mode"] == "raw"


def test_fruc_on_synth_sequence_input(tmp_path):
    seq_dir = tmp_path / "s"
    assert cli.main(["synth", "--out-dir", str(seq_dir), *SMALL, "--set", "synth.frames=4"]) == 0
    out = tmp_path / "f"
    code = cli.main(["fruc", "--input", str(seq_dir / "sequence.f32"), *SMALL, "--set", "fruc.D=[2]",
                     "--set", "fruc.rates=[1.0]", "--out-dir", str(out)])
    assert code == 0
    rows = read_csv(out / "fruc_mse.csv")
    assert rows[0]["samples"] == 3.0
    assert rows[1]["measured_mse"] > rows[0]["measured_mse"]


def test_code_distance_beyond_memory(tmp_path, capsys):
    assert run(tmp_path, "code", "--set", "code.distances=[6]", "--error-json") == cli.EXIT_USAGE
    assert "distance=6" in json.loads(capsys.readouterr().err)["message"]


def test_validate_small_passes(tmp_path):
    code = run(tmp_path, "validate", "--set", "validate.trials=100", "--set", "validate.field_size=64",
               "--set", "validate.half_window=[1,1]")
    assert code == 0
    summary = json.loads((tmp_path / "validate_summary.json").read_text())
    assert summary["passed"] is True
    assert (tmp_path / "validate_coding_seed0.csv").exists()
    assert (tmp_path / "validate_fruc_seed2.json").exists()


def test_validate_gate_failure_exit_code(tmp_path, monkeypatch):
    real = cli.validate

    def broken(fn, sc, seeds, **kw):
        r = real(fn, sc, seeds=seeds, **kw)
        r.required_passes = len(seeds) + 1
        return r

    monkeypatch.setattr(cli, "validate", broken)
    code = run(tmp_path, "validate", "--set", "validate.trials=100", "--set", "validate.field_size=64",
               "--set", "validate.half_window=[0,0]")
    assert code == cli.EXIT_GATE


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mcstat", "theory", "--out-dir", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "config.theory.yaml").exists()


def test_unknown_preset_rejected():
    with pytest.raises(SystemExit):
        cli.main(["theory", "--preset", "nope"])
