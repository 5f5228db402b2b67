import json
import subprocess
import sys

import numpy as np
import pytest

from chargeamp import acoustics, cli, io
from chargeamp.dsp import LevelSweep, TimeSeries
from chargeamp.spectra import SensitivitySpectrum


def run(tmp_path, *argv, out="out"):
    d = tmp_path / out
    code = cli.main([argv[0], "--out-dir", str(d), "--quiet", *argv[1:]])
    return code, d


def test_bode_801_rows_and_plateau(tmp_path):
    code, d = run(tmp_path, "bode", "--f-min", "10", "--f-max", "1e5", "--points-per-decade", "200")
    assert code == 0
    lines = (d / "bode.csv").read_text().splitlines()
    assert lines[0] == "freq_hz,mag_v_per_c,phase_deg"
    assert len(lines) == 802
    mags = np.array([float(l.split(",")[1]) for l in lines[1:]])
    freqs = np.array([float(l.split(",")[0]) for l in lines[1:]])
    assert np.all(np.abs(mags[freqs > 3e3] / 2e13 - 1) < 0.005)
    summary = json.loads((d / "bode_summary.json").read_text())
    assert summary["midband_gain_v_per_c"] == pytest.approx(2e13, abs=0)


def test_outputs_are_byte_identical(tmp_path):
    run(tmp_path, "bode", out="a")
    run(tmp_path, "bode", out="b")
    assert (tmp_path / "a" / "bode.csv").read_bytes() == (tmp_path / "b" / "bode.csv").read_bytes()
    manifest = json.loads((tmp_path / "a" / "bode.manifest.json").read_text())
    assert manifest["command"] == "bode"
    assert set(manifest["outputs"]) == {"bode.csv", "bode_summary.json"}
    assert "timestamp" in manifest and "tool_version" in manifest


def test_bad_json_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "cfg.json"
    bad.write_text("{ r_f: 1e10 ")
    code, _ = run(tmp_path, "bode", "--config", str(bad))
    assert code == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_missing_file_and_unknown_part_exit_2(tmp_path):
    assert run(tmp_path, "bode", "--config", str(tmp_path / "nope.json"))[0] == 2
    assert run(tmp_path, "bode", "--oa1", "NOPE")[0] == 2


def test_config_file_is_recorded(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"r_f": 1e10, "c_f": 2e-12}))
    code, d = run(tmp_path, "bode", "--config", str(cfg), "--format", "json")
    assert code == 0
    doc = json.loads((d / "bode.json").read_text())
    assert doc["summary"]["midband_gain_v_per_c"] == pytest.approx(1e13, abs=0)
    manifest = json.loads((d / "bode.manifest.json").read_text())
    assert manifest["inputs"]["config"] == str(cfg)
    assert len(manifest["input_sha256"]["config"]) == 64


def test_noise_command(tmp_path):
    code, d = run(tmp_path, "noise", "--f-min", "100", "--f-max", "1e4", "--points-per-decade", "10")
    assert code == 0
    lines = (d / "noise_input.csv").read_text().splitlines()
    assert lines[0] == "freq_hz,density,unit" and lines[1].endswith("C^2/Hz")
    assert len(lines) == 22
    assert (d / "noise_terms.csv").read_text().startswith("freq_hz,johnson_c2_per_hz")


@pytest.mark.parametrize("preset, label", [("unloaded", "unloaded"), ("table", "loaded")])
def test_enc_reports_reference_rows(tmp_path, preset, label):
    code, d = run(tmp_path, "enc", "--sensor-preset", preset)
    assert code == 0
    doc = json.loads((d / "enc.json").read_text())
    assert doc["enc_c"] > 0
    rows = {r["label"]: r for r in doc["reference_measurements"]}
    assert rows[label]["matches_load"]
    assert rows["unloaded"]["enc_c"] == 30e-18 and rows["loaded"]["enc_c"] == 62e-18
    assert rows[label]["ratio"] == pytest.approx(doc["enc_c"] / rows[label]["enc_c"], abs=0)
    assert (d / "enc.csv").read_text().startswith("reference,model_enc_c,reference_enc_c,ratio,diff_db")


def test_enc_inverted_band_exits_2(tmp_path):
    assert run(tmp_path, "enc", "--f-lo", "2e4", "--f-hi", "200")[0] == 2


def _write_sensitivity(path, f_lo=20.0, f_hi=20e3):
    f = np.geomspace(f_lo, f_hi, 200)
    sens = SensitivitySpectrum(f, 1e-12 * (1 + 0.3 * np.sin(np.log(f))))
    path.write_text(io.sensitivity_csv(sens))
    return sens


def test_ein_round_trip(tmp_path):
    sens = _write_sensitivity(tmp_path / "sens.csv")
    q = acoustics.flat_field_noise(40.0, sens, np.geomspace(50, 15e3, 1500))
    (tmp_path / "noise.csv").write_text(io.noise_csv(q))
    code, d = run(tmp_path, "ein", "--noise-csv", str(tmp_path / "noise.csv"), "--sensitivity", str(tmp_path / "sens.csv"))
    assert code == 0
    levels = [float(l.split(",")[1]) for l in (d / "ein.csv").read_text().splitlines()[1:]]
    assert len(levels) == 19
    assert max(abs(x - 40) for x in levels) < 0.1


def test_ein_flat_pinna_drops_total_20db(tmp_path):
    sens = _write_sensitivity(tmp_path / "sens.csv")
    q = acoustics.flat_field_noise(40.0, sens, np.geomspace(50, 15e3, 800))
    (tmp_path / "noise.csv").write_text(io.noise_csv(q))
    (tmp_path / "pinna.csv").write_text("freq_hz,gain_db\n10,20\n100000,20\n")
    base = ["ein", "--noise-csv", str(tmp_path / "noise.csv"), "--sensitivity", str(tmp_path / "sens.csv")]
    _, a = run(tmp_path, *base, out="a")
    _, b = run(tmp_path, *base, "--pinna", str(tmp_path / "pinna.csv"), out="b")
    ta = json.loads((a / "ein_total.json").read_text())["a_weighted_db_spl"]
    tb = json.loads((b / "ein_total.json").read_text())["a_weighted_db_spl"]
    assert tb - ta == pytest.approx(-20.0, abs=0.05)


def test_ein_from_model_with_sensor_file(tmp_path):
    _write_sensitivity(tmp_path / "sens.csv")
    (tmp_path / "sensor.json").write_text(json.dumps({"sensitivity_csv": "sens.csv"}))
    code, d = run(tmp_path, "ein", "--sensor", str(tmp_path / "sensor.json"))
    assert code == 0
    assert np.isfinite(json.loads((d / "ein_total.json").read_text())["a_weighted_db_spl"])


def test_ein_coverage_error_exits_2(tmp_path, capsys):
    _write_sensitivity(tmp_path / "sens.csv", 500, 5000)
    code, _ = run(tmp_path, "ein", "--sensitivity", str(tmp_path / "sens.csv"))
    assert code == 2
    assert "cover" in capsys.readouterr().err


def test_analyze_thd(tmp_path):
    fs = 48_000.0
    t = np.arange(48_000) / fs
    x = np.sin(2 * np.pi * 1000 * t) + 1e-3 * np.sin(2 * np.pi * 2000 * t)
    (tmp_path / "ts.csv").write_text(io.timeseries_csv(TimeSeries(fs, x)))
    code, d = run(tmp_path, "analyze", "--mode", "thd", "--input", str(tmp_path / "ts.csv"), "--f0", "1000")
    assert code == 0
    value = float((d / "thd.csv").read_text().splitlines()[1].split(",")[2])
    assert value == pytest.approx(1e-3, rel=0.02, abs=0)


def test_analyze_spectrum(tmp_path):
    rng = np.random.default_rng(5)
    (tmp_path / "ts.csv").write_text(io.timeseries_csv(TimeSeries(8000.0, rng.standard_normal(1 << 15))))
    code, d = run(tmp_path, "analyze", "--mode", "spectrum", "--input", str(tmp_path / "ts.csv"))
    assert code == 0
    assert (d / "spectrum.csv").read_text().startswith("freq_hz,density_v2_per_hz")
    assert (d / "third_octave.csv").read_text().startswith("band_center_hz,band_lower_hz,band_upper_hz,rms_v")


def test_analyze_linearity(tmp_path):
    rng = np.random.default_rng(99)
    x = np.linspace(10, 100, 46)
    r = 10 ** ((x - 80 + rng.normal(0, 0.1, x.size)) / 20)
    (tmp_path / "sweep.csv").write_text(io.sweep_csv(LevelSweep(x, r)))
    code, d = run(tmp_path, "analyze", "--mode", "linearity", "--input", str(tmp_path / "sweep.csv"), "--format", "json")
    assert code == 0
    doc = json.loads((d / "linearity.json").read_text())
    assert doc["slope_db_per_db"][0] == pytest.approx(1.0, abs=0.01)


def test_analyze_cmrr_model(tmp_path):
    code, d = run(tmp_path, "analyze", "--mode", "cmrr", "--cf-mismatch", "0.01", "--f-min", "1e3", "--f-max", "1e4", "--points-per-decade", "2")
    assert code == 0
    vals = [float(l.split(",")[1]) for l in (d / "cmrr.csv").read_text().splitlines()[1:]]
    assert all(40 < v < 50 for v in vals)


def test_analyze_emi_cap(tmp_path):
    code, d = run(tmp_path, "analyze", "--mode", "emi-cap", "--v-out", "12e-6", "--v-applied", "1e-3", "--gain", "2e13")
    assert code == 0
    c = float((d / "emi_capacitance.csv").read_text().splitlines()[1].split(",")[3])
    assert c == pytest.approx(0.6e-15, rel=1e-12, abs=0)
    assert run(tmp_path, "analyze", "--mode", "emi-cap", "--v-out", "1e-6", "--v-applied", "0", "--gain", "1")[0] == 2
    assert run(tmp_path, "analyze", "--mode", "thd")[0] == 2


def test_explore_marks_front(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"axes": {"oa1": ["LT1792", "LTC6240", "LTC6081", "LTC6078"]}}))
    code, d = run(tmp_path, "explore", "--spec", str(spec))
    assert code == 0
    rows = [l.split(",") for l in (d / "explore.csv").read_text().splitlines()[1:]]
    front = {r[2] for r in rows if r[-1] == "1"}
    assert {"LTC6240", "LTC6078"} <= front


@pytest.mark.parametrize(
    "doc",
    [
        {"axes": {"r_f": []}},
        {"axes": {"r_f": [1e9] * 400, "c_f": [1e-12] * 400}},
        {"axes": {"oa1": ["NOPE"]}},
    ],
)
def test_explore_bad_specs_exit_2(tmp_path, doc, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(doc))
    assert run(tmp_path, "explore", "--spec", str(spec))[0] == 2
    if len(doc["axes"].get("c_f", [])) == 400:
        assert "160000" in capsys.readouterr().err


def test_oracle_check(tmp_path, capsys):
    code, d = run(tmp_path, "oracle-check", "--points-per-decade", "5")
    assert code == 0
    assert "max relative error" in capsys.readouterr().out
    assert (d / "oracle_check.csv").exists()


def test_usage_errors_exit_2():
    assert cli.main([]) == 2
    assert cli.main(["bode", "--format", "xml"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "chargeamp", "enc", "--quiet", "--out-dir", str(tmp_path), "--format", "json"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads((tmp_path / "enc.json").read_text())["enc_c"] > 0
