"""Command-line front end.

Every command writes its results into ``--out-dir`` together with a
``<command>.manifest.json`` that records the inputs (with hashes), the tool
version, a timestamp and the sha256 of every output it wrote.  Result files
themselves carry no timestamps, so identical inputs give identical bytes.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, acoustics, circuit, dsp, explorer, mna, noise
from . import io as cio
from .errors import NumericError
from .models import AmplifierConfig, SensorModel, load_config, load_registry, load_sensor, resolve_opamp

EXIT_USAGE = 2
EXIT_NUMERIC = 3

# measured ENC over 200 Hz - 20 kHz for the built board, used as comparison rows
REFERENCE_ENC = (
    {"label": "unloaded", "enc_c": 30e-18, "electrons": 185},
    {"label": "loaded", "enc_c": 62e-18, "electrons": 385},
)
ENC_TOLERANCE_DB = 6.0
ORACLE_GAIN_RTOL = 1e-9
ORACLE_NOISE_RTOL = 1e-2


class UsageError(ValueError):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Collects outputs of one command and writes its manifest."""

    def __init__(self, args):
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, Path] = {}
        self.outputs: dict[str, str] = {}

    def input(self, role: str, path) -> Path:
        if path is None:
            return None
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"{role}: no such file {p}")
        self.inputs[role] = p
        return p

    def write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text)
        self.outputs[name] = hashlib.sha256(text.encode()).hexdigest()
        self.say(f"wrote {path}")
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def say(self, msg: str) -> None:
        if not self.args.quiet:
            print(msg)

    def finish(self) -> None:
        manifest = {
            "command": self.args.command,
            "argv": sys.argv[1:],
            "inputs": {role: str(p) for role, p in self.inputs.items()},
            "input_sha256": {role: _sha256(p) for role, p in self.inputs.items()},
            "tool_version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "outputs": self.outputs,
        }
        path = self.out_dir / f"{self.args.command}.manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --- shared loading -----------------------------------------------------------


def _registry(run: Run):
    return load_registry(run.input("registry", run.args.registry))


def _config(run: Run, registry) -> AmplifierConfig:
    path = run.input("config", run.args.config)
    cfg = load_config(path, registry) if path else AmplifierConfig()
    changes = {}
    if getattr(run.args, "oa1", None):
        changes["oa1_ref"] = run.args.oa1
    if getattr(run.args, "oa2", None):
        changes["oa2_ref"] = run.args.oa2
    cfg = cfg.with_(**changes)
    resolve_opamp(registry, cfg.oa1_ref)
    resolve_opamp(registry, cfg.oa2_ref)
    return cfg


def _sensor(run: Run) -> SensorModel:
    if run.args.sensor:
        return load_sensor(run.input("sensor", run.args.sensor))
    if run.args.sensor_preset == "unloaded":
        return SensorModel.unloaded()
    return SensorModel()


def _grid(args) -> np.ndarray:
    return circuit.log_grid(args.f_min, args.f_max, args.points_per_decade)


def _band(args) -> tuple[float, float]:
    if not 0 < args.f_lo < args.f_hi:
        raise UsageError(f"band must satisfy 0 < f_lo < f_hi, got {args.f_lo:g}..{args.f_hi:g}")
    return args.f_lo, args.f_hi


def _plot(run: Run, name: str, x, ys: dict, ylabel: str, logy: bool = True) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise UsageError("--plot needs matplotlib (pip install artifact[plot])") from None
    matplotlib.rcParams["svg.hashsalt"] = "chargeamp"
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, y in ys.items():
        ax.plot(x, y, label=label)
    ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    if len(ys) > 1:
        ax.legend()
    path = run.out_dir / name
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    run.outputs[name] = _sha256(path)
    run.say(f"wrote {path}")


# --- commands -----------------------------------------------------------------


def cmd_bode(run: Run) -> None:
    registry = _registry(run)
    cfg = _config(run, registry)
    tf = circuit.bode(cfg, _grid(run.args))
    summary = {
        "midband_gain_v_per_c": circuit.midband_gain(cfg),
        "dominant_pole_hz": circuit.dominant_pole_hz(cfg),
        "cuton_hz": circuit.cuton_frequency(cfg),
        "upper_cutoff_hz": None,  # op-amp roll-off is not modeled
    }
    if run.args.format == "csv":
        run.write("bode.csv", cio.transfer_csv(tf))
        run.write_json("bode_summary.json", summary)
    else:
        run.write_json(
            "bode.json",
            {
                "freq_hz": tf.freqs.tolist(),
                "mag_v_per_c": tf.magnitude.tolist(),
                "phase_deg": tf.phase_deg.tolist(),
                "summary": summary,
            },
        )
    if run.args.plot:
        _plot(run, "bode.svg", tf.freqs, {"|G_out|": tf.magnitude}, "gain (V/C)")
    run.say(
        f"mid-band gain {summary['midband_gain_v_per_c'] * 1e-12:.4g} V/pC, "
        f"-3 dB cut-on {summary['cuton_hz']:.4g} Hz"
    )


def _noise_setup(run: Run):
    registry = _registry(run)
    cfg = _config(run, registry)
    sensor = _sensor(run)
    oa1 = resolve_opamp(registry, cfg.oa1_ref)
    oa2 = resolve_opamp(registry, cfg.oa2_ref)
    return cfg, sensor, oa1, oa2


def cmd_noise(run: Run) -> None:
    cfg, sensor, oa1, oa2 = _noise_setup(run)
    grid = _grid(run.args)
    inc = run.args.include_c_in
    q_in = noise.input_noise_spectrum(cfg, sensor, oa1, oa2, grid, inc)
    v_out = noise.output_noise_spectrum(cfg, sensor, oa1, oa2, grid, inc)
    terms = noise.charge_noise_terms(cfg, sensor, oa1, oa2, grid, inc)
    if run.args.format == "csv":
        run.write("noise_input.csv", cio.noise_csv(q_in))
        run.write("noise_output.csv", cio.noise_csv(v_out))
        header = ("freq_hz",) + tuple(f"{t}_c2_per_hz" for t in noise.TERMS)
        run.write("noise_terms.csv", cio.format_csv(header, zip(grid, *(terms[t] for t in noise.TERMS))))
    else:
        run.write_json(
            "noise.json",
            {
                "freq_hz": grid.tolist(),
                "input_density_c2_per_hz": q_in.values.tolist(),
                "output_density_v2_per_hz": v_out.values.tolist(),
                "terms_c2_per_hz": {t: np.asarray(terms[t]).tolist() for t in noise.TERMS},
            },
        )
    if run.args.plot:
        _plot(run, "noise.svg", grid, {"ENC density": np.sqrt(q_in.values)}, "C/sqrt(Hz)")


def cmd_enc(run: Run) -> None:
    cfg, sensor, oa1, oa2 = _noise_setup(run)
    f_lo, f_hi = _band(run.args)
    enc = noise.enc_over_band(cfg, sensor, oa1, oa2, f_lo, f_hi, run.args.include_c_in)
    unloaded = sensor.c_piezo == 0 and sensor.c_par == 0 and sensor.c_gnd == 0 and math.isinf(sensor.r_par)
    refs = []
    for ref in REFERENCE_ENC:
        diff_db = 20 * math.log10(enc / ref["enc_c"])
        refs.append(
            {
                **ref,
                "ratio": enc / ref["enc_c"],
                "diff_db": diff_db,
                "within_tolerance": abs(diff_db) <= ENC_TOLERANCE_DB,
                "matches_load": (ref["label"] == "unloaded") == unloaded,
            }
        )
    result = {
        "band_hz": [f_lo, f_hi],
        "enc_c": enc,
        "enc_electrons": enc / noise.ELEMENTARY_CHARGE,
        "oa1": cfg.oa1_ref,
        "oa2": cfg.oa2_ref,
        "include_c_in": run.args.include_c_in,
        "reference_measurements": refs,
        "tolerance_db": ENC_TOLERANCE_DB,
    }
    run.write_json("enc.json", result)
    if run.args.format == "csv":
        rows = [(r["label"], enc, r["enc_c"], r["ratio"], r["diff_db"]) for r in refs]
        run.write(
            "enc.csv",
            cio.format_csv(("reference", "model_enc_c", "reference_enc_c", "ratio", "diff_db"), rows),
        )
    run.say(f"ENC {enc * 1e18:.3f} aC ({enc / noise.ELEMENTARY_CHARGE:.0f} e-) over {f_lo:g}-{f_hi:g} Hz")


def cmd_ein(run: Run) -> None:
    f_lo, f_hi = _band(run.args)
    bands = acoustics.third_octave_bands(f_lo, f_hi)
    sensor = None
    if run.args.sensitivity:
        sens = cio.read_sensitivity_csv(run.input("sensitivity", run.args.sensitivity))
    else:
        sensor = _sensor(run)
        if sensor.sensitivity is None:
            raise UsageError("need --sensitivity or a sensor file with sensitivity_csv")
        sens = sensor.sensitivity
    if run.args.pinna:
        sens = acoustics.apply_pinna(sens, cio.read_pinna_csv(run.input("pinna", run.args.pinna)))
    if run.args.noise_csv:
        q = cio.read_noise_csv(run.input("noise", run.args.noise_csv))
    else:
        registry = _registry(run)
        cfg = _config(run, registry)
        sensor = sensor or _sensor(run)
        grid = np.geomspace(bands[0].lower, bands[-1].upper, 64 * len(bands) + 1)
        q = noise.input_noise_spectrum(
            cfg,
            sensor,
            resolve_opamp(registry, cfg.oa1_ref),
            resolve_opamp(registry, cfg.oa2_ref),
            grid,
            run.args.include_c_in,
        )
    levels = acoustics.ein_spectrum(q, sens, bands)
    centers = np.array([b.center for b in bands])
    weights = acoustics.a_weight_db(centers)
    total_a = acoustics.ein_aweighted_total(levels, centers)
    total_flat = float(10 * np.log10(np.sum(10 ** (levels / 10))))
    if run.args.format == "csv":
        run.write("ein.csv", cio.format_csv(("band_center_hz", "ein_db_spl", "a_weight_db"), zip(centers, levels, weights)))
        run.write_json("ein_total.json", {"a_weighted_db_spl": total_a, "unweighted_db_spl": total_flat, "band_hz": [f_lo, f_hi]})
    else:
        run.write_json(
            "ein.json",
            {
                "band_center_hz": centers.tolist(),
                "ein_db_spl": levels.tolist(),
                "a_weight_db": weights.tolist(),
                "a_weighted_db_spl": total_a,
                "unweighted_db_spl": total_flat,
            },
        )
    run.say(f"A-weighted EIN {total_a:.2f} dB SPL over {f_lo:g}-{f_hi:g} Hz")


def _emit(run: Run, stem: str, header, rows, extra: dict | None = None) -> None:
    rows = list(rows)
    if run.args.format == "csv":
        run.write(f"{stem}.csv", cio.format_csv(header, rows))
    else:
        doc = {h: [r[i] if isinstance(r[i], str) else float(r[i]) for r in rows] for i, h in enumerate(header)}
        doc.update(extra or {})
        run.write_json(f"{stem}.json", doc)


def cmd_analyze(run: Run) -> None:
    a = run.args
    mode = a.mode
    if mode in ("thd", "spectrum", "linearity") and not a.input:
        raise UsageError(f"--mode {mode} needs --input")
    if mode == "thd":
        if a.f0 is None:
            raise UsageError("--mode thd needs --f0")
        ts = cio.read_timeseries_csv(run.input("input", a.input))
        value = dsp.thd(ts, a.f0, a.harmonics)
        _emit(run, "thd", ("f0_hz", "n_harmonics", "thd_fraction"), [(a.f0, a.harmonics, value)])
        run.say(f"THD {value:.6g} ({100 * value:.4g} %)")
    elif mode == "spectrum":
        ts = cio.read_timeseries_csv(run.input("input", a.input))
        spec = dsp.power_spectrum(ts, a.segment_length, a.overlap)
        bands, rms = dsp.smooth_third_octave(spec, exclude_hz=a.exclude_hz or ())
        _emit(run, "spectrum", ("freq_hz", "density_v2_per_hz"), zip(spec.freqs, spec.values))
        _emit(
            run,
            "third_octave",
            ("band_center_hz", "band_lower_hz", "band_upper_hz", "rms_v"),
            ((b.center, b.lower, b.upper, r) for b, r in zip(bands, rms)),
        )
    elif mode == "linearity":
        fit = dsp.linearity_fit(cio.read_sweep_csv(run.input("input", a.input)))
        _emit(run, "linearity", tuple(fit), [tuple(fit.values())])
        run.say(f"slope {fit['slope_db_per_db']:.4f} dB/dB, max deviation {fit['max_deviation_db']:.3f} dB")
    elif mode == "cmrr":
        if a.diff and a.cm:
            g_d = cio.read_transfer_csv(run.input("diff", a.diff))
            g_c = cio.read_transfer_csv(run.input("cm", a.cm))
        else:
            registry = _registry(run)
            cfg = _config(run, registry)
            sensor = _sensor(run)
            grid = _grid(a)
            g_d = mna.oracle_transfer(cfg, sensor, grid, "diff", feedback_mismatch=a.cf_mismatch)
            g_c = mna.oracle_transfer(cfg, sensor, grid, "cm", feedback_mismatch=a.cf_mismatch)
        values = dsp.cmrr_db(g_d, g_c)
        _emit(run, "cmrr", ("freq_hz", "cmrr_db"), zip(g_d.freqs, values))
    elif mode == "emi-cap":
        if a.v_out is None or a.v_applied is None:
            raise UsageError("--mode emi-cap needs --v-out and --v-applied")
        gain = a.gain
        if gain is None:
            registry = _registry(run)
            gain = abs(circuit.overall_gain(_config(run, registry), a.freq))
        c = dsp.emi_capacitance(a.v_out, a.v_applied, gain)
        _emit(
            run,
            "emi_capacitance",
            ("v_out_rms_v", "v_applied_rms_v", "charge_gain_v_per_c", "capacitance_f"),
            [(a.v_out, a.v_applied, gain, c)],
        )
        run.say(f"EMI capacitance {c * 1e15:.4g} fF")


def cmd_explore(run: Run) -> None:
    registry = _registry(run)
    spec = explorer.load_sweep_spec(run.input("spec", run.args.spec), registry)
    points = explorer.sweep(spec, registry, run.args.include_c_in, run.args.workers)
    front = explorer.pareto_front(points)
    if run.args.format == "csv":
        run.write("explore.csv", explorer.results_csv(points, front))
    else:
        on_front = set(front)
        run.write_json(
            "explore.json",
            [
                {
                    "r_f_ohm": p.cfg.r_f,
                    "c_f_f": p.cfg.c_f,
                    "oa1": p.oa1,
                    "oa2": p.oa2,
                    "enc_c": p.enc_c,
                    "midband_gain_v_per_c": p.midband_gain,
                    "cuton_hz": p.cuton_hz,
                    "power_w": p.power_w,
                    "pareto": p in on_front,
                }
                for p in points
            ],
        )
    run.say(f"{len(points)} designs, {len(front)} on the ENC/power front")


def cmd_oracle_check(run: Run) -> None:
    registry = _registry(run)
    cfg = _config(run, registry)
    sensor = _sensor(run)
    oa1 = resolve_opamp(registry, cfg.oa1_ref)
    oa2 = resolve_opamp(registry, cfg.oa2_ref)
    grid = _grid(run.args)
    inc = run.args.include_c_in
    net = mna.build_chain_netlist(cfg, sensor, oa1=oa1, include_c_in=inc)
    rows = []
    for f in grid:
        g_cf = circuit.overall_gain(cfg, f)
        g_or = mna.solve_ac(net, f, mna.charge_drive(net, 1.0, f))["out"]
        n_cf = noise.input_charge_noise_density(cfg, sensor, oa1, oa2, f, inc)
        n_or = mna.noise_by_superposition(net, mna.chain_noise_sources(net, cfg, sensor, oa1, oa2, f), f)
        rows.append((f, abs(g_cf - g_or) / abs(g_cf), abs(n_cf - n_or) / n_cf))
    gain_err = max(r[1] for r in rows)
    noise_err = max(r[2] for r in rows)
    _emit(
        run,
        "oracle_check",
        ("freq_hz", "gain_rel_err", "noise_rel_err"),
        rows,
        {"max_gain_rel_err": gain_err, "max_noise_rel_err": noise_err},
    )
    print(f"max relative error: gain {gain_err:.3e}, noise {noise_err:.3e}")
    if gain_err >= ORACLE_GAIN_RTOL or noise_err >= ORACLE_NOISE_RTOL:
        raise NumericError(
            f"closed form and nodal solution disagree (gain {gain_err:.3e}, noise {noise_err:.3e})"
        )


# --- parser -------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=".", help="directory for result files (default: .)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--registry", help="op-amp registry JSON (default: bundled)")


def _amp_args(p, sensor: bool = True) -> None:
    p.add_argument("--config", help="amplifier config JSON (default: built-in component values)")
    p.add_argument("--oa1", help="first-stage op amp (overrides config)")
    p.add_argument("--oa2", help="difference-stage op amp (overrides config)")
    if sensor:
        p.add_argument("--sensor", help="sensor JSON")
        p.add_argument("--sensor-preset", choices=("table", "unloaded"), default="table")
        p.add_argument("--include-c-in", action="store_true", help="add op-amp input capacitance to ground")


def _grid_args(p, f_min=10.0, f_max=1e5, ppd=200) -> None:
    p.add_argument("--f-min", type=float, default=f_min)
    p.add_argument("--f-max", type=float, default=f_max)
    p.add_argument("--points-per-decade", type=int, default=ppd)


def _band_args(p, f_lo, f_hi) -> None:
    p.add_argument("--f-lo", type=float, default=f_lo)
    p.add_argument("--f-hi", type=float, default=f_hi)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chargeamp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bode", help="tabulate the overall charge gain")
    _common(p)
    _amp_args(p, sensor=False)
    _grid_args(p)
    p.add_argument("--plot", action="store_true", help="also write an SVG plot")
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("noise", help="input- and output-referred noise densities")
    _common(p)
    _amp_args(p)
    _grid_args(p, 10.0, 1e5, 50)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("enc", help="equivalent noise charge over a band")
    _common(p)
    _amp_args(p)
    _band_args(p, 200.0, 20e3)
    p.set_defaults(func=cmd_enc)

    p = sub.add_parser("ein", help="third-octave equivalent input noise in dB SPL")
    _common(p)
    _amp_args(p)
    _band_args(p, 100.0, 7e3)
    p.add_argument("--noise-csv", help="measured charge density CSV (freq_hz,density,unit)")
    p.add_argument("--sensitivity", help="sensitivity CSV (freq_hz,coulombs_per_pascal)")
    p.add_argument("--pinna", help="pinna gain CSV (freq_hz,gain_db)")
    p.set_defaults(func=cmd_ein)

    p = sub.add_parser("analyze", help="analyze recorded data")
    _common(p)
    _amp_args(p)
    _grid_args(p, 100.0, 20e3, 20)
    p.add_argument("--mode", required=True, choices=("thd", "spectrum", "linearity", "cmrr", "emi-cap"))
    p.add_argument("--input", help="time-series CSV (thd, spectrum) or level-sweep CSV (linearity)")
    p.add_argument("--f0", type=float, help="fundamental (thd)")
    p.add_argument("--harmonics", type=int, default=5)
    p.add_argument("--segment-length", type=int)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--exclude-hz", type=float, nargs="*", help="spectral lines to drop before smoothing")
    p.add_argument("--diff", help="differential transfer CSV (cmrr)")
    p.add_argument("--cm", help="common-mode transfer CSV (cmrr)")
    p.add_argument("--cf-mismatch", type=float, default=0.0, help="relative C_f mismatch for modeled cmrr")
    p.add_argument("--v-out", type=float)
    p.add_argument("--v-applied", type=float)
    p.add_argument("--gain", type=float, help="charge gain V/C (emi-cap); default |G_out| at --freq")
    p.add_argument("--freq", type=float, default=1e3)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("explore", help="component sweep with ENC/power Pareto front")
    _common(p)
    p.add_argument("--spec", required=True, help="sweep spec JSON")
    p.add_argument("--include-c-in", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("oracle-check", help="closed form vs nodal solution, max relative error")
    _common(p)
    _amp_args(p)
    _grid_args(p, 10.0, 1e5, 50)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        run = Run(args)
        args.func(run)
        run.finish()
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
