"""CSV readers and writers for the file formats the CLI exchanges.

Numbers are written with ``repr`` so files round-trip exactly and are
byte-identical for identical inputs.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dsp import LevelSweep, TimeSeries
from .spectra import NoiseSpectrum, PinnaGainTable, SensitivitySpectrum, TransferFunction


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return repr(float(x))


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    out = [",".join(header)]
    out.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(out) + "\n"


def read_table(path: str | Path, expected: Sequence[str]) -> dict[str, list[str]]:
    """Read a headed CSV, requiring the expected columns (extra columns ignored)."""
    text = Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in expected if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}; header is {header}")
    cols = {c: [] for c in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        for c, v in zip(header, row):
            cols[c].append(v.strip())
    return cols


def _floats(path, cols, name) -> np.ndarray:
    try:
        return np.array([float(v) for v in cols[name]])
    except ValueError as exc:
        raise ValueError(f"{path}: column {name}: {exc}") from None


def transfer_csv(tf: TransferFunction) -> str:
    return format_csv(
        ("freq_hz", "mag_v_per_c", "phase_deg"), zip(tf.freqs, tf.magnitude, tf.phase_deg)
    )


def read_transfer_csv(path) -> TransferFunction:
    cols = read_table(path, ("freq_hz", "mag_v_per_c", "phase_deg"))
    f = _floats(path, cols, "freq_hz")
    mag = _floats(path, cols, "mag_v_per_c")
    ph = np.radians(_floats(path, cols, "phase_deg"))
    return TransferFunction(f, mag * np.exp(1j * ph))


def noise_csv(spec: NoiseSpectrum) -> str:
    return format_csv(("freq_hz", "density", "unit"), ((f, d, spec.unit) for f, d in zip(spec.freqs, spec.values)))


def read_noise_csv(path) -> NoiseSpectrum:
    cols = read_table(path, ("freq_hz", "density", "unit"))
    units = set(cols["unit"])
    if len(units) != 1:
        raise ValueError(f"{path}: mixed units {sorted(units)}")
    return NoiseSpectrum(_floats(path, cols, "freq_hz"), _floats(path, cols, "density"), units.pop())


def sensitivity_csv(sens: SensitivitySpectrum) -> str:
    return format_csv(("freq_hz", "coulombs_per_pascal"), zip(sens.freqs, sens.values))


def read_sensitivity_csv(path) -> SensitivitySpectrum:
    cols = read_table(path, ("freq_hz", "coulombs_per_pascal"))
    return SensitivitySpectrum(_floats(path, cols, "freq_hz"), _floats(path, cols, "coulombs_per_pascal"))


def pinna_csv(table: PinnaGainTable) -> str:
    return format_csv(("freq_hz", "gain_db"), zip(table.freqs, table.gain_db))


def read_pinna_csv(path) -> PinnaGainTable:
    cols = read_table(path, ("freq_hz", "gain_db"))
    return PinnaGainTable(_floats(path, cols, "freq_hz"), _floats(path, cols, "gain_db"))


def timeseries_csv(ts: TimeSeries) -> str:
    return f"# sample_rate_hz={_fmt(ts.sample_rate)}\n" + "".join(_fmt(x) + "\n" for x in ts.samples)


def read_timeseries_csv(path) -> TimeSeries:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: first line must be '# sample_rate_hz=<value>'")
    key, _, value = lines[0].lstrip("#").partition("=")
    if key.strip() != "sample_rate_hz":
        raise ValueError(f"{path}: first line must be '# sample_rate_hz=<value>'")
    try:
        rate = float(value)
        samples = np.array([float(x) for x in lines[1:] if x.strip()])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    return TimeSeries(rate, samples, label=Path(path).stem)


def sweep_csv(sweep: LevelSweep) -> str:
    return format_csv(("stimulus_db_spl", "response_rms_v"), zip(sweep.stimulus_db_spl, sweep.response_rms))


def read_sweep_csv(path) -> LevelSweep:
    cols = read_table(path, ("stimulus_db_spl", "response_rms_v"))
    return LevelSweep(_floats(path, cols, "stimulus_db_spl"), _floats(path, cols, "response_rms_v"))
