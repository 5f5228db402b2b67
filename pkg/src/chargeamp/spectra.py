"""Frequency-domain containers shared by the gain, noise and acoustic code."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoverageError

DENSITY_UNITS = ("A^2/Hz", "C^2/Hz", "V^2/Hz", "Pa^2/Hz")


def _check_grid(freqs: np.ndarray, positive: bool = True) -> None:
    if freqs.ndim != 1 or freqs.size == 0:
        raise ValueError("frequency grid must be a nonempty 1-D array")
    if not np.all(np.isfinite(freqs)):
        raise ValueError("frequency grid must be finite")
    if positive and np.any(freqs <= 0):
        raise ValueError("frequencies must be > 0")
    if np.any(np.diff(freqs) <= 0):
        raise ValueError("frequency grid must be strictly increasing")


@dataclass(frozen=True, eq=False)
class TransferFunction:
    freqs: np.ndarray
    values: np.ndarray  # complex V/C

    def __post_init__(self):
        object.__setattr__(self, "freqs", np.asarray(self.freqs, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))
        _check_grid(self.freqs)
        if self.values.shape != self.freqs.shape:
            raise ValueError("values and freqs must have the same shape")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.angle(self.values))


@dataclass(frozen=True, eq=False)
class NoiseSpectrum:
    """Variance density on a frequency grid, tagged with its unit."""

    freqs: np.ndarray
    values: np.ndarray
    unit: str

    def __post_init__(self):
        object.__setattr__(self, "freqs", np.asarray(self.freqs, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        # Welch estimates carry a DC bin, so zero is allowed here
        _check_grid(self.freqs, positive=False)
        if np.any(self.freqs < 0):
            raise ValueError("frequencies must be >= 0")
        if self.values.shape != self.freqs.shape:
            raise ValueError("values and freqs must have the same shape")
        if self.unit not in DENSITY_UNITS:
            raise ValueError(f"unit must be one of {DENSITY_UNITS}, got {self.unit!r}")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("variance density must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class SensitivitySpectrum:
    freqs: np.ndarray
    values: np.ndarray  # C/Pa

    def __post_init__(self):
        object.__setattr__(self, "freqs", np.asarray(self.freqs, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        _check_grid(self.freqs)
        if self.values.shape != self.freqs.shape:
            raise ValueError("values and freqs must have the same shape")
        if np.any(self.values < 0):
            raise ValueError("sensitivity must be >= 0")

    def at(self, f) -> np.ndarray:
        """Log-log interpolated sensitivity; raises CoverageError off-grid."""
        return loglog_interp(f, self.freqs, self.values, what="sensitivity")


@dataclass(frozen=True, eq=False)
class PinnaGainTable:
    freqs: np.ndarray
    gain_db: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "freqs", np.asarray(self.freqs, dtype=float))
        object.__setattr__(self, "gain_db", np.asarray(self.gain_db, dtype=float))
        _check_grid(self.freqs)
        if self.gain_db.shape != self.freqs.shape:
            raise ValueError("gain_db and freqs must have the same shape")
        if not np.all(np.isfinite(self.gain_db)):
            raise ValueError("pinna gain must be finite")

    def at(self, f) -> np.ndarray:
        """Gain in dB, linear in log-frequency between table points."""
        f = np.asarray(f, dtype=float)
        _require_coverage(f, self.freqs, "pinna gain table")
        if self.freqs.size == 1:
            return np.full_like(f, self.gain_db[0])
        return np.interp(np.log(f), np.log(self.freqs), self.gain_db)


# relative slack so grids written to CSV with finite precision still count
_EDGE_RTOL = 1e-9


def _require_coverage(f, grid, what: str) -> None:
    lo, hi = grid[0], grid[-1]
    f = np.atleast_1d(f)
    if np.any(f < lo * (1 - _EDGE_RTOL)) or np.any(f > hi * (1 + _EDGE_RTOL)):
        raise CoverageError(
            f"{what} covers {lo:g}-{hi:g} Hz but {f.min():g}-{f.max():g} Hz was requested"
        )


def loglog_interp(f, grid, values, what: str = "data") -> np.ndarray:
    """Interpolate positive data linearly in log-log coordinates."""
    f = np.asarray(f, dtype=float)
    _require_coverage(f, grid, what)
    if grid.size == 1:
        return np.full_like(f, values[0])
    fc = np.clip(f, grid[0], grid[-1])
    if np.all(values > 0):
        return np.exp(np.interp(np.log(fc), np.log(grid), np.log(values)))
    return np.interp(fc, grid, values)
