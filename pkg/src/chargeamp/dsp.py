"""Analysis of recorded signals: spectra, THD, linearity, CMRR, EMI capacitance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal

from .acoustics import Band, band_integrate, third_octave_bands
from .spectra import NoiseSpectrum, TransferFunction


@dataclass(frozen=True, eq=False)
class TimeSeries:
    sample_rate: float
    samples: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ValueError("need at least 2 samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, eq=False)
class LevelSweep:
    stimulus_db_spl: np.ndarray
    response_rms: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "stimulus_db_spl", np.asarray(self.stimulus_db_spl, dtype=float))
        object.__setattr__(self, "response_rms", np.asarray(self.response_rms, dtype=float))
        if self.stimulus_db_spl.shape != self.response_rms.shape:
            raise ValueError("stimulus and response must have the same length")
        if np.any(np.diff(self.stimulus_db_spl) <= 0):
            raise ValueError("stimulus levels must be strictly increasing")
        if np.any(self.response_rms < 0):
            raise ValueError("responses must be >= 0")


def power_spectrum(ts: TimeSeries, segment_length: int | None = None, overlap_fraction: float = 0.5) -> NoiseSpectrum:
    """One-sided Welch PSD (V^2/Hz) with a Hann window.

    The density is noise-bandwidth corrected, so summing it times the bin
    width returns the signal variance and a tone's lobe integrates to A^2/2.
    """
    n = ts.samples.size
    if segment_length is None:
        segment_length = min(n, 4096)
    if segment_length < 2 or segment_length > n:
        raise ValueError(f"segment_length must be in [2, {n}], got {segment_length}")
    if not 0 <= overlap_fraction < 1:
        raise ValueError("overlap_fraction must be in [0, 1)")
    noverlap = int(round(segment_length * overlap_fraction))
    f, pxx = signal.welch(
        ts.samples,
        fs=ts.sample_rate,
        window="hann",
        nperseg=segment_length,
        noverlap=noverlap,
        detrend=False,
        scaling="density",
        return_onesided=True,
    )
    return NoiseSpectrum(f, np.maximum(pxx, 0.0), "V^2/Hz")


def smooth_third_octave(
    spec: NoiseSpectrum,
    f_lo: float | None = None,
    f_hi: float | None = None,
    exclude_hz: Sequence[float] = (),
    exclude_width_hz: float | None = None,
) -> tuple[list[Band], np.ndarray]:
    """Third-octave band RMS values of a density.

    Bins within ``exclude_width_hz`` of any frequency in ``exclude_hz`` (e.g.
    mains lines) are dropped before integrating; interpolation bridges them.
    """
    freqs, values = spec.freqs, spec.values
    keep = freqs > 0
    if exclude_hz:
        width = exclude_width_hz
        if width is None:
            width = 1.5 * (freqs[-1] - freqs[0]) / max(len(freqs) - 1, 1)
        for fx in exclude_hz:
            keep &= np.abs(freqs - fx) > width
    freqs, values = freqs[keep], values[keep]
    if f_lo is None or f_hi is None:
        # whole bands that fit inside the grid
        f_lo = freqs[0] * 2 ** (1 / 3) if f_lo is None else f_lo
        f_hi = freqs[-1] / 2 ** (1 / 3) if f_hi is None else f_hi
    bands = third_octave_bands(f_lo, f_hi)
    return bands, band_integrate(NoiseSpectrum(freqs, values, spec.unit), bands)


def _harmonic_power(mag2: np.ndarray, target_bin: float, lobe: int = 2) -> float:
    k = int(round(target_bin))
    lo, hi = max(k - 1, 0), min(k + 1, len(mag2) - 1)
    peak = lo + int(np.argmax(mag2[lo : hi + 1]))
    a, b = max(peak - lobe, 0), min(peak + lobe, len(mag2) - 1)
    return float(np.sum(mag2[a : b + 1]))


def thd(ts: TimeSeries, f0: float, n_harmonics: int = 5) -> float:
    """Total harmonic distortion sqrt(sum_k P_k / P_1), k = 2..n_harmonics.

    Each harmonic's power is the Hann main-lobe energy around the largest
    bin within +-1 bin of k*f0, so slightly off-bin tones are tolerated.
    """
    if n_harmonics < 2:
        raise ValueError("n_harmonics must be >= 2")
    nyquist = ts.sample_rate / 2
    if not 0 < f0 < nyquist:
        raise ValueError("f0 must lie between 0 and Nyquist")
    if n_harmonics * f0 >= nyquist:
        raise ValueError(f"harmonic {n_harmonics} of {f0:g} Hz is above Nyquist ({nyquist:g} Hz)")
    if ts.duration * f0 < 10:
        raise ValueError("record must span at least 10 cycles of f0")
    x = ts.samples - np.mean(ts.samples)
    n = x.size
    mag2 = np.abs(np.fft.rfft(x * signal.windows.hann(n, sym=False))) ** 2
    df = ts.sample_rate / n
    p1 = _harmonic_power(mag2, f0 / df)
    lobe_floor = (2 * 2 + 1) * np.median(mag2[1:])
    if p1 <= 0 or p1 < 100 * lobe_floor:
        raise ValueError(f"fundamental at {f0:g} Hz not found above the noise floor")
    ph = sum(_harmonic_power(mag2, k * f0 / df) for k in range(2, n_harmonics + 1))
    return math.sqrt(ph / p1)


def linearity_fit(sweep: LevelSweep) -> dict:
    """Straight-line fit of output level (dB) against stimulus level (dB SPL)."""
    x, r = sweep.stimulus_db_spl, sweep.response_rms
    if x.size < 3:
        raise ValueError("need at least 3 sweep points")
    if np.ptp(x) == 0:
        raise ValueError("degenerate sweep: all stimulus levels equal")
    if np.any(r <= 0):
        raise ValueError("responses must be > 0 to take levels")
    y = 20 * np.log10(r)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return {
        "slope_db_per_db": float(slope),
        "intercept_db": float(intercept),
        "max_deviation_db": float(np.max(np.abs(resid))),
    }


def cmrr_db(diff_gain: TransferFunction, cm_gain: TransferFunction) -> np.ndarray:
    """20 log10 |G_diff / G_cm| at each grid point."""
    if diff_gain.freqs.shape != cm_gain.freqs.shape or not np.allclose(
        diff_gain.freqs, cm_gain.freqs, rtol=1e-12, atol=0
    ):
        raise ValueError("differential and common-mode gains must share a frequency grid")
    with np.errstate(divide="ignore"):
        return 20 * np.log10(np.abs(diff_gain.values) / np.abs(cm_gain.values))


def emi_capacitance(v_out_rms: float, v_applied_rms: float, charge_gain: float) -> float:
    """Coupling capacitance from an applied potential: v_out / (gain * v_applied)."""
    if v_out_rms < 0:
        raise ValueError("v_out_rms must be >= 0")
    if not v_applied_rms > 0:
        raise ValueError("v_applied_rms must be > 0")
    if not charge_gain > 0:
        raise ValueError("charge_gain must be > 0")
    return v_out_rms / (charge_gain * v_applied_rms)
