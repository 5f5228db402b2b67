"""Acoustic figures: third-octave bands, A-weighting, EIN and pinna gain.

Third-octave bands are base-2 (edge ratio 2**(1/3)) anchored at 1 kHz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError
from .spectra import NoiseSpectrum, PinnaGainTable, SensitivitySpectrum, _require_coverage

P_REF = 20e-6
BAND_ANCHOR = 1000.0
HALF_BAND = 2 ** (1 / 6)
BANDWIDTH_FACTOR = HALF_BAND - 1 / HALF_BAND  # ~0.23156


@dataclass(frozen=True)
class Band:
    center: float
    lower: float
    upper: float

    @property
    def bandwidth(self) -> float:
        return self.upper - self.lower


def band_for_index(k: int) -> Band:
    fc = BAND_ANCHOR * 2 ** (k / 3)
    return Band(fc, fc / HALF_BAND, fc * HALF_BAND)


def _band_index(f: float) -> int:
    # half-open bands [lower, upper); a tiny slack keeps exact edges stable
    x = 3 * math.log2(f / BAND_ANCHOR) + 0.5
    return math.floor(x + 1e-9)


def third_octave_bands(f_lo: float, f_hi: float) -> list[Band]:
    """The contiguous bands whose union covers [f_lo, f_hi]."""
    if not (0 < f_lo < f_hi):
        raise ValueError(f"need 0 < f_lo < f_hi, got {f_lo!r}, {f_hi!r}")
    k_lo = _band_index(f_lo)
    # a range ending exactly on an edge does not pull in the next band
    k_hi = math.ceil(3 * math.log2(f_hi / BAND_ANCHOR) - 0.5 - 1e-9)
    return [band_for_index(k) for k in range(k_lo, max(k_lo, k_hi) + 1)]


def _segment_integral(f1, f2, d1, d2):
    """Integral of a power law through (f1, d1), (f2, d2); linear if either is 0."""
    if d1 <= 0 or d2 <= 0:
        return 0.5 * (d1 + d2) * (f2 - f1)
    r = f2 / f1
    a = math.log(d2 / d1) / math.log(r)
    if abs(a + 1) < 1e-12:
        return d1 * f1 * math.log(r)
    return d1 * f1 * (r ** (a + 1) - 1) / (a + 1)


def integrate_density(freqs, values, f_lo: float, f_hi: float) -> float:
    """Integral of a sampled density over [f_lo, f_hi], log-log interpolated."""
    freqs = np.asarray(freqs, dtype=float)
    values = np.asarray(values, dtype=float)
    _require_coverage(np.array([f_lo, f_hi]), freqs, "density grid")
    f_lo = max(f_lo, freqs[0])
    f_hi = min(f_hi, freqs[-1])
    if f_hi <= f_lo:
        return 0.0
    inside = (freqs > f_lo) & (freqs < f_hi)
    knots = np.concatenate(([f_lo], freqs[inside], [f_hi]))
    vals = np.concatenate(([_interp_point(freqs, values, f_lo)], values[inside], [_interp_point(freqs, values, f_hi)]))
    return float(sum(_segment_integral(knots[i], knots[i + 1], vals[i], vals[i + 1]) for i in range(len(knots) - 1)))


def _interp_point(freqs, values, f):
    i = np.searchsorted(freqs, f)
    if i < len(freqs) and freqs[i] == f:
        return values[i]
    i = min(max(i, 1), len(freqs) - 1)
    f1, f2, d1, d2 = freqs[i - 1], freqs[i], values[i - 1], values[i]
    if d1 <= 0 or d2 <= 0 or f1 <= 0:
        return d1 + (d2 - d1) * (f - f1) / (f2 - f1)
    t = math.log(f / f1) / math.log(f2 / f1)
    return math.exp(math.log(d1) + t * math.log(d2 / d1))


def band_integrate(density: NoiseSpectrum, bands: list[Band]) -> np.ndarray:
    """RMS value per band: sqrt of the density integrated across the band."""
    freqs, values = density.freqs, density.values
    if freqs[0] <= 0:
        keep = freqs > 0
        freqs, values = freqs[keep], values[keep]
    return np.array([math.sqrt(integrate_density(freqs, values, b.lower, b.upper)) for b in bands])


def _ra(f):
    f2 = np.asarray(f, dtype=float) ** 2
    return 12194.0**2 * f2**2 / (
        (f2 + 20.6**2) * np.sqrt((f2 + 107.7**2) * (f2 + 737.9**2)) * (f2 + 12194.0**2)
    )


def a_weight_db(f):
    """IEC 61672 A-weighting in dB, normalized to exactly 0 dB at 1 kHz."""
    f = np.asarray(f, dtype=float)
    if np.any(~(f > 0)):
        raise ValueError("frequency must be > 0 Hz")
    a = 20 * np.log10(_ra(f) / _ra(1000.0))
    return a.item() if a.ndim == 0 else a


def ein_spectrum(noise: NoiseSpectrum, sens: SensitivitySpectrum, bands: list[Band]) -> np.ndarray:
    """Equivalent input noise per band in dB SPL.

    Band RMS charge divided by the sensitivity at the band center.
    """
    if noise.unit != "C^2/Hz":
        raise ValueError(f"EIN needs a charge density (C^2/Hz), got {noise.unit}")
    centers = np.array([b.center for b in bands])
    try:
        s = sens.at(centers)
    except CoverageError as exc:
        raise CoverageError(f"sensitivity does not cover the EIN bands: {exc}") from None
    if np.any(s <= 0):
        raise ValueError("sensitivity must be > 0 at every band center")
    q_rms = band_integrate(noise, bands)
    with np.errstate(divide="ignore"):
        return 20 * np.log10(q_rms / s / P_REF)


def ein_aweighted_total(ein_db, centers) -> float:
    """A-weighted power sum of per-band EIN levels (dB SPL)."""
    ein_db = np.asarray(ein_db, dtype=float)
    if ein_db.size == 0:
        raise ValueError("need at least one band")
    weighted = ein_db + a_weight_db(np.asarray(centers, dtype=float))
    return float(10 * np.log10(np.sum(10 ** (weighted / 10))))


def apply_pinna(sens: SensitivitySpectrum, pinna: PinnaGainTable) -> SensitivitySpectrum:
    """Sensitivity re free-field pressure, given the ear-canal sensitivity."""
    gain = pinna.at(sens.freqs)
    return SensitivitySpectrum(sens.freqs, sens.values * 10 ** (gain / 20))


def flat_field_noise(level_db_spl: float, sens: SensitivitySpectrum, freqs) -> NoiseSpectrum:
    """Charge density a sensor produces in a field of equal level per third-octave.

    The pressure density is c/f with c chosen so every base-2 third-octave
    band integrates to exactly ``level_db_spl``.
    """
    freqs = np.asarray(freqs, dtype=float)
    p2_band = (P_REF * 10 ** (level_db_spl / 20)) ** 2
    c = p2_band / math.log(2 ** (1 / 3))
    return NoiseSpectrum(freqs, c / freqs * sens.at(freqs) ** 2, "C^2/Hz")
