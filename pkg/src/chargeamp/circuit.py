"""Closed-form small-signal gain of the differential charge amplifier.

Op amps are ideal, so there is no upper band edge in the model.  Every
public function takes ordinary frequency in Hz.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import NumericError
from .models import AmplifierConfig, SensorModel
from .spectra import TransferFunction

CUTON_BRACKET = (1.0, 20e3)
CUTON_RTOL = 1e-6


def _omega(f):
    f = np.asarray(f, dtype=float)
    if np.any(~(f > 0)):
        raise ValueError("frequency must be > 0 Hz")
    return 2 * np.pi * f


def _scalar_or_array(x):
    return np.asarray(x).item() if np.ndim(x) == 0 else x


def charge_from_voltage(sensor: SensorModel, v_piezo):
    """Charge delivered by the open-circuit piezo voltage, q = C_piezo * v."""
    return sensor.c_piezo * v_piezo


def _gain_parts(cfg: AmplifierConfig, f):
    # scalars go through the same 1-D array arithmetic as grids so a
    # one-point bode equals overall_gain bit for bit
    w = np.atleast_1d(_omega(f))
    g_int = 2j * w * cfg.r_f / (1 + 1j * w * cfg.r_f * cfg.c_f)
    lead = (1 + 1j * w * (cfg.r_a + cfg.r_b) * cfg.c_b) / (1 + 1j * w * cfg.r_b * cfg.c_b)
    hp = 1j * w * cfg.r_o * cfg.c_o / (1 + 1j * w * cfg.r_o * cfg.c_o)
    return g_int, lead * hp


def _shaped(x, f):
    return x[0].item() if np.ndim(f) == 0 else x.reshape(np.shape(f))


def internal_gain(cfg: AmplifierConfig, f):
    """Charge-to-voltage gain at the difference-stage output (V/C)."""
    return _shaped(_gain_parts(cfg, f)[0], f)


def stage2_factor(cfg: AmplifierConfig, f):
    """Lead stage times output high-pass, i.e. G_out / G_int."""
    return _shaped(_gain_parts(cfg, f)[1], f)


def overall_gain(cfg: AmplifierConfig, f):
    """Charge-to-voltage gain at the amplifier output (V/C)."""
    g_int, s2 = _gain_parts(cfg, f)
    return _shaped(g_int * s2, f)


def midband_gain(cfg: AmplifierConfig) -> float:
    """High-frequency plateau of |G_out|: (2/C_f) * (R_a + R_b)/R_b."""
    return 2.0 / cfg.c_f * (cfg.r_a + cfg.r_b) / cfg.r_b


def dominant_pole_hz(cfg: AmplifierConfig) -> float:
    return 1.0 / (2 * math.pi * cfg.r_b * cfg.c_b)


def find_crossing(
    magnitude: Callable[[float], float],
    target: float,
    lo: float = CUTON_BRACKET[0],
    hi: float = CUTON_BRACKET[1],
    rtol: float = CUTON_RTOL,
) -> float:
    """Bisect in log-frequency for magnitude(f) == target on a rising bracket."""
    m_lo, m_hi = magnitude(lo), magnitude(hi)
    if not (m_lo < target <= m_hi):
        raise NumericError(
            f"no -3 dB crossing in [{lo:g}, {hi:g}] Hz "
            f"(|G| spans {m_lo:.4g}..{m_hi:.4g}, target {target:.4g})"
        )
    while hi / lo - 1 > rtol:
        mid = math.sqrt(lo * hi)
        if magnitude(mid) < target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def cuton_frequency(cfg: AmplifierConfig, magnitude: Callable[[float], float] | None = None) -> float:
    """Lowest frequency where |G_out| is 3 dB below the plateau.

    ``magnitude`` substitutes another |G_out(f)| (e.g. a nodal solution)
    for the closed form.
    """
    if magnitude is None:
        magnitude = lambda f: abs(overall_gain(cfg, f))
    return find_crossing(magnitude, midband_gain(cfg) / math.sqrt(2))


def log_grid(f_min: float, f_max: float, points_per_decade: int) -> np.ndarray:
    """Log-spaced grid including both ends."""
    if not (0 < f_min < f_max):
        raise ValueError("need 0 < f_min < f_max")
    if points_per_decade < 1:
        raise ValueError("points_per_decade must be >= 1")
    decades = math.log10(f_max / f_min)
    n = int(round(decades * points_per_decade)) + 1
    return np.logspace(math.log10(f_min), math.log10(f_max), max(n, 2))


def bode(cfg: AmplifierConfig, f_grid) -> TransferFunction:
    f_grid = np.atleast_1d(np.asarray(f_grid, dtype=float))
    return TransferFunction(f_grid, np.atleast_1d(overall_gain(cfg, f_grid)))
