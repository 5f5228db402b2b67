"""Input-referred noise budget of the sensor + charge amplifier chain.

Four independent contributions are referred to the input as current
variance densities (A^2/Hz) and summed; dividing by w^2 gives the charge
variance density (C^2/Hz) whose square root is the ENC density:

* Johnson noise of the two feedback resistors and the sensor leakage,
* first-stage op-amp voltage noise, lifted by the input/feedback impedances,
* first-stage op-amp current noise (common mode rejected, hence /2),
* difference-stage op-amp voltage noise.

``include_c_in`` adds each first-stage op amp's input capacitance as a
capacitor from its input node to ground; the reference behavior leaves it out.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .circuit import _omega, _scalar_or_array, internal_gain, overall_gain
from .models import K_B, AmplifierConfig, OpAmpModel, SensorModel
from .spectra import NoiseSpectrum

ELEMENTARY_CHARGE = 1.602176634e-19
TERMS = ("johnson", "oa1_voltage", "oa1_current", "oa2_voltage")


def _ground_capacitance(sensor: SensorModel, oa1: OpAmpModel | None, include_c_in: bool) -> float:
    c = sensor.c_gnd
    if include_c_in and oa1 is not None:
        c += oa1.c_in
    return c


def diff_admittance(sensor: SensorModel, f, c_ground_extra: float = 0.0):
    """Admittance seen differentially between the two input nodes (S)."""
    w = _omega(f)
    c = sensor.c_piezo + sensor.c_par + (sensor.c_gnd + c_ground_extra) / 2
    return sensor.g_par + 1j * w * c


def z_diff(sensor: SensorModel, cfg_unused, f):
    """Leakage resistance in parallel with the differential input capacitance (Ohm).

    Returns complex infinity when the sensor presents neither.
    """
    y = np.asarray(diff_admittance(sensor, f))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(y == 0, complex(np.inf), 1 / np.where(y == 0, 1, y))
    return _scalar_or_array(z)


def z_feedback(cfg: AmplifierConfig, f):
    w = _omega(f)
    return _scalar_or_array(cfg.r_f / (1 + 1j * w * cfg.r_f * cfg.c_f))


def johnson_current_density(cfg: AmplifierConfig, sensor: SensorModel) -> float:
    """4kT over (2 R_f) || R_par, in A^2/Hz (white)."""
    g = 1 / (2 * cfg.r_f) + sensor.g_par
    return 4 * K_B * cfg.temperature * g


def oa1_voltage_noise_density(
    cfg: AmplifierConfig,
    sensor: SensorModel,
    oa1: OpAmpModel,
    f,
    include_c_in: bool = False,
):
    """First-stage voltage noise referred to the input current (A^2/Hz).

    Evaluated as w^2 |(Z_diff + 2 Z_f) / (G_int Z_diff)|^2 * 2 v^2, written in
    admittance form so an open input (Z_diff -> inf) needs no special case.
    """
    w = _omega(f)
    y_d = diff_admittance(sensor, f, oa1.c_in if include_c_in else 0.0)
    lift = (1 + 2 * np.asarray(z_feedback(cfg, f)) * y_d) / np.asarray(internal_gain(cfg, f))
    return _scalar_or_array(w**2 * np.abs(lift) ** 2 * 2 * oa1.voltage_density(f))


def oa1_current_noise_density(oa1: OpAmpModel, f):
    """Differential-pair current noise, half the per-input density (A^2/Hz)."""
    _omega(f)
    return _scalar_or_array(np.asarray(oa1.current_density(np.asarray(f, dtype=float))) / 2)


def oa2_noise_density(cfg: AmplifierConfig, oa2: OpAmpModel, f):
    """Difference-stage voltage noise referred to the input current (A^2/Hz)."""
    w = _omega(f)
    return _scalar_or_array(oa2.voltage_density(f) * (1 / cfg.r_f**2 + (w * cfg.c_f) ** 2))


def oa2_noise_density_via_gain(cfg: AmplifierConfig, oa2: OpAmpModel, f):
    """Same quantity as :func:`oa2_noise_density`, as 4 w^2 v^2 / |G_int|^2."""
    w = _omega(f)
    return _scalar_or_array(4 * w**2 * oa2.voltage_density(f) / np.abs(internal_gain(cfg, f)) ** 2)


def current_noise_terms(cfg, sensor, oa1, oa2, f, include_c_in: bool = False) -> dict:
    """Each input-referred current variance density (A^2/Hz), keyed by TERMS."""
    f_arr = np.asarray(f, dtype=float)
    _omega(f_arr)
    return {
        "johnson": johnson_current_density(cfg, sensor) + 0.0 * f_arr,
        "oa1_voltage": np.asarray(oa1_voltage_noise_density(cfg, sensor, oa1, f_arr, include_c_in)),
        "oa1_current": np.asarray(oa1_current_noise_density(oa1, f_arr)),
        "oa2_voltage": np.asarray(oa2_noise_density(cfg, oa2, f_arr)),
    }


def charge_noise_terms(cfg, sensor, oa1, oa2, f, include_c_in: bool = False) -> dict:
    """Per-source charge variance densities (C^2/Hz)."""
    w2 = _omega(f) ** 2
    return {
        k: _scalar_or_array(v / w2)
        for k, v in current_noise_terms(cfg, sensor, oa1, oa2, f, include_c_in).items()
    }


def input_charge_noise_density(cfg, sensor, oa1, oa2, f, include_c_in: bool = False):
    """Total input-referred charge variance density (C^2/Hz)."""
    w2 = _omega(f) ** 2
    terms = current_noise_terms(cfg, sensor, oa1, oa2, f, include_c_in)
    return _scalar_or_array(sum(terms.values()) / w2)


def total_capacitance(cfg, sensor, oa1: OpAmpModel | None = None, include_c_in: bool = False) -> float:
    """Capacitance multiplying the first-stage voltage noise."""
    c_ground = _ground_capacitance(sensor, oa1, include_c_in)
    return sensor.c_piezo + sensor.c_par + cfg.c_f / 2 + c_ground / 2


def input_charge_noise_collected(cfg, sensor, oa1, oa2, f, include_c_in: bool = False):
    """Total charge variance density from the collected closed form.

    White part 2 v1^2 C_tot^2 + q^2/2 + v2^2 C_f^2 plus a 1/w^2 part made of
    Johnson, iota^2/2, 2 v1^2 G^2 and v2^2/R_f^2, with G = 1/((2R_f)||R_par).
    Kept separate from :func:`input_charge_noise_density` as a second route.
    """
    w = _omega(f)
    f = np.asarray(f, dtype=float)
    v1 = oa1.voltage_density(f)
    v2 = oa2.voltage_density(f)
    g = 1 / (2 * cfg.r_f) + sensor.g_par
    c_tot = total_capacitance(cfg, sensor, oa1, include_c_in)
    white = 2 * v1 * c_tot**2 + oa1.q_slope**2 / 2 + v2 * cfg.c_f**2
    low = 4 * K_B * cfg.temperature * g + oa1.i_white**2 / 2 + 2 * v1 * g**2 + v2 / cfg.r_f**2
    return _scalar_or_array(white + low / w**2)


def enc_over_band(
    cfg, sensor, oa1, oa2, f_lo: float, f_hi: float, include_c_in: bool = False, rtol: float = 1e-6
) -> float:
    """Equivalent noise charge (C rms) over [f_lo, f_hi].

    Integrates on a log-frequency substrate: int q2(f) df = int q2(e^u) e^u du.
    """
    if not (f_lo > 0):
        raise ValueError("f_lo must be > 0")
    if f_hi < f_lo:
        raise ValueError(f"inverted band: f_lo={f_lo:g} > f_hi={f_hi:g}")
    if f_hi == f_lo:
        return 0.0

    def integrand(u):
        f = math.exp(u)
        return input_charge_noise_density(cfg, sensor, oa1, oa2, f, include_c_in) * f

    total, _ = integrate.quad(
        integrand, math.log(f_lo), math.log(f_hi), epsrel=rtol, epsabs=0.0, limit=200
    )
    return math.sqrt(total)


def input_noise_spectrum(cfg, sensor, oa1, oa2, grid, include_c_in: bool = False) -> NoiseSpectrum:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    values = np.atleast_1d(input_charge_noise_density(cfg, sensor, oa1, oa2, grid, include_c_in))
    return NoiseSpectrum(grid, values, "C^2/Hz")


def output_noise_spectrum(cfg, sensor, oa1, oa2, grid, include_c_in: bool = False) -> NoiseSpectrum:
    """Output voltage variance density: q2_in * |G_out|^2 (V^2/Hz)."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    q2 = np.atleast_1d(input_charge_noise_density(cfg, sensor, oa1, oa2, grid, include_c_in))
    return NoiseSpectrum(grid, q2 * np.abs(overall_gain(cfg, grid)) ** 2, "V^2/Hz")

