"""Component models: amplifier configuration, sensor, op-amp registry.

All quantities are SI base units (ohms, farads, kelvin, V/sqrt(Hz), ...).
JSON documents use the same units; an infinite leakage resistance is written
as ``null`` or ``"inf"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

from .spectra import SensitivitySpectrum

K_B = 1.380649e-23
DEFAULT_TEMPERATURE = 293.0


def _positive(name: str, value: float) -> None:
    if not (value > 0) or math.isnan(value):
        raise ValueError(f"{name} must be > 0, got {value!r}")


def _nonnegative(name: str, value: float) -> None:
    if not (value >= 0):
        raise ValueError(f"{name} must be >= 0, got {value!r}")


def _parse_resistance(value) -> float:
    if value is None:
        return math.inf
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return math.inf
        raise ValueError(f"bad resistance value {value!r}")
    return float(value)


def _dump_resistance(value: float):
    return None if math.isinf(value) else value


@dataclass(frozen=True)
class OpAmpModel:
    name: str
    v_white: float
    i_white: float = 0.0
    q_slope: float = 0.0
    c_in: float = 0.0
    power: float = 0.0
    flicker_corner: float | None = None

    def __post_init__(self):
        _positive("v_white", self.v_white)
        for name in ("i_white", "q_slope", "c_in", "power"):
            _nonnegative(name, getattr(self, name))
        if self.flicker_corner is not None:
            _nonnegative("flicker_corner", self.flicker_corner)

    def voltage_density(self, f):
        """Voltage variance density (V^2/Hz), with the optional 1/f corner."""
        v2 = self.v_white**2
        if self.flicker_corner:
            return v2 * (1.0 + self.flicker_corner / f)
        return v2 + 0.0 * f

    def current_density(self, f):
        """Per-input current variance density i_white^2 + w^2 q_slope^2 (A^2/Hz)."""
        w = 2 * math.pi * f
        return self.i_white**2 + (w * self.q_slope) ** 2


OpAmpRegistry = Mapping[str, OpAmpModel]


def load_registry(path: str | Path | None = None) -> dict[str, OpAmpModel]:
    """Load an op-amp registry (JSON object keyed by part name).

    Without a path the bundled registry is used.
    """
    if path is None:
        text = resources.files("chargeamp").joinpath("data/opamps.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ValueError("op-amp registry must be a JSON object keyed by name")
    registry = {}
    allowed = {f.name for f in fields(OpAmpModel)} - {"name"}
    for name, entry in raw.items():
        unknown = set(entry) - allowed
        if unknown:
            raise ValueError(f"op-amp {name}: unknown fields {sorted(unknown)}")
        registry[name] = OpAmpModel(name=name, **entry)
    return registry


def resolve_opamp(registry: OpAmpRegistry, name: str) -> OpAmpModel:
    try:
        return registry[name]
    except KeyError:
        raise ValueError(
            f"unknown op amp {name!r}; registry has {sorted(registry)}"
        ) from None


@dataclass(frozen=True)
class AmplifierConfig:
    """Differential charge amplifier component values.

    Defaults are the built board: 10 GOhm / 1 pF feedback, a 10x lead stage
    with its pole at 1000 rad/s, and an output high-pass at 100 rad/s.
    """

    r_f: float = 10e9
    c_f: float = 1e-12
    r_a: float = 90e3
    r_b: float = 10e3
    c_b: float = 100e-9
    r_o: float = 100e3
    c_o: float = 100e-9
    oa1_ref: str = "LTC6240"
    oa2_ref: str = "AD8617"
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        for name in ("r_f", "c_f", "r_a", "r_b", "c_b", "r_o", "c_o", "temperature"):
            _positive(name, getattr(self, name))

    def with_(self, **changes) -> "AmplifierConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping, registry: OpAmpRegistry | None = None):
        data = dict(data)
        # accept short names used in sweep specs
        for short, long in (("oa1", "oa1_ref"), ("oa2", "oa2_ref")):
            if short in data:
                data[long] = data.pop(short)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown amplifier config fields {sorted(unknown)}")
        cfg = cls(**{k: (v if k.endswith("_ref") else float(v)) for k, v in data.items()})
        if registry is not None:
            resolve_opamp(registry, cfg.oa1_ref)
            resolve_opamp(registry, cfg.oa2_ref)
        return cfg


@dataclass(frozen=True)
class SensorModel:
    """Piezo sensor with its parasitics.

    ``r_par = math.inf`` means no leakage path.
    """

    c_piezo: float = 10e-12
    c_par: float = 1e-12
    r_par: float = 1e12
    c_gnd: float = 0.6e-15
    sensitivity: SensitivitySpectrum | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("c_piezo", "c_par", "c_gnd"):
            _nonnegative(name, getattr(self, name))
        _positive("r_par", self.r_par)

    @classmethod
    def unloaded(cls) -> "SensorModel":
        return cls(c_piezo=0.0, c_par=0.0, r_par=math.inf, c_gnd=0.0)

    @property
    def g_par(self) -> float:
        """Leakage conductance 1/r_par (0 for no leakage)."""
        return 0.0 if math.isinf(self.r_par) else 1.0 / self.r_par

    def to_dict(self) -> dict:
        return {
            "c_piezo": self.c_piezo,
            "c_par": self.c_par,
            "r_par": _dump_resistance(self.r_par),
            "c_gnd": self.c_gnd,
        }

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: Path | None = None) -> "SensorModel":
        data = dict(data)
        sens_path = data.pop("sensitivity_csv", None)
        unknown = set(data) - {"c_piezo", "c_par", "r_par", "c_gnd"}
        if unknown:
            raise ValueError(f"unknown sensor fields {sorted(unknown)}")
        kwargs = {k: float(v) for k, v in data.items() if k != "r_par"}
        if "r_par" in data:
            kwargs["r_par"] = _parse_resistance(data["r_par"])
        sensitivity = None
        if sens_path is not None:
            from .io import read_sensitivity_csv

            p = Path(sens_path)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            sensitivity = read_sensitivity_csv(p)
        return cls(sensitivity=sensitivity, **kwargs)


def load_config(path: str | Path, registry: OpAmpRegistry | None = None) -> AmplifierConfig:
    return AmplifierConfig.from_dict(json.loads(Path(path).read_text()), registry)


def load_sensor(path: str | Path) -> SensorModel:
    p = Path(path)
    return SensorModel.from_dict(json.loads(p.read_text()), base_dir=p.parent)


def dump_json(obj: Mapping) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
