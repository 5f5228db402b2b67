"""Grid sweeps over component values and op-amp choices, with a Pareto filter.

Power counts the first-stage part twice (two input channels) and the
difference/lead part once (one dual package).
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import acoustics, circuit, noise
from .models import AmplifierConfig, OpAmpRegistry, SensorModel, resolve_opamp

DEFAULT_MAX_POINTS = 100_000
AXES = ("r_f", "c_f", "oa1", "oa2")
CSV_HEADER = "r_f_ohm,c_f_f,oa1,oa2,enc_c,midband_gain_v_per_c,cuton_hz,power_w,pareto"


class GridTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class DesignPoint:
    cfg: AmplifierConfig
    enc_c: float
    midband_gain: float
    cuton_hz: float
    power_w: float
    ein_db_spl: float | None = None

    @property
    def oa1(self) -> str:
        return self.cfg.oa1_ref

    @property
    def oa2(self) -> str:
        return self.cfg.oa2_ref

    def objective(self, name: str) -> float:
        return {"enc": self.enc_c, "power": self.power_w, "ein": self.ein_db_spl}[name]


@dataclass(frozen=True)
class SweepSpec:
    axes: Mapping[str, Sequence]
    fixed: AmplifierConfig = field(default_factory=AmplifierConfig)
    band: tuple[float, float] = (200.0, 20e3)
    sensor: SensorModel = field(default_factory=SensorModel)
    max_points: int = DEFAULT_MAX_POINTS

    def __post_init__(self):
        if not self.axes:
            raise ValueError("sweep needs at least one axis")
        for name, values in self.axes.items():
            if name not in AXES:
                raise ValueError(f"unknown sweep axis {name!r}; expected one of {AXES}")
            if len(values) == 0:
                raise ValueError(f"sweep axis {name!r} is empty")
            if name in ("r_f", "c_f") and any(not float(v) > 0 for v in values):
                raise ValueError(f"sweep axis {name!r} has non-positive candidates")
        lo, hi = self.band
        if not 0 < lo < hi:
            raise ValueError(f"bad band {self.band}")

    @property
    def size(self) -> int:
        return math.prod(len(v) for v in self.axes.values())

    @classmethod
    def from_dict(cls, data: Mapping, registry: OpAmpRegistry | None = None) -> "SweepSpec":
        data = dict(data)
        unknown = set(data) - {"axes", "fixed", "band", "sensor", "max_points"}
        if unknown:
            raise ValueError(f"unknown sweep spec fields {sorted(unknown)}")
        axes = {k: list(v) for k, v in data.get("axes", {}).items()}
        fixed = AmplifierConfig.from_dict(data.get("fixed", {}), registry)
        sensor = SensorModel.from_dict(data["sensor"]) if "sensor" in data else SensorModel()
        band = tuple(float(x) for x in data.get("band", (200.0, 20e3)))
        if len(band) != 2:
            raise ValueError("band must be [f_lo, f_hi]")
        spec = cls(axes, fixed, band, sensor, int(data.get("max_points", DEFAULT_MAX_POINTS)))
        if registry is not None:
            for name in ("oa1", "oa2"):
                for part in axes.get(name, []):
                    resolve_opamp(registry, part)
        return spec


def load_sweep_spec(path: str | Path, registry: OpAmpRegistry | None = None) -> SweepSpec:
    return SweepSpec.from_dict(json.loads(Path(path).read_text()), registry)


def design_power(cfg: AmplifierConfig, registry: OpAmpRegistry) -> float:
    return 2 * resolve_opamp(registry, cfg.oa1_ref).power + resolve_opamp(registry, cfg.oa2_ref).power


def evaluate(
    cfg: AmplifierConfig,
    sensor: SensorModel,
    registry: OpAmpRegistry,
    band: tuple[float, float] = (200.0, 20e3),
    include_c_in: bool = False,
) -> DesignPoint:
    oa1 = resolve_opamp(registry, cfg.oa1_ref)
    oa2 = resolve_opamp(registry, cfg.oa2_ref)
    enc = noise.enc_over_band(cfg, sensor, oa1, oa2, band[0], band[1], include_c_in)
    ein = None
    if sensor.sensitivity is not None:
        bands = acoustics.third_octave_bands(*band)
        grid = np.geomspace(bands[0].lower, bands[-1].upper, 64 * len(bands) + 1)
        spec = noise.input_noise_spectrum(cfg, sensor, oa1, oa2, grid, include_c_in)
        levels = acoustics.ein_spectrum(spec, sensor.sensitivity, bands)
        ein = acoustics.ein_aweighted_total(levels, [b.center for b in bands])
    return DesignPoint(
        cfg=cfg,
        enc_c=enc,
        midband_gain=circuit.midband_gain(cfg),
        cuton_hz=circuit.cuton_frequency(cfg),
        power_w=design_power(cfg, registry),
        ein_db_spl=ein,
    )


def grid_configs(spec: SweepSpec) -> list[AmplifierConfig]:
    """Cartesian product in fixed axis order r_f, c_f, oa1, oa2."""
    if spec.size > spec.max_points:
        raise GridTooLarge(f"sweep has {spec.size} points, cap is {spec.max_points}")
    names = [a for a in AXES if a in spec.axes]
    configs = []
    for combo in itertools.product(*(spec.axes[a] for a in names)):
        changes = {}
        for name, value in zip(names, combo):
            if name in ("oa1", "oa2"):
                changes[name + "_ref"] = str(value)
            else:
                changes[name] = float(value)
        configs.append(spec.fixed.with_(**changes))
    return configs


def sweep(
    spec: SweepSpec,
    registry: OpAmpRegistry,
    include_c_in: bool = False,
    workers: int = 1,
) -> list[DesignPoint]:
    configs = grid_configs(spec)
    run = lambda cfg: evaluate(cfg, spec.sensor, registry, spec.band, include_c_in)
    if workers <= 1:
        return [run(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, configs))


def _dominates(a: tuple, b: tuple) -> bool:
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def _sort_key(p: DesignPoint, objectives):
    return tuple(p.objective(o) for o in objectives) + (p.cfg.r_f, p.cfg.c_f, p.oa1, p.oa2)


def pareto_front(points: Sequence[DesignPoint], objectives: Sequence[str] = ("enc", "power")) -> list[DesignPoint]:
    """Non-dominated points (all objectives minimized), sorted by ENC."""
    if not points:
        raise ValueError("need at least one design point")
    unique = list(dict.fromkeys(points))
    vecs = [tuple(p.objective(o) for o in objectives) for p in unique]
    if any(v is None for vec in vecs for v in vec):
        raise ValueError(f"objective missing on some points: {objectives}")
    front = [p for p, v in zip(unique, vecs) if not any(_dominates(w, v) for w in vecs)]
    return sorted(front, key=lambda p: _sort_key(p, ("enc",) + tuple(objectives)))


def results_csv(points: Sequence[DesignPoint], front: Sequence[DesignPoint]) -> str:
    on_front = set(front)
    lines = [CSV_HEADER]
    for p in points:
        nums = [repr(float(x)) for x in (p.cfg.r_f, p.cfg.c_f)]
        metrics = [repr(float(x)) for x in (p.enc_c, p.midband_gain, p.cuton_hz, p.power_w)]
        lines.append(",".join(nums + [p.oa1, p.oa2] + metrics + [str(int(p in on_front))]))
    return "\n".join(lines) + "\n"
