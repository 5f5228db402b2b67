"""Brute-force modified nodal analysis of the amplifier schematic.

This is the independent check on the closed forms in :mod:`circuit` and
:mod:`noise`: it knows nothing about those formulas, only the schematic.
Ideal op amps are nullors (v+ = v-, no input current, free output current).
A finite-gain VCVS variant exists only to show convergence to the nullor.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import SingularCircuitError
from .models import K_B, AmplifierConfig, OpAmpModel, SensorModel
from .spectra import TransferFunction

GROUND = "0"
COND_WARN = 1e12
KINDS = {"R": 2, "C": 2, "I": 2, "V": 2, "OPAMP": 3, "VCVS": 3}


@dataclass(frozen=True)
class Element:
    """One netlist element.

    Two-terminal nodes are ``(a, b)``.  A current source drives ``value``
    amperes from ``a`` through itself into ``b``; a voltage source enforces
    ``v(a) - v(b) = value``.  Op amps are ``(in+, in-, out)``; for VCVS
    ``value`` is the open-loop gain.
    """

    kind: str
    name: str
    nodes: tuple[str, ...]
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown element kind {self.kind!r}")
        if len(self.nodes) != KINDS[self.kind]:
            raise ValueError(f"{self.name}: {self.kind} needs {KINDS[self.kind]} nodes")
        if self.kind in ("R", "C") and not self.value > 0:
            raise ValueError(f"{self.name}: value must be > 0")


@dataclass(frozen=True)
class Netlist:
    elements: tuple[Element, ...]
    ground: str = GROUND
    nodes: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        names = [e.name for e in self.elements]
        if len(set(names)) != len(names):
            raise ValueError("element names must be unique")
        seen: dict[str, None] = {}
        for e in self.elements:
            for n in e.nodes:
                seen.setdefault(n)
        if self.ground not in seen:
            raise ValueError("netlist does not reference the ground node")
        object.__setattr__(self, "nodes", tuple(seen))
        for e in self.elements:
            if e.kind in ("OPAMP", "VCVS") and e.nodes[2] in e.nodes[:2]:
                raise ValueError(f"{e.name}: op-amp output shares a node with an input")
        self._check_connected()

    def _check_connected(self):
        parent = {n: n for n in self.nodes}

        def find(n):
            while parent[n] != n:
                parent[n] = parent[parent[n]]
                n = parent[n]
            return n

        for e in self.elements:
            root = find(e.nodes[0])
            for n in e.nodes[1:]:
                parent[find(n)] = root
        g = find(self.ground)
        stray = [n for n in self.nodes if find(n) != g]
        if stray:
            raise ValueError(f"nodes not connected to ground: {stray}")

    def __contains__(self, name: str) -> bool:
        return any(e.name == name for e in self.elements)

    def element(self, name: str) -> Element:
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def sources(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.elements if e.kind in ("I", "V"))

    def to_json(self) -> str:
        doc = {
            "ground": self.ground,
            "nodes": list(self.nodes),
            "elements": [
                {"kind": e.kind, "name": e.name, "nodes": list(e.nodes), "value": e.value}
                for e in self.elements
            ],
        }
        return json.dumps(doc, indent=2) + "\n"


@dataclass(frozen=True, eq=False)
class AcSolution:
    freq: float
    node_voltages: dict[str, complex]
    branch_currents: dict[str, complex]
    residual: float

    def __getitem__(self, node: str) -> complex:
        return self.node_voltages[node]


class _System:
    """Assembled MNA matrix for one netlist at one frequency."""

    def __init__(self, netlist: Netlist, f: float):
        if not f > 0:
            raise ValueError("frequency must be > 0 Hz")
        self.netlist = netlist
        self.f = f
        w = 2 * math.pi * f
        self.node_index = {n: i for i, n in enumerate(n for n in netlist.nodes if n != netlist.ground)}
        n = len(self.node_index)
        branch = [e for e in netlist.elements if e.kind in ("V", "OPAMP", "VCVS")]
        self.branch_index = {e.name: n + k for k, e in enumerate(branch)}
        size = n + len(branch)
        A = np.zeros((size, size), dtype=complex)
        idx = self.node_index.get

        for e in netlist.elements:
            if e.kind in ("R", "C"):
                y = 1 / e.value if e.kind == "R" else 1j * w * e.value
                a, b = idx(e.nodes[0]), idx(e.nodes[1])
                if a is not None:
                    A[a, a] += y
                if b is not None:
                    A[b, b] += y
                if a is not None and b is not None:
                    A[a, b] -= y
                    A[b, a] -= y
            elif e.kind == "V":
                k = self.branch_index[e.name]
                a, b = idx(e.nodes[0]), idx(e.nodes[1])
                if a is not None:
                    A[a, k] += 1
                    A[k, a] += 1
                if b is not None:
                    A[b, k] -= 1
                    A[k, b] -= 1
            elif e.kind in ("OPAMP", "VCVS"):
                k = self.branch_index[e.name]
                p, m, o = (idx(x) for x in e.nodes)
                A[o, k] += 1  # output current leaves through the op amp
                gain = 1.0 if e.kind == "OPAMP" else e.value
                if e.kind == "VCVS":
                    A[k, o] += 1
                    gain = -gain
                if p is not None:
                    A[k, p] += gain
                if m is not None:
                    A[k, m] -= gain
        self.A = A

        # row/column equilibration; element values span ~25 decades
        row = np.max(np.abs(A), axis=1)
        if np.any(row == 0):
            raise SingularCircuitError("empty row in nodal matrix (floating node?)")
        dr = 1 / row
        col = np.max(np.abs(A * dr[:, None]), axis=0)
        if np.any(col == 0):
            raise SingularCircuitError("empty column in nodal matrix")
        dc = 1 / col
        self.dr, self.dc = dr, dc
        scaled = A * dr[:, None] * dc[None, :]
        cond = np.linalg.cond(scaled)
        if not np.isfinite(cond):
            raise SingularCircuitError("nodal matrix is singular")
        if cond > COND_WARN:
            warnings.warn(f"ill-conditioned nodal matrix (cond={cond:.3g})", RuntimeWarning)
        self._scaled = scaled

    def rhs(self, values: Mapping[str, complex]) -> np.ndarray:
        b = np.zeros(self.A.shape[0], dtype=complex)
        for name, val in values.items():
            e = self.netlist.element(name)
            if e.kind == "I":
                a, c = self.node_index.get(e.nodes[0]), self.node_index.get(e.nodes[1])
                if a is not None:
                    b[a] -= val
                if c is not None:
                    b[c] += val
            elif e.kind == "V":
                b[self.branch_index[name]] += val
            else:
                raise ValueError(f"{name} is not an independent source")
        return b

    def solve(self, b: np.ndarray) -> np.ndarray:
        dr = self.dr if b.ndim == 1 else self.dr[:, None]
        dc = self.dc if b.ndim == 1 else self.dc[:, None]
        try:
            y = np.linalg.solve(self._scaled, b * dr)
        except np.linalg.LinAlgError as exc:
            raise SingularCircuitError(str(exc)) from exc
        return y * dc

    def residual(self, x: np.ndarray, b: np.ndarray) -> float:
        """Largest relative KCL imbalance over the node rows."""
        n = len(self.node_index)
        r = (self.A @ x - b)[:n]
        scale = (np.abs(self.A) @ np.abs(x) + np.abs(b))[:n]
        live = scale > 0
        return float(np.max(np.abs(r[live]) / scale[live], initial=0.0))


def _source_values(netlist: Netlist, overrides: Mapping[str, complex] | None) -> dict:
    values = {e.name: e.value for e in netlist.elements if e.kind in ("I", "V") and e.value}
    if overrides:
        for name in overrides:
            if netlist.element(name).kind not in ("I", "V"):
                raise ValueError(f"{name} is not an independent source")
        values.update(overrides)
    return values


def solve_ac(netlist: Netlist, f: float, sources: Mapping[str, complex] | None = None) -> AcSolution:
    """Solve node voltages at one frequency.

    ``sources`` overrides source values by element name; sources not named
    keep the value stored in the netlist.
    """
    system = _System(netlist, f)
    b = system.rhs(_source_values(netlist, sources))
    x = system.solve(b)
    volts = {netlist.ground: 0j}
    volts.update({n: complex(x[i]) for n, i in system.node_index.items()})
    currents = {name: complex(x[k]) for name, k in system.branch_index.items()}
    return AcSolution(f, volts, currents, system.residual(x, b))


def noise_by_superposition(
    netlist: Netlist,
    source_set: Mapping[str, float],
    f: float,
    drive: Mapping[str, complex] | None = None,
    output: str = "out",
) -> float:
    """Input-referred charge variance density (C^2/Hz) by superposition.

    Each named source is excited alone with unit amplitude; its output power
    is weighted by its variance density, summed, and divided by |v_out/q_in|^2
    where ``drive`` is the source excitation representing 1 C of input charge
    (default: :func:`charge_drive`).
    """
    system = _System(netlist, f)
    if drive is None:
        drive = charge_drive(netlist, 1.0, f)
    names = list(source_set)
    cols = [system.rhs(drive)] + [system.rhs({n: 1.0}) for n in names]
    x = system.solve(np.stack(cols, axis=1))
    out = system.node_index[output]
    gain = x[out, 0]
    if gain == 0:
        raise SingularCircuitError("zero signal gain; cannot refer noise to the input")
    power = sum(abs(x[out, k + 1]) ** 2 * source_set[n] for k, n in enumerate(names))
    return float(power / abs(gain) ** 2)


# --- the amplifier schematic -------------------------------------------------

DIFF_STAGE_R = 10e3


def build_chain_netlist(
    cfg: AmplifierConfig,
    sensor: SensorModel,
    oa1: OpAmpModel | None = None,
    include_c_in: bool = False,
    feedback_mismatch: float = 0.0,
    opamp_gain: float | None = None,
) -> Netlist:
    """Netlist of the sensor, both input stages, difference, lead and output stages.

    Node names: ``inp``/``inn`` are the two charge inputs, ``outa``/``outb``
    the first-stage outputs, ``int`` the difference-stage output, ``out`` the
    amplifier output.  Sources named ``n_*`` are noise injection points and
    ``v_piezo``/``i_drive_*`` signal drives, all zero-valued by default.
    Absent parasitics (zero capacitance, infinite leakage) are omitted.
    ``feedback_mismatch`` scales the ``b``-side C_f by (1 + mismatch).
    """
    els: list[Element] = []
    add = lambda kind, name, nodes, value=0.0: els.append(Element(kind, name, tuple(nodes), value))
    amp = "OPAMP" if opamp_gain is None else "VCVS"
    amp_val = 0.0 if opamp_gain is None else float(opamp_gain)

    # sensor
    if sensor.c_piezo > 0:
        add("V", "v_piezo", ("pz", "inn"))
        add("C", "c_piezo", ("pz", "inp"), sensor.c_piezo)
    if sensor.c_par > 0:
        add("C", "c_par", ("inp", "inn"), sensor.c_par)
    if not math.isinf(sensor.r_par):
        add("R", "r_par", ("inp", "inn"), sensor.r_par)
        add("I", "n_rpar", ("inp", "inn"))
    if sensor.c_gnd > 0:
        add("C", "c_gnd_a", ("inp", GROUND), sensor.c_gnd)
        add("C", "c_gnd_b", ("inn", GROUND), sensor.c_gnd)
    add("I", "i_drive_p", (GROUND, "inp"))
    add("I", "i_drive_n", (GROUND, "inn"))

    # first stage, one inverting charge amp per input
    for side, node, c_f in (("a", "inp", cfg.c_f), ("b", "inn", cfg.c_f * (1 + feedback_mismatch))):
        out = "out" + side
        plus = "p" + side
        add("V", f"n_v_oa1_{side}", (plus, GROUND))
        add(amp, f"oa1_{side}", (plus, node, out), amp_val)
        add("R", f"r_f_{side}", (node, out), cfg.r_f)
        add("C", f"c_f_{side}", (node, out), c_f)
        add("I", f"n_rf_{side}", (out, node))
        add("I", f"n_i_oa1_{side}", (node, GROUND))
        if include_c_in and oa1 is not None and oa1.c_in > 0:
            add("C", f"c_in_{side}", (node, GROUND), oa1.c_in)

    # difference stage: int = outb - outa
    add("R", "r_d1", ("outa", "dm"), DIFF_STAGE_R)
    add("R", "r_d2", ("dm", "int"), DIFF_STAGE_R)
    add("R", "r_d3", ("outb", "dp"), DIFF_STAGE_R)
    add("R", "r_d4", ("dp", GROUND), DIFF_STAGE_R)
    add("V", "n_v_oa2", ("dp2", "dp"))
    add(amp, "oa2", ("dp2", "dm", "int"), amp_val)

    # lead stage and output high-pass
    add(amp, "oa3", ("int", "lm", "lo"), amp_val)
    add("R", "r_a", ("lo", "lm"), cfg.r_a)
    add("R", "r_b", ("lm", "lb"), cfg.r_b)
    add("C", "c_b", ("lb", GROUND), cfg.c_b)
    add("C", "c_o", ("lo", "out"), cfg.c_o)
    add("R", "r_o", ("out", GROUND), cfg.r_o)
    return Netlist(tuple(els))


def charge_drive(netlist: Netlist, q: complex, f: float, mode: str = "diff") -> dict:
    """Source values that put charge ``q`` on the input.

    Differential drive uses the piezo Thevenin source when the sensor has
    capacitance, otherwise equal and opposite injected currents j*w*q.
    Common-mode drive injects j*w*q into both inputs.
    """
    w = 2 * math.pi * f
    if mode == "diff":
        if "v_piezo" in netlist:
            c = netlist.element("c_piezo").value
            return {"v_piezo": q / c}
        return {"i_drive_p": 1j * w * q, "i_drive_n": -1j * w * q}
    if mode == "cm":
        return {"i_drive_p": 1j * w * q, "i_drive_n": 1j * w * q}
    raise ValueError(f"mode must be 'diff' or 'cm', got {mode!r}")


def chain_noise_sources(
    netlist: Netlist, cfg: AmplifierConfig, sensor: SensorModel, oa1: OpAmpModel, oa2: OpAmpModel, f: float
) -> dict[str, float]:
    """Variance density of every noise source in the chain netlist."""
    kt4 = 4 * K_B * cfg.temperature
    v1 = float(oa1.voltage_density(f))
    i1 = float(oa1.current_density(f))
    src = {
        "n_rf_a": kt4 / cfg.r_f,
        "n_rf_b": kt4 / cfg.r_f,
        "n_v_oa1_a": v1,
        "n_v_oa1_b": v1,
        "n_i_oa1_a": i1,
        "n_i_oa1_b": i1,
        "n_v_oa2": float(oa2.voltage_density(f)),
    }
    if "n_rpar" in netlist:
        src["n_rpar"] = kt4 / sensor.r_par
    return src


def oracle_gain(cfg: AmplifierConfig, sensor: SensorModel | None = None, f: float = 1e3, **build) -> complex:
    """v_out per coulomb of differential input charge, from the nodal solve."""
    sensor = sensor or SensorModel()
    net = build_chain_netlist(cfg, sensor, **build)
    return solve_ac(net, f, charge_drive(net, 1.0, f))["out"]


def oracle_transfer(
    cfg: AmplifierConfig,
    sensor: SensorModel,
    grid: Iterable[float],
    mode: str = "diff",
    node: str = "out",
    **build,
) -> TransferFunction:
    net = build_chain_netlist(cfg, sensor, **build)
    grid = np.asarray(list(grid), dtype=float)
    vals = [solve_ac(net, f, charge_drive(net, 1.0, f, mode))[node] for f in grid]
    return TransferFunction(grid, np.array(vals))


def oracle_noise_density(
    cfg: AmplifierConfig,
    sensor: SensorModel,
    oa1: OpAmpModel,
    oa2: OpAmpModel,
    f: float,
    include_c_in: bool = False,
) -> float:
    net = build_chain_netlist(cfg, sensor, oa1=oa1, include_c_in=include_c_in)
    return noise_by_superposition(net, chain_noise_sources(net, cfg, sensor, oa1, oa2, f), f)
