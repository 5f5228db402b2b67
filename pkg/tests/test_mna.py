import json
import math
from pathlib import Path

import numpy as np
import pytest

from chargeamp import circuit, dsp, mna, noise
from chargeamp.errors import SingularCircuitError
from chargeamp.mna import Element, Netlist
from chargeamp.models import K_B, SensorModel

GOLDEN = Path(__file__).parent / "data" / "chain_netlist_default.json"


def divider():
    return Netlist(
        (
            Element("V", "vs", ("a", "0"), 1.0),
            Element("R", "r1", ("a", "m"), 1e3),
            Element("R", "r2", ("m", "0"), 1e3),
        )
    )


def test_divider_midpoint():
    sol = mna.solve_ac(divider(), 1e3)
    assert sol["m"] == pytest.approx(0.5, abs=1e-15)
    assert sol["0"] == 0
    assert sol.residual < 1e-12


def test_rc_lowpass_at_corner():
    r, c = 1e3, 1e-6
    net = Netlist(
        (
            Element("V", "vs", ("a", "0"), 1.0),
            Element("R", "r", ("a", "o"), r),
            Element("C", "c", ("o", "0"), c),
        )
    )
    v = mna.solve_ac(net, 1 / (2 * math.pi * r * c))["o"]
    assert abs(v) == pytest.approx(1 / math.sqrt(2), rel=1e-12, abs=0)
    assert math.degrees(np.angle(v)) == pytest.approx(-45, rel=1e-12, abs=0)


def test_inverting_amp_nullor():
    net = Netlist(
        (
            Element("V", "vs", ("a", "0"), 1.0),
            Element("R", "ri", ("a", "m"), 1e3),
            Element("R", "rf", ("m", "o"), 5e3),
            Element("OPAMP", "u1", ("0", "m", "o")),
        )
    )
    sol = mna.solve_ac(net, 1e3)
    assert sol["o"] == pytest.approx(-5, rel=1e-14, abs=0)
    assert abs(sol["m"]) < 1e-14


def test_full_chain_1fc_at_1khz(cfg, table_sensor):
    net = mna.build_chain_netlist(cfg, table_sensor)
    sol = mna.solve_ac(net, 1e3, mna.charge_drive(net, 1e-15, 1e3))
    assert sol["out"] == pytest.approx(1e-15 * circuit.overall_gain(cfg, 1e3), rel=1e-9, abs=0)
    assert sol.residual < 1e-12


def test_unloaded_chain_uses_current_drive(cfg, unloaded):
    net = mna.build_chain_netlist(cfg, unloaded)
    assert "v_piezo" not in net
    drive = mna.charge_drive(net, 1e-15, 2e3)
    assert set(drive) == {"i_drive_p", "i_drive_n"}
    out = mna.solve_ac(net, 2e3, drive)["out"]
    assert out == pytest.approx(1e-15 * circuit.overall_gain(cfg, 2e3), rel=1e-9, abs=0)


def test_superposition(cfg, table_sensor):
    net = mna.build_chain_netlist(cfg, table_sensor)
    f = 700.0
    a = {"n_rf_a": 1e-12, "n_v_oa2": 2e-6j}
    joint = mna.solve_ac(net, f, a)
    parts = [mna.solve_ac(net, f, {k: v}) for k, v in a.items()]
    scale = max(abs(v) for v in joint.node_voltages.values())
    for node in net.nodes:
        assert abs(joint[node] - sum(p[node] for p in parts)) <= 1e-12 * scale


def test_scaling_lone_current_source(cfg, table_sensor):
    net = mna.build_chain_netlist(cfg, table_sensor)
    one = mna.solve_ac(net, 300.0, {"n_rpar": 1e-15})
    two = mna.solve_ac(net, 300.0, {"n_rpar": 2e-15})
    scale = max(abs(v) for v in two.node_voltages.values())
    for node in net.nodes:
        assert abs(two[node] - 2 * one[node]) <= 1e-13 * scale


@pytest.mark.parametrize("gain", [1e6, 1e9])
def test_finite_gain_converges_as_one_over_a(cfg, table_sensor, gain):
    ideal = mna.oracle_gain(cfg, table_sensor, 1e3)
    finite = mna.oracle_gain(cfg, table_sensor, 1e3, opamp_gain=gain)
    err = abs(finite - ideal) / abs(ideal)
    # noise gain of the first stage is ~(C_tot + C_f) / C_f ~ 35
    assert 1 / gain < err < 100 / gain


def test_finite_gain_error_ratio(cfg, table_sensor):
    ideal = mna.oracle_gain(cfg, table_sensor, 1e3)
    errs = [abs(mna.oracle_gain(cfg, table_sensor, 1e3, opamp_gain=a) - ideal) for a in (1e6, 1e9)]
    assert errs[0] / errs[1] == pytest.approx(1e3, rel=1e-2, abs=0)


@pytest.mark.filterwarnings("ignore:ill-conditioned")
def test_singular_netlist():
    # two voltage sources fighting over one node
    net = Netlist(
        (
            Element("V", "v1", ("a", "0"), 1.0),
            Element("V", "v2", ("a", "0"), 2.0),
        )
    )
    with pytest.raises(SingularCircuitError):
        mna.solve_ac(net, 1e3)


def test_floating_node_is_rejected():
    with pytest.raises(ValueError, match="not connected"):
        Netlist((Element("R", "r1", ("a", "0"), 1.0), Element("R", "r2", ("b", "c"), 1.0)))


def test_opamp_output_on_input_is_rejected():
    with pytest.raises(ValueError):
        Netlist((Element("R", "r", ("a", "0"), 1.0), Element("OPAMP", "u", ("0", "a", "a"))))


def test_nonpositive_frequency(cfg, table_sensor):
    with pytest.raises(ValueError):
        mna.solve_ac(divider(), 0.0)


def test_golden_netlist(cfg, table_sensor):
    net = mna.build_chain_netlist(cfg, table_sensor)
    assert len(net.nodes) == 16
    assert len(net.elements) == 33
    assert json.loads(net.to_json()) == json.loads(GOLDEN.read_text())


def test_absent_parasitics_are_omitted(cfg):
    no_leak = mna.build_chain_netlist(cfg, SensorModel(r_par=math.inf))
    assert "r_par" not in no_leak and "n_rpar" not in no_leak
    no_gnd = mna.build_chain_netlist(cfg, SensorModel(c_gnd=0.0))
    assert "c_gnd_a" not in no_gnd and "c_gnd_b" not in no_gnd
    assert all(e.value < 1e15 for e in no_leak.elements if e.kind == "R")


def test_rpar_only_noise(cfg, table_sensor):
    net = mna.build_chain_netlist(cfg, table_sensor)
    for f in (100.0, 1e3, 1e4):
        d = mna.noise_by_superposition(net, {"n_rpar": 4 * K_B * 293 / table_sensor.r_par}, f)
        assert d == pytest.approx(4 * K_B * 293 / table_sensor.r_par / (2 * math.pi * f) ** 2, rel=1e-9, abs=0)


def test_zero_sources_zero_noise(cfg, table_sensor):
    net = mna.build_chain_netlist(cfg, table_sensor)
    assert mna.noise_by_superposition(net, {s: 0.0 for s in net.sources if s.startswith("n_")}, 1e3) == 0.0


def test_noise_oracle_matches_closed_form_20_points(cfg, table_sensor, oa1, oa2):
    for f in np.geomspace(100, 20e3, 20):
        ref = noise.input_charge_noise_density(cfg, table_sensor, oa1, oa2, f)
        assert mna.oracle_noise_density(cfg, table_sensor, oa1, oa2, f) == pytest.approx(ref, rel=0.01, abs=0)


def test_cmrr_with_feedback_mismatch(cfg, table_sensor):
    grid = [1e4]
    d = mna.oracle_transfer(cfg, table_sensor, grid, feedback_mismatch=0.01)
    c = mna.oracle_transfer(cfg, table_sensor, grid, mode="cm", feedback_mismatch=0.01)
    # mid-band: diff ~ 1/C_f + 1/(1.01 C_f), cm ~ 1/C_f - 1/(1.01 C_f)
    expect = 20 * math.log10((1 + 1 / 1.01) / (1 - 1 / 1.01))
    assert dsp.cmrr_db(d, c)[0] == pytest.approx(expect, abs=0.01)


def test_balanced_chain_rejects_common_mode(cfg, table_sensor):
    c = mna.oracle_transfer(cfg, table_sensor, [1e3], mode="cm")
    assert abs(c.values[0]) < 1e-9 * circuit.midband_gain(cfg)
