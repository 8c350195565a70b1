"""Pulse-sequence builders, validation and canonical dumps."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from sivsim import engine
from sivsim.noise import switching_fractions
from sivsim.sequences import (
    LaserPulse, MwPulse, PulseSequence, Sweep, SweepTarget, Wait, build_cpmg, build_odmr, build_pumping,
    build_rabi, build_ramsey, build_t1, dump_sequence,
)


def coherent_segments(segs):
    return [s for s in segs if isinstance(s, (MwPulse, Wait))]


def pulse_centres(segs):
    t, out = 0.0, []
    for s in coherent_segments(segs):
        if isinstance(s, MwPulse):
            out.append(t + 0.5 * s.duration)
        t += s.duration
    return np.array(out), t


# --- builders ---------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 5])
def test_cpmg_centre_to_centre_timing(n):
    rabi, T = 10e6, 20e-6
    seq = build_cpmg(n, [T], rabi=rabi)
    centres, total = pulse_centres(seq.at(T))
    assert centres[-1] - centres[0] == pytest.approx(T, rel=1e-12)
    np.testing.assert_allclose((centres[1:-1] - centres[0]) / T, switching_fractions(n), rtol=1e-12)
    assert total == pytest.approx(T + 0.25 / rabi, rel=1e-12)


def test_ideal_cpmg_pulses_are_instantaneous():
    seq = build_cpmg(4, [1e-3], ideal=True)
    segs = seq.at(1e-3)
    pulses = [s for s in segs if isinstance(s, MwPulse)]
    assert all(p.ideal for p in pulses)
    assert [p.angle for p in pulses] == [np.pi / 2] + [np.pi] * 4 + [np.pi / 2]
    centres, total = pulse_centres(segs)
    assert total == pytest.approx(1e-3)
    np.testing.assert_allclose(centres[1:-1] / 1e-3, switching_fractions(4))


def test_cpmg_rejects_short_total_time():
    with pytest.raises(ValueError, match="shorter than the pulses"):
        build_cpmg(8, [1e-7], rabi=10e6)
    with pytest.raises(ValueError):
        build_cpmg(0, [1e-3])


def test_ramsey_delay_is_edge_to_edge():
    seq = build_ramsey([0.0, 1e-6], 1e6, rabi=5e6)
    segs = seq.at(1e-6)
    assert isinstance(segs[2], Wait) and segs[2].duration == 1e-6
    assert segs[1].duration == segs[3].duration == pytest.approx(0.05e-6)


def test_odmr_grid_and_default_drive():
    seq = build_odmr(500e-6, 7.5e9, 20e3, 5)
    assert seq.sweep.values == (-10e3, -5e3, 0.0, 5e3, 10e3)
    assert seq.at(5e3)[1].detuning == 5e3
    assert seq.at(0.0)[1].rabi == pytest.approx(1e3)
    assert seq.carrier == 7.5e9
    with pytest.raises(ValueError):
        build_odmr(500e-6, 7.5e9, 20e3, 1)


def test_rabi_and_t1_sweeps():
    assert build_rabi([0.0, 1e-7], 10e6).at(1e-7)[1].duration == 1e-7
    assert build_t1([1e-3]).at(1e-3)[1].duration == 1e-3


def test_pumping_builder():
    seq = build_pumping([(88.0, 2900.0), (0.4, 2700.0)])
    assert seq.options["alpha"] == (88.0, 0.4)
    assert seq.sweep.values == (0.0, 1.0)
    with pytest.raises(ValueError):
        build_pumping([])


def test_init_laser_targets_the_other_line():
    assert build_t1([0.0], qubit_init="up").segments[0].transition == "down"
    assert build_t1([0.0], qubit_init="down").segments[0].transition == "up"


# --- validation -------------------------------------------------------------

def test_sequence_needs_one_readout():
    sw = Sweep("x", (0.0,))
    with pytest.raises(ValueError, match="exactly one readout"):
        PulseSequence("t", (Wait(1.0),), sw)
    ro = LaserPulse()
    with pytest.raises(ValueError, match="exactly one readout"):
        PulseSequence("t", (ro, ro), sw)


def test_sweep_target_validation():
    segs = (Wait(0.0), LaserPulse())
    with pytest.raises(ValueError, match="references segment"):
        PulseSequence("t", segs, Sweep("x", (1.0,), (SweepTarget(5, "duration"),)))
    with pytest.raises(ValueError, match="no field"):
        PulseSequence("t", segs, Sweep("x", (1.0,), (SweepTarget(0, "rabi"),)))
    with pytest.raises(ValueError, match="negative duration"):
        PulseSequence("t", segs, Sweep("x", (-1.0,), (SweepTarget(0, "duration"),)))


@pytest.mark.parametrize("make", [
    lambda: Wait(-1.0), lambda: MwPulse(-1.0), lambda: MwPulse(1.0, duration=-1.0),
    lambda: LaserPulse("sideways"), lambda: LaserPulse(role="pump"), lambda: LaserPulse(duration=-1.0),
])
def test_segment_validation(make):
    with pytest.raises(ValueError):
        make()


def test_shots_and_init_validation():
    seq = build_t1([0.0])
    with pytest.raises(ValueError):
        seq.with_shots(0)
    with pytest.raises(ValueError):
        build_t1([0.0], qubit_init="sideways")


# --- canonical dump and point ids ------------------------------------------

def test_dump_is_deterministic_and_sensitive():
    a = dump_sequence(build_cpmg(2, [1e-4, 2e-4]))
    assert a == dump_sequence(build_cpmg(2, [1e-4, 2e-4]))
    assert a != dump_sequence(build_cpmg(2, [1e-4, 2.0000000001e-4]))
    assert a.startswith("sequence cpmg\n")
    assert "option n_pulses 2" in a


def test_dump_floats_round_trip():
    text = dump_sequence(build_rabi([0.1 + 0.2], 10e6))
    vals = text.strip().splitlines()[-1].split()[1:]
    assert float(vals[0]) == 0.1 + 0.2


def test_point_id_depends_on_value_only():
    a = build_t1([1e-3, 2e-3])
    b = build_t1([2e-3, 1e-3, 5e-3])
    assert a.point_id(2e-3) == b.point_id(2e-3)
    assert a.point_id(1e-3) != a.point_id(2e-3)


# --- segment algebra --------------------------------------------------------

rho_strategy = st.tuples(st.floats(0, 1), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))


def make_rho(p, re, im):
    c = (re + 1j * im) * np.sqrt(p * (1 - p)) / max(1.0, abs(re + 1j * im))
    return np.array([[p, c], [np.conj(c), 1 - p]])


@given(rho_strategy, st.floats(-1e6, 1e6), st.floats(0, 1e-5), st.floats(0, 1e-5),
       st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0, 1e5))
def test_wait_additivity(r, delta, t1, t2, g_dn, g_up, g_phi):
    rho = make_rho(*r)
    one = engine.free_evolution(rho, delta * (t1 + t2), t1 + t2, g_dn, g_up, g_phi)
    two = engine.free_evolution(engine.free_evolution(rho, delta * t1, t1, g_dn, g_up, g_phi),
                                delta * t2, t2, g_dn, g_up, g_phi)
    np.testing.assert_allclose(one, two, atol=1e-10)


@given(rho_strategy, st.floats(1e5, 5e7), st.floats(0, 2 * np.pi))
def test_double_pi_pulse_is_identity(r, rabi, phase):
    rho = make_rho(*r)
    t_pi = 0.5 / rabi
    out = engine.apply_mw_pulse(engine.apply_mw_pulse(rho, rabi, 0.0, phase, t_pi), rabi, 0.0, phase, t_pi)
    np.testing.assert_allclose(out, rho, atol=1e-9)


def test_pi_pulse_flips_population():
    rho = np.diag([1.0, 0.0]).astype(complex)
    out = engine.apply_mw_pulse(rho, 10e6, 0.0, 0.0, 0.05e-6)
    assert out[1, 1].real == pytest.approx(1.0, abs=1e-12)
