"""Frozen default parameters reproduce their calibration targets."""
import numpy as np
import pytest

from sivsim import defaults
from sivsim.calibration import (
    calibrate_phonon, calibrate_pumping, calibrate_readout, mean_pumping_time, pumping_cases, readout_means,
)
from sivsim.model import FieldConfig, level_diagram, bose_occupation, phonon_rates
from sivsim.noise import QuasiStatic, coherence_decay, quasistatic_sigma


def test_pumping_extremes(optical):
    cases = pumping_cases()
    (f_mis, tau_mis), (f_al, tau_al) = cases[0], cases[-1]
    assert mean_pumping_time(optical, f_mis) == pytest.approx(tau_mis, rel=1e-6)
    assert mean_pumping_time(optical, f_al) == pytest.approx(tau_al, rel=1e-6)


def test_aligned_angle_within_bound():
    assert 0.0 < defaults.ALIGNED_ALPHA < 0.5


def test_pumping_calibration_reproduces_defaults(optical):
    r_max, alpha = calibrate_pumping(optical)
    assert r_max == pytest.approx(optical.r_max, rel=1e-6)
    assert alpha == pytest.approx(defaults.ALIGNED_ALPHA, rel=1e-6)


def test_readout_means(optical, aligned_field):
    assert readout_means(optical, aligned_field) == pytest.approx((6.2, 0.52), rel=1e-6)


def test_readout_calibration_reproduces_defaults(optical, aligned_field):
    eta, frac = calibrate_readout(optical, aligned_field)
    assert eta == pytest.approx(optical.eta_collect, rel=1e-6)
    assert frac == pytest.approx(optical.offres_fraction, rel=1e-6)


def test_phonon_calibration(mw):
    assert calibrate_phonon(mw) == pytest.approx(mw.gamma0_phonon, rel=1e-6)
    f = FieldConfig(*defaults.PHONON_CAL_FIELD)
    dgs = level_diagram(mw, f).delta_gs
    gp = phonon_rates(mw, dgs, defaults.PHONON_CAL_TEMPERATURE)[0]
    assert gp == pytest.approx(mw.gamma0_phonon * bose_occupation(dgs, defaults.PHONON_CAL_TEMPERATURE))
    assert 1 / (gp + 0.5 * mw.gamma_t1) == pytest.approx(defaults.PHONON_CAL_T2, rel=1e-6)


def test_phonon_calibration_unreachable(mw):
    with pytest.raises(ValueError):
        calibrate_phonon(mw, t2=10.0)


def test_mw_quasistatic_t2star(mw):
    sigma = quasistatic_sigma(mw, FieldConfig(3000.0, defaults.ALIGNED_ALPHA))
    assert coherence_decay(QuasiStatic(sigma), 0, 1.5e-6) == pytest.approx(np.exp(-1), rel=1e-6)


def test_strained_emitter_splitting(mw):
    assert level_diagram(mw, FieldConfig(0.0, 0.0)).delta_gs == pytest.approx(80e9, rel=0.01)
