"""Noise models, filter functions and coherence predictions."""
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from sivsim import defaults
from sivsim.noise import (
    OU, QuadratureError, QuasiStatic, SingleC13, Tabulated, adaptive_quad, coherence_decay,
    cpmg_filter, decoherence_exponent, eseem_echo, fid_filter, load_spectrum, mc_coherence,
    modulation_depth, nuclear_frequencies, ou_free_decay_rate, preset, sample_ou, sample_tabulated, save_spectrum,
    switching_fractions, tutorial_spectrum,
)


def brute_filter(n_pulses, total_time, omega):
    """omega^2/2 |int y(t) e^{i omega t} dt|^2 summed segment by segment with exact antiderivatives."""
    edges = np.concatenate([[0.0], switching_fractions(n_pulses) * total_time, [total_time]])
    amp = 0j
    for k in range(edges.size - 1):
        amp += (-1) ** k * (np.exp(1j * omega * edges[k + 1]) - np.exp(1j * omega * edges[k])) / (1j * omega)
    return 0.5 * omega ** 2 * abs(amp) ** 2


def ou_chi_fid(m, t):
    x = t / m.tau_c
    return m.sigma ** 2 * m.tau_c ** 2 * (x - 1 + np.exp(-x))


def ou_chi_echo(m, t):
    x = t / m.tau_c
    return m.sigma ** 2 * m.tau_c ** 2 * (x - 3 + 4 * np.exp(-x / 2) - np.exp(-x))


# --- filter functions -------------------------------------------------------

def test_hahn_filter_peak_value():
    assert cpmg_filter(1, 1e-3, 2 * np.pi / 1e-3) == pytest.approx(8.0, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 32])
def test_filter_vanishes_at_dc(n):
    assert cpmg_filter(n, 1e-3, 1e-3) < 1e-20
    assert cpmg_filter(n, 1e-3, 0.0) == 0.0


def test_filter_matches_toggling_integral_for_two_pulses():
    T = 1e-4
    omegas = np.linspace(1e3, 4e5, 50)
    got = cpmg_filter(2, T, omegas)
    want = np.array([brute_filter(2, T, w) for w in omegas])
    np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("n", [1, 3, 5, 16])
def test_filter_matches_toggling_integral(n):
    T = 1e-4
    for w in [3e3, 7.7e4, 2.5e5, np.pi * n / T]:
        assert cpmg_filter(n, T, w) == pytest.approx(brute_filter(n, T, w), rel=1e-8, abs=1e-10)


def test_fid_filter_matches_toggling_integral():
    for w in [1e3, 5e4, 3e5]:
        assert fid_filter(1e-4, w) == pytest.approx(brute_filter(0, 1e-4, w), rel=1e-10)


@given(st.integers(1, 40), st.floats(1e-3, 500.0))
def test_filter_bounded_and_nonnegative(n, z):
    f = cpmg_filter(n, 1.0, z)
    assert 0.0 <= f <= (2 * n + 2) ** 2 + 1e-9


@given(st.integers(1, 20), st.integers(0, 19))
def test_filter_removable_singularity(n, k):
    # cos(z / 2N) = 0 points use the finite-sum branch
    z = (2 * k + 1) * np.pi * n
    assert cpmg_filter(n, 1.0, z) == pytest.approx(brute_filter(n, 1.0, z), rel=1e-8, abs=1e-9)


def test_filter_rejects_bad_pulse_count():
    with pytest.raises(ValueError):
        cpmg_filter(0, 1.0, 1.0)
    with pytest.raises(ValueError):
        cpmg_filter(1.5, 1.0, 1.0)


# --- analytic coherence -----------------------------------------------------

@pytest.mark.parametrize("t", [1e-7, 1e-6, 1e-5, 1e-4])
def test_ou_free_induction_exact(t):
    m = OU(3e5, 2e-6)
    assert decoherence_exponent(m, 0, t) == pytest.approx(ou_chi_fid(m, t), rel=1e-5)


@pytest.mark.parametrize("t", [1e-7, 1e-6, 1e-5, 1e-4])
def test_ou_hahn_echo_exact(t):
    m = OU(3e5, 2e-6)
    assert decoherence_exponent(m, 1, t) == pytest.approx(ou_chi_echo(m, t), rel=1e-5)


def test_motional_narrowing():
    m = OU(1e6, 1e-9)
    t = 2e-6
    assert decoherence_exponent(m, 0, t) == pytest.approx(ou_free_decay_rate(m) * t, rel=1e-3)


def test_quasistatic_exponent():
    m = QuasiStatic(2e6)
    assert decoherence_exponent(m, 0, 1e-6) == pytest.approx(0.5 * (2e6 * 1e-6) ** 2)
    assert decoherence_exponent(m, 4, 1e-6) == 0.0


@pytest.mark.parametrize("model", [OU(3e5, 2e-6), preset("tutorial"), QuasiStatic(1e6)])
def test_no_decay_at_zero_time(model):
    assert coherence_decay(model, 0, 0.0) == 1.0
    assert coherence_decay(model, 2, 0.0) == 1.0


def test_free_induction_exponent_monotone():
    m = OU(3e5, 2e-6)
    chi = [decoherence_exponent(m, 0, t) for t in np.geomspace(1e-8, 1e-4, 20)]
    assert np.all(np.diff(chi) > 0)


def test_ou_spectrum_normalisation():
    m = OU(4e5, 3e-6)
    total = 2 * integrate.quad(lambda x: m.spectrum(x / m.tau_c) / m.tau_c, 0, np.inf)[0] / (2 * np.pi)
    assert total == pytest.approx(m.sigma ** 2, rel=1e-8)


@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_exponent_linear_in_spectrum(k, t_ms):
    m = preset("tutorial")
    t = t_ms * 1e-3
    assert decoherence_exponent(m.scaled(k), 4, t) == pytest.approx(k * decoherence_exponent(m, 4, t), rel=1e-5)


@given(st.floats(0.2, 5.0))
def test_exponent_time_rescaling(c):
    # S'(w) = S(c w) / c and T' = c T leave chi unchanged
    m = preset("tutorial")
    m2 = Tabulated(m.omega / c, m.s_of_omega / c)
    t = 2e-3
    assert decoherence_exponent(m2, 8, c * t) == pytest.approx(decoherence_exponent(m, 8, t), rel=1e-5)


def test_tutorial_spectrum_normalisation():
    m = tutorial_spectrum()
    assert decoherence_exponent(m, 32, defaults.TUTORIAL_T2_N32) == pytest.approx(1.0, rel=1e-6)


def test_quadrature_error_raised():
    with pytest.raises(QuadratureError):
        adaptive_quad(lambda x: np.sin(1e4 * x), [0.0, 1.0], rtol=1e-12, max_rounds=2)


def test_adaptive_quad_oracle():
    val, err = adaptive_quad(np.exp, np.linspace(0, 3, 4))
    assert val == pytest.approx(np.expm1(3), rel=1e-12)
    assert err < 1e-8


# --- sampling ---------------------------------------------------------------

def test_ou_trace_statistics():
    m = OU(1.0, 1e-3)
    dt = 2e-4
    x = sample_ou(m, dt, 400_000, seed=5)
    assert np.var(x) == pytest.approx(1.0, rel=0.03)
    lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert lag1 == pytest.approx(np.exp(-dt / m.tau_c), abs=0.01)
    lag10 = np.corrcoef(x[:-10], x[10:])[0, 1]
    assert lag10 == pytest.approx(np.exp(-10 * dt / m.tau_c), abs=0.02)


def test_ou_trace_deterministic():
    m = OU(1.0, 1e-3)
    np.testing.assert_array_equal(sample_ou(m, 1e-4, 100, 3), sample_ou(m, 1e-4, 100, 3))
    assert not np.array_equal(sample_ou(m, 1e-4, 100, 3), sample_ou(m, 1e-4, 100, 4))


def test_tabulated_trace_variance():
    m = preset("tutorial")
    sigma2 = np.trapezoid(m.s_of_omega, m.omega) / np.pi
    x = np.array([sample_tabulated(m, 1e-5, 50, seed=k)[0] for k in range(3000)])
    assert np.var(x) == pytest.approx(sigma2, rel=0.1)


@pytest.mark.parametrize("n,times", [(0, [1e-6, 3e-6]), (1, [1e-6, 5e-6])])
def test_ou_monte_carlo_matches_analytic(n, times):
    m = OU(2e5, 1e-6)
    mu, se = mc_coherence(m, n, times, 400, seed=3, dt=2e-9)
    want = [coherence_decay(m, n, t) for t in times]
    assert np.all(np.abs(mu - want) < 4 * se + 2e-3)


def test_tabulated_monte_carlo_matches_analytic():
    m = preset("tutorial")
    times = [0.6e-3, 1e-3]
    mu, se = mc_coherence(m, 2, times, 400, seed=3)
    want = [coherence_decay(m, 2, t) for t in times]
    assert np.all(np.abs(mu - want) < 4 * se + 5e-3)


def test_quasistatic_monte_carlo_matches_analytic():
    m = QuasiStatic(1e6)
    times = np.array([0.5e-6, 1e-6, 2e-6])
    mu, se = mc_coherence(m, 0, times, 2000, seed=1)
    assert np.all(np.abs(mu - np.exp(-0.5 * (1e6 * times) ** 2)) < 4 * se + 1e-3)


def test_quasistatic_echo_refocuses():
    mu, _ = mc_coherence(QuasiStatic(1e6), 2, [5e-6], 50, seed=1)
    assert mu[0] == pytest.approx(1.0, abs=1e-9)


# --- single 13C -------------------------------------------------------------

def test_eseem_without_perpendicular_coupling_is_flat():
    m = SingleC13(a_par=5e5, a_perp=0.0, b_mag=1000.0)
    assert modulation_depth(m) == 0.0
    np.testing.assert_allclose(eseem_echo(m, np.linspace(0, 1e-4, 50)), 1.0)


@given(st.floats(1e4, 1e6), st.floats(1e3, 1e6), st.floats(10.0, 5000.0))
def test_eseem_bounds(a_par, a_perp, b):
    m = SingleC13(a_par, a_perp, b)
    k = modulation_depth(m)
    assert 0.0 <= k <= 1.0
    e = eseem_echo(m, np.linspace(0, 2e-4, 400))
    assert np.all(e >= 1 - 2 * k - 1e-12) and np.all(e <= 1 + 1e-12)
    assert eseem_echo(m, 0.0) == 1.0


@given(st.floats(1e4, 1e6), st.floats(1e3, 1e6), st.floats(10.0, 5000.0))
def test_eseem_matches_expanded_five_cosine_form(a_par, a_perp, b):
    m = SingleC13(a_par, a_perp, b)
    _, w_a, w_b = nuclear_frequencies(m)
    k = modulation_depth(m)
    tau = np.linspace(0, 2e-4, 200)
    ca, cb = np.cos(w_a * tau), np.cos(w_b * tau)
    cm, cp = np.cos((w_a - w_b) * tau), np.cos((w_a + w_b) * tau)
    want = 1 - 0.25 * k * (2 - 2 * ca - 2 * cb + cm + cp)
    np.testing.assert_allclose(eseem_echo(m, tau), want, atol=1e-12)


def test_eseem_rejects_zero_field():
    with pytest.raises(ValueError):
        eseem_echo(SingleC13(1e5, 1e5, 0.0), 1e-6)


# --- presets and files ------------------------------------------------------

def test_presets():
    assert isinstance(preset("natural_abundance"), QuasiStatic)
    assert isinstance(preset("slow_ou"), OU)
    assert isinstance(preset("tutorial"), Tabulated)
    with pytest.raises(ValueError):
        preset("nope")


def test_natural_abundance_t2star():
    m = preset("natural_abundance")
    assert coherence_decay(m, 0, defaults.NATURAL_T2STAR) == pytest.approx(np.exp(-1))


def test_spectrum_round_trip(tmp_path):
    m = preset("tutorial")
    p = tmp_path / "s.txt"
    save_spectrum(p, m, header="test")
    back = load_spectrum(p)
    np.testing.assert_allclose(back.omega, m.omega, rtol=1e-11)
    np.testing.assert_allclose(back.s_of_omega, m.s_of_omega, rtol=1e-11)


@pytest.mark.parametrize("text", ["1 2 3\n", "# only comment\n", "2 1\n1 1\n", "0 -1\n1 1\n"])
def test_bad_spectrum_files(tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ValueError):
        load_spectrum(p)


def test_model_validation():
    with pytest.raises(ValueError):
        OU(0.0, 1.0)
    with pytest.raises(ValueError):
        QuasiStatic(-1.0)
