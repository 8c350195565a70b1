"""Calibrated default parameters.

Every default numeric value of the emitter model lives here and nowhere else.
Values that are not measured quantities are calibration parameters; the
routines in :mod:`sivsim.calibration` regenerate them.
"""

# Emitter used for the optical experiments (pumping, single-shot readout).
OPTICAL_EMITTER = dict(
    lambda_so=46.0e9,
    strain_x=0.0,
    strain_y=0.0,
    g_spin=2.0,
    q_orbital=0.1,
    lambda_so_es=255.0e9,
    strain_x_es=45.0e9,
    strain_y_es=0.0,
    g_spin_es=2.0,
    q_orbital_es=0.1,
    tau_optical=1.7e-9,
    tau_ub=200e-9,
    gamma0_phonon=9970121.182462543,
    branch_ub=0.2,
    gamma_t1=1.0,
    delta_g=0.0,
    r_max=2.188254251860595e8,
    offres_fraction=8.670935086502424e-3,
    eta_collect=2.1137068992247443e-5,
)

# Strained emitter (Delta_GS ~ 80 GHz) used for microwave control. delta_g
# puts the quasi-static Ramsey T2* at 1.5 us for a 3 kG field.
MW_EMITTER = dict(OPTICAL_EMITTER, strain_x=32.7e9, delta_g=3.573642040861473e-05)

# Field and temperature at which gamma0_phonon is calibrated: the spin-echo
# coherence time of the strained emitter at 600 mK is 60 us.
PHONON_CAL_FIELD = (1600.0, 0.0)
PHONON_CAL_TEMPERATURE = 0.6
PHONON_CAL_T2 = 60e-6

# Pumping cases: (alpha [deg], b_mag [G], measured pumping time [s]).
PUMPING_CASES = (
    (88.0, 2900.0, 140e-9),
    (57.0, 3000.0, 10e-6),
    (45.0, 1700.0, 3e-3),
    (0.5, 2700.0, 30e-3),
)
# Effective misalignment of the nominally aligned case (caption bound: < 0.5 deg).
ALIGNED_ALPHA = 0.4201376396447241
PUMP_SATURATION = 1.0
READOUT_SATURATION = 1.0
READOUT_WINDOW = 20e-3

# Noise presets.
NATURAL_T2STAR = 300e-9  # quasi-static dephasing time of the natural-abundance sample
SLOW_OU_SIGMA = 1.0e5  # rad/s
SLOW_OU_TAU_C = 10e-3  # s
# Tutorial spectrum: Gaussian low-pass S0 exp(-(w/wc)^2), scaled so T2(N=32) = 13 ms.
TUTORIAL_WC = 1.0e3  # rad/s
TUTORIAL_T2_N32 = 13e-3
