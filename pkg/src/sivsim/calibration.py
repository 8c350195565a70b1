"""Two-point pumping calibration and readout calibration.

The pumping calibration fixes the scattering ceiling ``r_max`` from the
misaligned 88 deg case and the effective misalignment of the nominally
aligned case from its 30 ms pumping time. The readout calibration then
fixes ``eta_collect`` and ``offres_fraction`` from the two mean photon
numbers. The resulting numbers are frozen in :mod:`sivsim.defaults`.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from . import defaults
from .model import (LB_DOWN, LB_UP, FieldConfig, SivParams, bose_occupation, generator, level_diagram,
                    level_graph, rate_set)
from .readout import expected_emissions

TARGET_MEAN_DOWN = 6.2
TARGET_MEAN_UP = 0.52


def mean_pumping_time(params: SivParams, field_cfg: FieldConfig, temperature=0.1,
                      saturation=defaults.PUMP_SATURATION, start=LB_DOWN, target=LB_UP):
    """Mean first-passage time start -> target of the driven six-level process."""
    q, _ = level_graph(rate_set(params, field_cfg, temperature, saturation))
    g = generator(q)
    keep = [i for i in range(g.shape[0]) if i != target]
    t = np.linalg.solve(g[np.ix_(keep, keep)], -np.ones(len(keep)))
    return float(t[keep.index(start)])


def pumping_cases(aligned_alpha=defaults.ALIGNED_ALPHA):
    """The four (FieldConfig, target time) pumping cases, aligned angle substituted."""
    out = []
    for alpha, b, tau in defaults.PUMPING_CASES:
        a = aligned_alpha if alpha < 1 else alpha
        out.append((FieldConfig(b, a), tau))
    return out


def calibrate_pumping(params: SivParams, temperature=0.1, saturation=defaults.PUMP_SATURATION):
    """Return ``(r_max, aligned_alpha)`` matching the 88 deg and aligned cases."""
    (f_mis, tau_mis), _, _, (f_al, tau_al) = pumping_cases(aligned_alpha=0.5)

    def err_r(log_r):
        p = params.replace(r_max=float(np.exp(log_r)))
        return np.log(mean_pumping_time(p, f_mis, temperature, saturation) / tau_mis)

    r_max = float(np.exp(brentq(err_r, np.log(1e5), np.log(1e10), xtol=1e-12)))
    p = params.replace(r_max=r_max)

    def err_a(alpha):
        return np.log(mean_pumping_time(p, FieldConfig(f_al.b_mag, alpha), temperature, saturation) / tau_al)

    alpha = float(brentq(err_a, 1e-3, 5.0, xtol=1e-12))
    return r_max, alpha


def readout_means(params: SivParams, field_cfg: FieldConfig, window=defaults.READOUT_WINDOW,
                  temperature=0.1, saturation=defaults.READOUT_SATURATION):
    """Exact mean collected counts for |down> and |up> preparations."""
    q, rad = level_graph(rate_set(params, field_cfg, temperature, saturation))
    out = []
    for lvl in (LB_DOWN, LB_UP):
        p0 = np.zeros(6)
        p0[lvl] = 1.0
        out.append(params.eta_collect * expected_emissions(p0, q, rad, window))
    return tuple(out)


def calibrate_readout(params: SivParams, field_cfg: FieldConfig, window=defaults.READOUT_WINDOW,
                      temperature=0.1, saturation=defaults.READOUT_SATURATION,
                      mean_down=TARGET_MEAN_DOWN, mean_up=TARGET_MEAN_UP):
    """Return ``(eta_collect, offres_fraction)`` reproducing the two readout means."""

    def solve_eta(frac):
        p = params.replace(offres_fraction=frac, eta_collect=1.0)
        n_down, n_up = readout_means(p, field_cfg, window, temperature, saturation)
        return mean_down / n_down, n_up

    def err(frac):
        eta, n_up = solve_eta(frac)
        return eta * n_up - mean_up

    frac = float(brentq(err, 0.0, 1.0, xtol=1e-14))
    return solve_eta(frac)[0], frac


def calibrate_phonon(params: SivParams, field_cfg: FieldConfig = None,
                     temperature=defaults.PHONON_CAL_TEMPERATURE, t2=defaults.PHONON_CAL_T2):
    """gamma0_phonon giving a phonon-limited coherence time ``t2`` at ``temperature``.

    Coherence decays at gamma_plus = gamma0 * n(Delta_GS, T); the intrinsic
    T1 channel is included.
    """
    if field_cfg is None:
        field_cfg = FieldConfig(*defaults.PHONON_CAL_FIELD)
    d = level_diagram(params, field_cfg)
    n = float(bose_occupation(d.delta_gs, temperature))
    rate = 1.0 / t2 - 0.5 * params.gamma_t1
    if rate <= 0:
        raise ValueError("target coherence time is not reachable")
    return rate / n
