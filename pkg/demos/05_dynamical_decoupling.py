"""
Dynamical decoupling
====================

A CPMG train of N pi pulses acts as a band-pass filter on the frequency
noise.  For an Ornstein-Uhlenbeck bath the coherence W(T) follows from
the filter function; Monte Carlo trajectories of the same bath agree.
Fitting T2 versus N gives the decoupling exponent beta.
"""
import numpy as np

from sivsim.analysis import fit_decay, fit_power_law
from sivsim.noise import OU, coherence_decay, mc_coherence, preset

bath = OU(1e5, 1e-4)
for n in (1, 4):
    print(f"N = {n}")
    for total in (50e-6, 100e-6, 200e-6):
        w_mc, err = mc_coherence(bath, n, [total], n_shots=4000, seed=n)
        print(f"  T = {total * 1e6:5.0f} us: analytic {coherence_decay(bath, n, total):.3f}, "
              f"Monte Carlo {w_mc[0]:.3f} +- {err[0]:.3f}")

# T2 scaling for a slow bath
slow = preset("slow_ou")
ns, t2 = [1, 2, 4, 8, 16], []
for n in ns:
    times = np.geomspace(1e-6, 1e-1, 80)
    w = np.array([coherence_decay(slow, n, t) for t in times])
    keep = (w > 1e-3) & (w < 0.999)
    t2.append(fit_decay(times[keep], w[keep], model="stretched")["t_decay"])
beta = fit_power_law(ns, t2)["beta"]
print(f"slow bath: T2 ~ N^beta with beta = {beta:.3f}")
