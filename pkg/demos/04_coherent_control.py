"""
Rabi oscillations and Ramsey fringes
====================================

With a strained emitter the microwave field drives the spin directly.
A Rabi sweep calibrates the pulse; a Ramsey sweep with a deliberate
detuning shows fringes whose envelope is set by quasi-static g-factor
noise, so T2* shrinks as the field grows.
"""
import numpy as np

from sivsim import defaults
from sivsim.analysis import fit_oscillation
from sivsim.experiment import System, run_experiment
from sivsim.model import FieldConfig, SivParams
from sivsim.sequences import build_rabi, build_ramsey

params = SivParams.preset("mw")

system = System(params.replace(delta_g=0.0), FieldConfig(1600.0, defaults.ALIGNED_ALPHA), 0.1)
t = np.linspace(0, 200e-9, 41)
tab = run_experiment(build_rabi(t, 10e6, shots=200), system, seed=2)
fit = fit_oscillation(t, tab["signal"], envelope="exp")
print(f"Rabi frequency: {fit['frequency'] / 1e6:.2f} MHz (driven at 10 MHz)")

tau = np.linspace(0, 6e-6, 61)
for b in (750.0, 3000.0):
    system = System(params, FieldConfig(b, defaults.ALIGNED_ALPHA), 0.1)
    tab = run_experiment(build_ramsey(tau * 750.0 / b, 550e3 * b / 750.0, shots=300), system, seed=3)
    fit = fit_oscillation(tab["sweep"], tab["signal"], envelope="gauss")
    print(f"B = {b:6.0f} G: fringe {fit['frequency'] / 1e3:7.1f} kHz, T2* = {fit['t_decay'] * 1e6:.2f} us, "
          f"T2* x B = {fit['t_decay'] * b * 1e3:.2f} us kG")
