"""
Orbital polarization of the ground state
========================================

The two ground-state orbital branches are split by Delta_GS, a few tens of GHz.
Below about 1 K phonons can no longer populate the upper branch, so the
upper-branch PLE line fades with a Boltzmann factor.  We read that ratio
off simulated PLE spectra and fit the splitting back.
"""
import numpy as np

from sivsim.analysis import fit_boltzmann
from sivsim.model import FieldConfig, SivParams, level_diagram, phonon_rates, ple_line_ratio, ple_spectrum

params = SivParams.preset("optical")
field = FieldConfig(0.0, 0.0)
dgs = level_diagram(params, field).delta_gs
print(f"ground-state splitting: {dgs / 1e9:.2f} GHz")

# line ratio I_upper / I_lower at a handful of temperatures, 5% noise
linewidth = 5e9
temps = np.geomspace(0.1, 10, 15)
rng = np.random.default_rng(0)
ratios = []
for t in temps:
    spec = ple_spectrum(params, field, t, linewidth, np.array([-dgs, 0.0]))
    ratios.append(ple_line_ratio(spec, dgs, linewidth) * (1 + 0.05 * rng.standard_normal()))
ratios = np.array(ratios)

fit = fit_boltzmann(temps, ratios, 0.05 * ratios)
print(f"fitted splitting:       {fit['delta_fit'] / 1e9:.2f} +- {fit.sigmas['delta_fit'] / 1e9:.2f} GHz")

# fraction of population in the lower orbital branch
for t in (0.1, 0.5, 4.0):
    print(f"  T = {t:4.1f} K: lower-branch population {phonon_rates(params, dgs, t)[2]:.4f}")
