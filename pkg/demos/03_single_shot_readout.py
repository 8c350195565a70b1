"""
Single-shot readout
===================

A 20 ms readout pulse on the |down> transition gives a handful of
detected photons for |down> and almost none for |up>.  Thresholding the
count separates the two.  Spin flips during readout pull the |down>
histogram towards zero and cost fidelity compared with pure Poisson
statistics.
"""
from sivsim import defaults
from sivsim.model import FieldConfig, SivParams, rate_set
from sivsim.readout import (
    build_histograms, poisson_fidelity, readout_statistics, simulate_counts, threshold_fidelity,
)

params = SivParams.preset("optical")
field = FieldConfig(2700.0, defaults.ALIGNED_ALPHA)
rates = rate_set(params, field, 0.1, defaults.READOUT_SATURATION)
window = defaults.READOUT_WINDOW

shots = 2000
down = simulate_counts(0, rates, window, params.eta_collect, shots, seed=1, stream=0)
up = simulate_counts(1, rates, window, params.eta_collect, shots, seed=1, stream=1)
hist = build_histograms(down, up, window)
f_down, f_up, f_avg = threshold_fidelity(hist, 1)
print(f"mean counts: down {down.mean():.2f}, up {up.mean():.2f}")
print(f"threshold n > 1: F_down {f_down:.3f}, F_up {f_up:.3f}, F_avg {f_avg:.3f}")

exact = readout_statistics(rates, window, params.eta_collect, 1)
print(f"exact master-equation F_avg: {exact['f_avg']:.3f}")
print(f"Poisson limit at the same means: {poisson_fidelity(down.mean(), up.mean(), 1)[2]:.3f}")
