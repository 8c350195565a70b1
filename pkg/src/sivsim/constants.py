"""Pinned physical constants (SI unless noted)."""

H_PLANCK = 6.62607015e-34  # J s
K_B = 1.380649e-23  # J / K
MU_B_HZ_PER_G = 1.3996246e6  # Bohr magneton / h, Hz per Gauss
GAMMA_C13_HZ_PER_G = 1.0705e3  # 13C gyromagnetic ratio / 2pi, Hz per Gauss

TWO_PI = 6.283185307179586


def boltzmann_exponent(freq_hz, temperature):
    """Return h*f / (k_B*T)."""
    return H_PLANCK * freq_hz / (K_B * temperature)
