"""Physical constants (CODATA 2018, exact SI definitions where available)."""

from scipy import constants as _sc

R_GAS = _sc.R  # J/(mol K)
K_BOLTZMANN = _sc.k  # J/K
H_PLANCK = _sc.h  # J s

# Concentrations below this magnitude (nmol/cm^3) are treated as zero in rate laws.
CLAMP_TOL = 1e-12
