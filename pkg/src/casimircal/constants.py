"""Physical constants (CODATA 2018, SI units).

Kept in one place so every derived number in the package is reproducible.
"""

EPSILON_0 = 8.8541878128e-12  # F/m
HBAR = 1.054571817e-34  # J s
C_LIGHT = 299792458.0  # m/s
HBAR_C = HBAR * C_LIGHT  # J m
