"""Physical constants (CODATA 2018 exact values).

All internal dynamics are dimensionless; these constants appear only when
converting between physical inputs (rotational constants in cm^-1, temperature
in kelvin, times in seconds) and the dimensionless working units.
"""

import math

PLANCK_H = 6.62607015e-34           # J s
HBAR = PLANCK_H / (2 * math.pi)     # J s
SPEED_OF_LIGHT_CM = 2.99792458e10   # cm/s (rotational constants are in cm^-1)
BOLTZMANN_K = 1.380649e-23          # J/K
