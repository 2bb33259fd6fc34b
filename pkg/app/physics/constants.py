"""
Physical constants (CODATA 2018, 10 significant digits).

The only place in the package where SI constants are defined.
"""

HBAR = 1.054571817e-34        # J s
ELEMENTARY_CHARGE = 1.602176634e-19   # C
PLANCK = 6.626070150e-34      # J s

# Superconducting flux quantum h / 2e
FLUX_QUANTUM = PLANCK / (2.0 * ELEMENTARY_CHARGE)   # Wb
