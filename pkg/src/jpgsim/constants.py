"""Physical constants (SI, CODATA exact values where defined)."""

from scipy import constants as _c

#: Magnetic flux quantum h / 2e in webers.
PHI0: float = _c.h / (2.0 * _c.e)

HBAR: float = _c.hbar
