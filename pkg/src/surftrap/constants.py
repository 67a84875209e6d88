"""Physical constants used throughout the package.

Everything is SI.  Values are taken from scipy's CODATA tables so that the
whole chain (noise conversions, Lamb-Dicke factors, thermal occupations)
shares one source of truth.  `constants_metadata` is what the CLI and the
service print alongside numerical results.
"""

from scipy.constants import (
    atomic_mass as ATOMIC_MASS_KG,
    e as ELEMENTARY_CHARGE,
    hbar as HBAR,
    k as BOLTZMANN,
)

# Mass number 88 strontium, in atomic mass units.
SR88_MASS_U = 87.905612
SR88_MASS_KG = SR88_MASS_U * ATOMIC_MASS_KG

# S-D quadrupole cooling transition wavelength (m).
SR88_COOLING_WAVELENGTH = 674e-9


def constants_metadata() -> dict:
    """Constants block embedded in tool output for traceability."""
    return {
        "hbar_J_s": HBAR,
        "boltzmann_J_K": BOLTZMANN,
        "elementary_charge_C": ELEMENTARY_CHARGE,
        "atomic_mass_kg": ATOMIC_MASS_KG,
        "sr88_mass_u": SR88_MASS_U,
        "sr88_mass_kg": SR88_MASS_KG,
    }
