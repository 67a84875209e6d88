"""surftrap: surface-electrode ion trap electrostatics, pseudopotential
solving, sideband cooling and heating simulation, and field-noise analysis."""

__version__ = "0.1.0"

from .cooling import CoolingSequence, FockDistribution, evolve_heating, run_cooling
from .electrostatics import BasisPotentials, VoltageSet, build_basis, field_noise_transfer
from .geometry import Electrode, FiveRodParams, TrapLayout, build_five_rod, five_rod_profile
from .noise import NoiseModel, fit_power_law, heating_from_noise, noise_from_heating
from .pseudopotential import SR88, IonSpecies, TrapSolution, solve_trap

__all__ = [
    "BasisPotentials", "CoolingSequence", "Electrode", "FiveRodParams",
    "FockDistribution", "IonSpecies", "NoiseModel", "SR88", "TrapLayout",
    "TrapSolution", "VoltageSet", "build_basis", "build_five_rod",
    "evolve_heating", "field_noise_transfer", "fit_power_law",
    "five_rod_profile", "heating_from_noise", "noise_from_heating",
    "run_cooling", "solve_trap",
]
