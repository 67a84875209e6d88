"""Heating rates, electric-field noise densities, and scaling-law fits.

The central conversion is S_E(omega) = 4 m hbar omega ndot / q^2 between a
measured heating rate (quanta/s) and the one-sided electric-field noise
spectral density at the ion.  Densities are normalized across secular
frequency with a power-law model (omega^-1 by default) so traps measured at
different frequencies can be compared, and across trap size with a distance
exponent.  Uncertainties propagate to first order (delta method).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import BOLTZMANN, HBAR
from .pseudopotential import IonSpecies

OMEGA_REF_1MHZ = 2.0 * math.pi * 1.0e6


def noise_from_heating(ndot: float, omega: float, species: IonSpecies,
                       ndot_sigma: float = 0.0) -> tuple[float, float]:
    """Heating rate (quanta/s) at omega (rad/s) -> S_E (V^2/m^2/Hz) with sigma."""
    if omega <= 0.0:
        raise ValueError("omega must be > 0")
    factor = 4.0 * species.mass * HBAR * omega / species.charge ** 2
    return factor * ndot, factor * ndot_sigma


def heating_from_noise(s_e: float, omega: float, species: IonSpecies) -> float:
    """Exact inverse of noise_from_heating."""
    if omega <= 0.0:
        raise ValueError("omega must be > 0")
    return s_e * species.charge ** 2 / (4.0 * species.mass * HBAR * omega)


def normalize_frequency(s_e: float, omega: float, omega_ref: float = OMEGA_REF_1MHZ,
                        alpha: float = -1.0) -> float:
    """Value the omega^alpha model predicts at omega_ref given S_E at omega."""
    if omega <= 0.0 or omega_ref <= 0.0:
        raise ValueError("frequencies must be > 0")
    return s_e * (omega / omega_ref) ** (-alpha)


def johnson_voltage_noise(temperature: float, resistance: float) -> float:
    """One-sided Johnson voltage noise 4 k_B T R (V^2/Hz)."""
    if temperature < 0.0 or resistance < 0.0:
        raise ValueError("temperature and resistance must be >= 0")
    return 4.0 * BOLTZMANN * temperature * resistance


# Geometric voltage-to-field factor of the reference trap family, quoted per
# 100 um of trap size: E at the ion is ~200 V/m per volt on the DC electrodes
# of a 100 um trap, scaling as 1/d.
DEFAULT_TRANSFER_PER_100UM = 200.0
_D_REF_100UM = 100e-6


def technical_field_noise(s_v: float, d: float,
                          transfer_factor: float | None = None) -> float:
    """Field noise density from voltage noise S_V on the DC electrodes.

    With no explicit transfer factor the default geometric factor
    (200 * 100um/d per meter) is used; a caller-supplied factor (1/m), e.g.
    from electrostatics.field_noise_transfer, overrides it.
    """
    if d <= 0.0:
        raise ValueError("d must be > 0")
    if transfer_factor is None:
        transfer_factor = DEFAULT_TRANSFER_PER_100UM * (_D_REF_100UM / d)
    return s_v * transfer_factor ** 2


@dataclass(frozen=True)
class NoiseModel:
    """Power-law field-noise model anchored at (d_ref, omega_ref).

    S_E(d, omega) = S_E_ref * (omega/omega_ref)^alpha * (d/d_ref)^beta
    """

    s_e_ref: float
    d_ref: float
    omega_ref: float = OMEGA_REF_1MHZ
    freq_exponent: float = -1.0
    distance_exponent: float = -4.0

    def __post_init__(self):
        if self.s_e_ref <= 0.0:
            raise ValueError("s_e_ref must be > 0")
        if self.d_ref <= 0.0 or self.omega_ref <= 0.0:
            raise ValueError("reference scales must be > 0")

    @classmethod
    def from_heating_rate(cls, ndot: float, omega: float, d: float,
                          species: IonSpecies, **kwargs) -> "NoiseModel":
        s_e, _ = noise_from_heating(ndot, omega, species)
        s_e_ref = normalize_frequency(s_e, omega, kwargs.get("omega_ref", OMEGA_REF_1MHZ),
                                      kwargs.get("freq_exponent", -1.0))
        return cls(s_e_ref=s_e_ref, d_ref=d, **kwargs)

    def s_e(self, d: float, omega: float) -> float:
        if d <= 0.0 or omega <= 0.0:
            raise ValueError("d and omega must be > 0")
        return (self.s_e_ref
                * (omega / self.omega_ref) ** self.freq_exponent
                * (d / self.d_ref) ** self.distance_exponent)

    def heating_rate(self, d: float, omega: float, species: IonSpecies) -> float:
        return heating_from_noise(self.s_e(d, omega), omega, species)


@dataclass(frozen=True)
class PowerLawFit:
    """y = amplitude * x^exponent from a weighted log-log fit."""

    exponent: float
    exponent_sigma: float
    amplitude: float
    amplitude_sigma: float
    residual_norm: float
    n_points: int

    def predict(self, x):
        return self.amplitude * np.asarray(x) ** self.exponent


def fit_power_law(x, y, y_sigma=None) -> PowerLawFit:
    """Weighted least squares of ln y on ln x.

    Weights come from the relative errors sigma_y/y (absolute-sigma
    convention: the parameter covariance is not rescaled by the residuals).
    Without sigmas the fit is unweighted and the covariance is scaled by the
    residual variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if len(x) < 2:
        raise ValueError("need at least 2 points")
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise ValueError("power-law fit needs positive x and y")

    lx, ly = np.log(x), np.log(y)
    if y_sigma is not None:
        y_sigma = np.asarray(y_sigma, dtype=float)
        if np.any(y_sigma <= 0.0):
            raise ValueError("y_sigma must be > 0")
        w = (y / y_sigma) ** 2
    else:
        w = np.ones_like(y)

    a = np.column_stack([lx, np.ones_like(lx)])
    aw = a * w[:, None]
    ata = a.T @ aw
    beta = np.linalg.solve(ata, aw.T @ ly)
    resid = ly - a @ beta
    cov = np.linalg.inv(ata)
    if y_sigma is None:
        dof = max(len(x) - 2, 1)
        cov = cov * float(resid @ (w * resid)) / dof
    exponent, log_amp = beta
    sig_exp, sig_log_amp = np.sqrt(np.diag(cov))
    amplitude = math.exp(log_amp)
    return PowerLawFit(exponent=float(exponent), exponent_sigma=float(sig_exp),
                       amplitude=amplitude, amplitude_sigma=amplitude * float(sig_log_amp),
                       residual_norm=float(np.sqrt(resid @ (w * resid))),
                       n_points=len(x))


@dataclass(frozen=True)
class NoiseMeasurement:
    """One heating-rate measurement converted to field-noise densities."""

    trap_size_d: float
    secular_frequency: float
    heating_rate: float
    heating_rate_sigma: float
    temperature_K: float
    s_e: float = field(init=False, default=0.0)
    s_e_sigma: float = field(init=False, default=0.0)
    s_e_normalized_1mhz: float = field(init=False, default=0.0)
    s_e_normalized_1mhz_sigma: float = field(init=False, default=0.0)
    label: str = ""
    species: IonSpecies | None = None
    freq_exponent: float = -1.0

    def __post_init__(self):
        if self.heating_rate < 0.0 or self.heating_rate_sigma < 0.0:
            raise ValueError("heating rate and sigma must be >= 0")
        if self.species is None:
            raise ValueError("species is required")
        s_e, s_e_sigma = noise_from_heating(self.heating_rate, self.secular_frequency,
                                            self.species, self.heating_rate_sigma)
        scale = (self.secular_frequency / OMEGA_REF_1MHZ) ** (-self.freq_exponent)
        object.__setattr__(self, "s_e", s_e)
        object.__setattr__(self, "s_e_sigma", s_e_sigma)
        object.__setattr__(self, "s_e_normalized_1mhz", s_e * scale)
        object.__setattr__(self, "s_e_normalized_1mhz_sigma", s_e_sigma * scale)

    def to_row(self) -> dict:
        return {
            "d_m": self.trap_size_d,
            "omega_rad_s": self.secular_frequency,
            "ndot": self.heating_rate,
            "ndot_sigma": self.heating_rate_sigma,
            "T_K": self.temperature_K,
            "S_E": self.s_e,
            "S_E_sigma": self.s_e_sigma,
            "S_E_1MHz": self.s_e_normalized_1mhz,
            "S_E_1MHz_sigma": self.s_e_normalized_1mhz_sigma,
            "label": self.label,
        }
