"""Sideband thermometry: scan synthesis, Gaussian fits, nbar and heating-rate
estimation.

Sideband lines are broadened by laser linewidth and drift well beyond the
Fourier width, so scans are modeled as the pulse-averaged peak excitation
modulated by a Gaussian in detuning and fit with a Gaussian; the mean
occupation follows from the fitted red/blue amplitude ratio r via
nbar = r / (1 - r) (thermal-state estimator), and the heating rate from a
weighted linear fit of nbar against readout delay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .cooling import FockDistribution


class FitError(RuntimeError):
    """Nonlinear fit failed to converge; carries residual diagnostics."""


@dataclass(frozen=True)
class SidebandScan:
    """Measured (or synthesized) excitation probability vs detuning."""

    detunings: np.ndarray
    excitation: np.ndarray
    shots_per_point: int
    side: str

    def __post_init__(self):
        det = np.asarray(self.detunings, dtype=float)
        exc = np.asarray(self.excitation, dtype=float)
        object.__setattr__(self, "detunings", det)
        object.__setattr__(self, "excitation", exc)
        if det.shape != exc.shape or det.ndim != 1:
            raise ValueError("detunings and excitation must be 1-D and equal length")
        if np.any(exc < 0.0) or np.any(exc > 1.0):
            raise ValueError("excitation must lie in [0, 1]")
        if self.shots_per_point < 1:
            raise ValueError("shots_per_point must be >= 1")
        if self.side not in ("red", "blue"):
            raise ValueError("side must be 'red' or 'blue'")


@dataclass(frozen=True)
class GaussianFit:
    """A exp(-(x - x0)^2 / (2 w^2)) fit result."""

    amplitude: float
    amplitude_sigma: float
    center: float
    center_sigma: float
    width: float
    width_sigma: float
    residual_norm: float
    low_signal: bool = False


@dataclass(frozen=True)
class HeatingSeries:
    """(delay, nbar, sigma) samples from delayed thermometry."""

    delays: np.ndarray
    nbars: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        n = np.asarray(self.nbars, dtype=float)
        s = np.asarray(self.sigmas, dtype=float)
        for name, arr in (("delays", d), ("nbars", n), ("sigmas", s)):
            object.__setattr__(self, name, arr)
        if not (d.shape == n.shape == s.shape) or d.ndim != 1:
            raise ValueError("delays, nbars, sigmas must be 1-D and equal length")
        if np.any(d < 0.0):
            raise ValueError("delays must be >= 0")
        if np.any(s <= 0.0):
            raise ValueError("sigmas must be > 0")


def sideband_excitation(dist: FockDistribution, eta: float, omega0: float,
                        duration: float, side: str) -> float:
    """Pulse-averaged excitation on the red or blue sideband peak.

    red:  sum_n p_n sin^2(eta sqrt(n)   Omega0 t / 2)
    blue: sum_n p_n sin^2(eta sqrt(n+1) Omega0 t / 2)
    """
    n = np.arange(len(dist.p), dtype=float)
    if side == "red":
        rabi = eta * np.sqrt(n) * omega0
    elif side == "blue":
        rabi = eta * np.sqrt(n + 1.0) * omega0
    else:
        raise ValueError("side must be 'red' or 'blue'")
    return float(dist.p @ np.sin(rabi * duration / 2.0) ** 2)


def blue_pi_time(eta: float, omega0: float) -> float:
    """pi time of the n=0 blue sideband, the default probe duration."""
    return math.pi / (eta * omega0)


def synthesize_scan(dist: FockDistribution, eta: float, omega0: float,
                    duration: float, side: str, detunings, linewidth_sigma: float,
                    shots: int, seed: int) -> SidebandScan:
    """Simulated scan: Gaussian lineshape around the peak plus shot noise.

    The noiseless profile is peak * exp(-delta^2 / (2 sigma_line^2)); each
    point is then binomially sampled with the given shot count.  A fixed seed
    makes the scan reproducible.
    """
    if linewidth_sigma <= 0.0:
        raise ValueError("linewidth_sigma must be > 0")
    detunings = np.asarray(detunings, dtype=float)
    peak = sideband_excitation(dist, eta, omega0, duration, side)
    profile = peak * np.exp(-detunings ** 2 / (2.0 * linewidth_sigma ** 2))
    rng = np.random.default_rng(seed)
    sampled = rng.binomial(shots, np.clip(profile, 0.0, 1.0)) / shots
    return SidebandScan(detunings=detunings, excitation=sampled,
                        shots_per_point=shots, side=side)


def _gauss(x, amp, center, width):
    return amp * np.exp(-(x - center) ** 2 / (2.0 * width ** 2))


def fit_gaussian(scan: SidebandScan, max_iterations: int = 2000) -> GaussianFit:
    """Levenberg-Marquardt Gaussian fit of a scan.

    Initial guesses: amplitude from the maximum, center from the argmax,
    width from the second moment.  Per-point sigmas are binomial shot noise
    (with an add-one floor so empty points keep finite weight); the parameter
    covariance uses them as absolute errors.  An all-zero scan short-circuits
    to a zero-amplitude result flagged low_signal.
    """
    x, y, shots = scan.detunings, scan.excitation, scan.shots_per_point
    if len(x) < 4:
        raise ValueError("need at least 4 points to fit")
    span = x.max() - x.min()
    shot_floor = math.sqrt(0.25 / shots)
    if np.all(y <= 0.0):
        return GaussianFit(amplitude=0.0, amplitude_sigma=shot_floor,
                           center=float(x[len(x) // 2]), center_sigma=span,
                           width=span / 4.0, width_sigma=span,
                           residual_norm=0.0, low_signal=True)

    p_smooth = (y * shots + 1.0) / (shots + 2.0)
    sigma = np.sqrt(p_smooth * (1.0 - p_smooth) / shots)
    amp0 = float(y.max())
    c0 = float(x[int(np.argmax(y))])
    w0 = math.sqrt(max(float(np.sum(y * (x - c0) ** 2) / np.sum(y)), (span / 50.0) ** 2))
    try:
        popt, pcov = curve_fit(_gauss, x, y, p0=[amp0, c0, w0], sigma=sigma,
                               absolute_sigma=True, maxfev=max_iterations)
    except RuntimeError as err:
        resid = y - _gauss(x, amp0, c0, w0)
        raise FitError(f"gaussian fit did not converge: {err}; "
                       f"initial residual norm {np.linalg.norm(resid):.3g}") from err
    amp, center, width = popt
    sig = np.sqrt(np.diag(pcov))
    resid = float(np.linalg.norm(y - _gauss(x, *popt)))
    return GaussianFit(amplitude=float(amp), amplitude_sigma=float(sig[0]),
                       center=float(center), center_sigma=float(sig[1]),
                       width=abs(float(width)), width_sigma=float(sig[2]),
                       residual_norm=resid,
                       low_signal=bool(abs(amp) < 2.0 * sig[0]))


def nbar_from_ratio(ratio: float, ratio_sigma: float = 0.0) -> tuple[float, float]:
    """Thermal-state occupation from the red/blue amplitude ratio.

    nbar = r / (1 - r); sigma by the delta method sigma_r / (1 - r)^2.
    r >= 1 is inconsistent with a thermal state (the estimator's validity
    ends there) and raises.
    """
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"ratio must be in [0, 1) for a thermal state, got {ratio}")
    nbar = ratio / (1.0 - ratio)
    return nbar, ratio_sigma / (1.0 - ratio) ** 2


def nbar_from_scans(red: SidebandScan, blue: SidebandScan) -> tuple[float, float]:
    """Fit both scans and convert the amplitude ratio to (nbar, sigma)."""
    fit_r = fit_gaussian(red)
    fit_b = fit_gaussian(blue)
    if fit_b.amplitude <= 0.0:
        raise FitError("blue sideband amplitude is non-positive")
    r = max(fit_r.amplitude, 0.0) / fit_b.amplitude
    r_sigma = abs(r) * math.hypot(
        fit_r.amplitude_sigma / max(abs(fit_r.amplitude), fit_r.amplitude_sigma),
        fit_b.amplitude_sigma / fit_b.amplitude)
    if r == 0.0:
        r_sigma = fit_r.amplitude_sigma / fit_b.amplitude
    return nbar_from_ratio(min(r, 1.0 - 1e-12), r_sigma)


def fit_heating_rate(series: HeatingSeries) -> dict:
    """Weighted linear fit of nbar vs delay.

    Returns slope (the heating rate, quanta/s) and intercept with
    covariance-derived sigmas, plus chi-square.
    """
    t, n, s = series.delays, series.nbars, series.sigmas
    if len(np.unique(t)) < 2:
        raise ValueError("need at least 2 distinct delays")
    w = 1.0 / s ** 2
    a = np.column_stack([t, np.ones_like(t)])
    aw = a * w[:, None]
    ata = a.T @ aw
    beta = np.linalg.solve(ata, aw.T @ n)
    cov = np.linalg.inv(ata)
    resid = n - a @ beta
    chi2 = float(resid @ (w * resid))
    return {
        "ndot": float(beta[0]),
        "ndot_sigma": float(math.sqrt(cov[0, 0])),
        "intercept": float(beta[1]),
        "intercept_sigma": float(math.sqrt(cov[1, 1])),
        "chi2": chi2,
        "n_points": len(t),
    }
