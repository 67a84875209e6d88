import math

import numpy as np
import pytest

from surftrap.cooling import FockDistribution, lamb_dicke, thermal_distribution
from surftrap.pseudopotential import SR88
from surftrap.thermometry import (HeatingSeries, SidebandScan,
                                  blue_pi_time, fit_gaussian, fit_heating_rate,
                                  nbar_from_ratio, nbar_from_scans, sideband_excitation,
                                  synthesize_scan)

ETA = lamb_dicke(SR88, 674e-9, 2 * math.pi * 1e6)
OMEGA0 = 2 * math.pi * 283e3


def fock(n, n_max=60):
    p = np.zeros(n_max + 1)
    p[n] = 1.0
    return FockDistribution(p)


def test_ground_state_asymmetry():
    ground = thermal_distribution(0.0, 50)
    t = blue_pi_time(ETA, OMEGA0)
    assert sideband_excitation(ground, ETA, OMEGA0, t, "red") == 0.0
    assert sideband_excitation(ground, ETA, OMEGA0, t, "blue") == pytest.approx(1.0, abs=1e-10)


def test_perturbative_ratio_equals_thermal_estimator():
    # in the short-pulse limit red/blue -> nbar/(nbar+1); both sums reduce to
    # first moments, so this is an identity for any occupation distribution
    for nbar in (0.11, 0.5, 2.0):
        dist = thermal_distribution(nbar, 400)
        t = 0.05 / (OMEGA0 * ETA * math.sqrt(len(dist.p)))
        red = sideband_excitation(dist, ETA, OMEGA0, t, "red")
        blue = sideband_excitation(dist, ETA, OMEGA0, t, "blue")
        assert red / blue == pytest.approx(nbar / (nbar + 1.0), rel=0.01)
        assert red <= blue


def test_blue_pi_pulse_on_n1():
    t = math.pi / (ETA * math.sqrt(2.0) * OMEGA0)
    assert sideband_excitation(fock(1), ETA, OMEGA0, t, "blue") == pytest.approx(1.0, abs=1e-10)


def test_scan_statistical_convergence():
    dist = thermal_distribution(0.5, 100)
    t = blue_pi_time(ETA, OMEGA0)
    lw = 2 * math.pi * 20e3
    det = np.linspace(-3 * lw, 3 * lw, 21)
    peak = sideband_excitation(dist, ETA, OMEGA0, t, "blue")
    noiseless = peak * np.exp(-det ** 2 / (2 * lw ** 2))
    scan = synthesize_scan(dist, ETA, OMEGA0, t, "blue", det, lw, shots=100_000, seed=5)
    sigma = np.sqrt(noiseless * (1 - noiseless) / 100_000)
    assert np.all(np.abs(scan.excitation - noiseless) <= 3.5 * sigma + 1e-12)


def test_ground_red_scan_is_dark():
    ground = thermal_distribution(0.0, 50)
    lw = 2 * math.pi * 20e3
    det = np.linspace(-3 * lw, 3 * lw, 21)
    scan = synthesize_scan(ground, ETA, OMEGA0, blue_pi_time(ETA, OMEGA0),
                           "red", det, lw, shots=1000, seed=3)
    assert np.all(scan.excitation == 0.0)


def test_red_blue_ratio_tenfold_scale():
    # nbar = 0.11 puts the red peak at about a tenth of the blue peak
    dist = thermal_distribution(0.11, 200)
    t = blue_pi_time(ETA, OMEGA0)
    lw = 2 * math.pi * 20e3
    det = np.linspace(-3 * lw, 3 * lw, 41)
    red = synthesize_scan(dist, ETA, OMEGA0, t, "red", det, lw, shots=20_000, seed=11)
    blue = synthesize_scan(dist, ETA, OMEGA0, t, "blue", det, lw, shots=20_000, seed=12)
    ratio = fit_gaussian(red).amplitude / fit_gaussian(blue).amplitude
    assert ratio == pytest.approx(0.1, abs=0.03)
    nbar, _ = nbar_from_scans(red, blue)
    assert nbar == pytest.approx(0.11, abs=0.03)


def test_fit_gaussian_exact_recovery():
    x = np.linspace(-5.0, 5.0, 41)
    y = 0.8 * np.exp(-(x - 0.3) ** 2 / (2 * 1.2 ** 2))
    scan = SidebandScan(detunings=x, excitation=y, shots_per_point=1000, side="blue")
    fit = fit_gaussian(scan)
    assert fit.amplitude == pytest.approx(0.8, rel=1e-8)
    assert fit.center == pytest.approx(0.3, rel=1e-8)
    assert fit.width == pytest.approx(1.2, rel=1e-8)
    assert not fit.low_signal


def test_fit_gaussian_coverage(rng):
    # amplitude within 3 sigma of truth in >= 95% of seeded synthetic scans
    dist = thermal_distribution(0.3, 100)
    t = blue_pi_time(ETA, OMEGA0)
    lw = 2 * math.pi * 20e3
    det = np.linspace(-3 * lw, 3 * lw, 41)
    truth = sideband_excitation(dist, ETA, OMEGA0, t, "blue")
    hits = 0
    trials = 500
    for k in range(trials):
        scan = synthesize_scan(dist, ETA, OMEGA0, t, "blue", det, lw,
                               shots=100, seed=10_000 + k)
        fit = fit_gaussian(scan)
        hits += abs(fit.amplitude - truth) <= 3.0 * fit.amplitude_sigma
    assert hits / trials >= 0.95


def test_flat_zero_scan_flags_low_signal():
    x = np.linspace(-1.0, 1.0, 21)
    scan = SidebandScan(detunings=x, excitation=np.zeros_like(x),
                        shots_per_point=100, side="red")
    fit = fit_gaussian(scan)
    assert fit.amplitude == 0.0
    assert fit.low_signal


def test_nbar_from_ratio_values():
    assert nbar_from_ratio(0.0) == (0.0, 0.0)
    assert nbar_from_ratio(0.5)[0] == pytest.approx(1.0, rel=1e-12)
    nbar, sigma = nbar_from_ratio(0.0826, 0.01)
    assert nbar == pytest.approx(0.0826 / (1 - 0.0826), rel=1e-12)
    assert nbar == pytest.approx(0.090, abs=0.001)
    assert sigma == pytest.approx(0.01 / (1 - 0.0826) ** 2, rel=1e-12)
    with pytest.raises(ValueError):
        nbar_from_ratio(1.0)
    with pytest.raises(ValueError):
        nbar_from_ratio(1.2)


def test_estimator_consistency_for_thermal_states():
    # noiseless perturbative scans of a thermal state recover nbar within 1%
    lw = 2 * math.pi * 20e3
    det = np.linspace(-3 * lw, 3 * lw, 41)
    for nbar in (0.1, 0.5, 1.0, 2.0):
        dist = thermal_distribution(nbar, 600)
        t = 0.05 / (OMEGA0 * ETA * math.sqrt(len(dist.p)))
        profiles = {}
        for side in ("red", "blue"):
            peak = sideband_excitation(dist, ETA, OMEGA0, t, side)
            profiles[side] = peak * np.exp(-det ** 2 / (2 * lw ** 2))
        r = fit_gaussian(SidebandScan(det, profiles["red"], 1000, "red")).amplitude / \
            fit_gaussian(SidebandScan(det, profiles["blue"], 1000, "blue")).amplitude
        est, _ = nbar_from_ratio(r)
        assert est == pytest.approx(nbar, rel=0.01)


def test_fit_heating_rate_exact_linear():
    delays = np.array([0.0, 0.01, 0.02, 0.04])
    nbars = 0.05 + 2.1 * delays
    series = HeatingSeries(delays, nbars, np.full(4, 0.01))
    fit = fit_heating_rate(series)
    assert fit["ndot"] == pytest.approx(2.1, abs=1e-12)
    assert fit["intercept"] == pytest.approx(0.05, abs=1e-12)
    assert fit["chi2"] == pytest.approx(0.0, abs=1e-18)


def test_fit_heating_rate_weighted_matches_analytic(rng):
    delays = np.array([0.0, 0.01, 0.02, 0.04])
    sigmas = np.array([0.02, 0.01, 0.015, 0.01])
    nbars = 2.1 * delays + rng.normal(0, sigmas)
    series = HeatingSeries(delays, nbars, sigmas)
    fit = fit_heating_rate(series)
    w = 1 / sigmas ** 2
    sw, swx = w.sum(), (w * delays).sum()
    swxx, swy, swxy = (w * delays ** 2).sum(), (w * nbars).sum(), (w * delays * nbars).sum()
    det = sw * swxx - swx ** 2
    slope = (sw * swxy - swx * swy) / det
    assert fit["ndot"] == pytest.approx(slope, rel=1e-10)
    assert fit["ndot_sigma"] == pytest.approx(math.sqrt(sw / det), rel=1e-10)


def test_fit_heating_rate_degenerate_delays():
    with pytest.raises(ValueError):
        fit_heating_rate(HeatingSeries(np.array([0.01, 0.01]),
                                       np.array([0.1, 0.2]), np.array([0.01, 0.01])))


def test_fit_unbiasedness_over_ensemble(rng):
    # mean fitted slope over 500 synthetic series stays within 3 sigma/sqrt(N)
    delays = np.array([0.0, 0.01, 0.02, 0.04])
    sigma = 0.012
    slopes = []
    for _ in range(500):
        nbars = 0.03 + 2.1 * delays + rng.normal(0.0, sigma, len(delays))
        fit = fit_heating_rate(HeatingSeries(delays, nbars, np.full(4, sigma)))
        slopes.append(fit["ndot"])
    mean_dev = abs(np.mean(slopes) - 2.1)
    assert mean_dev < 3.0 * np.std(slopes) / math.sqrt(500)


def test_scan_validation():
    with pytest.raises(ValueError):
        SidebandScan(np.array([0.0, 1.0]), np.array([0.5, 1.5]), 100, "red")
    with pytest.raises(ValueError):
        SidebandScan(np.array([0.0, 1.0]), np.array([0.5, 0.5]), 0, "red")
    with pytest.raises(ValueError):
        SidebandScan(np.array([0.0, 1.0]), np.array([0.5, 0.5]), 100, "green")
