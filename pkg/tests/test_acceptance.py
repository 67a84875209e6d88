"""Acceptance suite: one test per criterion, each printing a PASS line with
the measured numbers so a run reads as a checklist."""

import hashlib
import json
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.constants import atomic_mass, e as q_e, hbar

from surftrap.cooling import (CoolingSequence, evolve_heating, lamb_dicke,
                              run_cooling, thermal_distribution)
from surftrap.electrostatics import patch_potential
from surftrap.noise import (NoiseModel, fit_power_law, johnson_voltage_noise,
                            noise_from_heating, technical_field_noise)
from surftrap.pipeline import run_pipeline
from surftrap.pseudopotential import SR88

PIPELINE_CONFIG = {"schema_version": 1, "seed": 20260809}


@pytest.fixture(scope="module")
def pipeline_result():
    return run_pipeline(dict(PIPELINE_CONFIG))


def _ok(criterion, message):
    print(f"\nACCEPTANCE {criterion} PASS: {message}")


def test_criterion_1_noise_conversion():
    # independent oracle: brute-force constant arithmetic
    mass = 87.905612 * atomic_mass
    omega = 2 * math.pi * 1e6
    oracle = 4.0 * mass * hbar * omega * 2.1 / q_e ** 2
    s_e, _ = noise_from_heating(2.1, omega, SR88)
    assert s_e == pytest.approx(oracle, rel=0.01)
    assert s_e == pytest.approx(3.2e-14, rel=0.05)
    ratio = 30e-8 / s_e
    assert 0.5e7 <= ratio <= 2.0e7
    _ok(1, f"S_E(2.1 quanta/s @ 1 MHz) = {s_e:.3e} V^2/m^2/Hz; "
           f"room-T/6-K ratio = {ratio:.2e} in [0.5e7, 2e7]")


def test_criterion_2_extrapolation():
    model = NoiseModel.from_heating_rate(ndot=2.1, omega=2 * math.pi * 1e6,
                                         d=150e-6, species=SR88)
    assert model.freq_exponent == -1.0 and model.distance_exponent == -4.0
    ndot = model.heating_rate(10e-6, 2 * math.pi * 10e6, SR88)
    assert ndot == pytest.approx(1000.0, rel=0.20)
    _ok(2, f"extrapolated heating at (10 um, 10 MHz) = {ndot:.0f} quanta/s "
           f"(within 20% of ~1000)")


def test_criterion_3_johnson_budget():
    s_v = johnson_voltage_noise(4.0, 10.0)
    assert s_v == pytest.approx(2e-21, rel=0.15)
    s_e = technical_field_noise(s_v, 100e-6)
    assert 1e-16 / 1.5 <= s_e <= 1e-16 * 1.5
    exact = technical_field_noise(2e-21, 100e-6)
    assert exact == pytest.approx(8e-17, rel=1e-9)
    _ok(3, f"S_V(4 K, 10 Ohm) = {s_v:.2e} V^2/Hz; technical S_E(100 um) = {s_e:.2e}")


def test_criterion_4_trap_geometry(l150_solution):
    # Loose tolerance by design: the outer-electrode geometry is
    # reconstructed, so frequencies carry +-30% and the tilt is checked at
    # the documented standard DC setting (V1=25 V scheme with -1 V center
    # bias, shim-compensated).
    height = l150_solution.r_null[2]
    assert height == pytest.approx(150e-6, rel=0.03)
    f = np.asarray(l150_solution.secular_frequencies) / (2 * math.pi * 1e6)
    assert 0.7 <= f[0] <= 1.3, "axial mode outside 1 MHz +- 30%"
    assert 1.8 <= f[1] <= 3.2 and 1.8 <= f[2] <= 3.2
    assert f[1] < f[2], "transverse splitting ordering"
    assert 6.0 <= l150_solution.tilt_deg <= 20.0
    _ok(4, f"null height {height * 1e6:.2f} um; secular {f[0]:.3f}/{f[1]:.3f}/"
           f"{f[2]:.3f} MHz; tilt {l150_solution.tilt_deg:.1f} deg")


def test_criterion_5_electrostatics_correctness(l150_basis, rng):
    square = ((-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0))
    point = np.array([0.25, -0.4, 0.8])

    def kernel(y, x):
        return point[2] / (2 * math.pi * ((x - point[0]) ** 2
                                          + (y - point[1]) ** 2 + point[2] ** 2) ** 1.5)

    oracle, _ = integrate.dblquad(kernel, -1, 1, -1, 1, epsabs=1e-12, epsrel=1e-12)
    analytic = patch_potential(square, point)
    assert analytic == pytest.approx(oracle, abs=1e-8)

    d = l150_basis.characteristic_size_d
    pts = np.column_stack([rng.uniform(-d, d, 100), rng.uniform(-d, d, 100),
                           rng.uniform(0.2 * d, 3 * d, 100)])
    step = 1e-8
    worst_trace, worst_grad, worst_hess = 0.0, 0.0, 0.0
    for eid in l150_basis.ids:
        hess = l150_basis.hess(eid, pts)
        trace = np.abs(np.trace(hess, axis1=1, axis2=2)) / np.abs(hess).max(axis=(1, 2))
        worst_trace = max(worst_trace, trace.max())
        grad = l150_basis.grad(eid, pts)
        fd_g = np.empty_like(grad)
        fd_h = np.empty_like(hess)
        for j in range(3):
            dp = np.zeros(3)
            dp[j] = step
            fd_g[:, j] = (l150_basis.phi(eid, pts + dp) - l150_basis.phi(eid, pts - dp)) / (2 * step)
            fd_h[:, j, :] = (l150_basis.grad(eid, pts + dp) - l150_basis.grad(eid, pts - dp)) / (2 * step)
        worst_grad = max(worst_grad, float(
            (np.abs(grad - fd_g).max(axis=1) / np.abs(grad).max(axis=1)).max()))
        worst_hess = max(worst_hess, float(
            (np.abs(hess - fd_h).max(axis=(1, 2)) / np.abs(hess).max(axis=(1, 2))).max()))
    assert worst_trace < 1e-9
    assert worst_grad < 1e-5
    assert worst_hess < 1e-5
    _ok(5, f"quadrature match {abs(analytic - oracle):.1e}; Laplace trace "
           f"{worst_trace:.1e}; grad/hess FD errors {worst_grad:.1e}/{worst_hess:.1e}")


def test_criterion_6_cooling_fidelity():
    eta = lamb_dicke(SR88, 674e-9, 2 * math.pi * 1e6)
    seq = CoolingSequence.ramped(eta=eta)  # 150 pulses, 10 -> 25 us
    cooled = run_cooling(thermal_distribution(10.0, 200), seq)
    assert cooled.ground_fidelity > 0.95
    _ok(6, f"150-pulse ramp on nbar=10: p0 = {cooled.ground_fidelity:.4f} > 0.95")


def test_criterion_7_heating_dynamics():
    ground = thermal_distribution(0.0, 200)
    ndot = 2.1
    for t in (0.040, 0.2, 1.0 / ndot):
        master = evolve_heating(ground, ndot, t)
        assert master.nbar == pytest.approx(ndot * t, rel=1e-3)
    mc = evolve_heating(ground, ndot, 0.040, method="monte_carlo",
                        trajectories=100_000, seed=42)
    master = evolve_heating(ground, ndot, 0.040)
    se = math.sqrt(mc.nbar * (1 + mc.nbar) / 100_000)
    assert abs(mc.nbar - master.nbar) <= 3.0 * se
    _ok(7, f"<n>(t) = ndot*t to 0.1%; MC-master gap {abs(mc.nbar - master.nbar):.2e} "
           f"<= 3 SE ({3 * se:.2e})")


def test_criterion_8_thermometry_round_trip(pipeline_result):
    rate = json.loads(pipeline_result.artifacts["rate.json"])
    ndot, sigma = rate["ndot"], rate["ndot_sigma"]
    assert abs(ndot - 2.1) <= 2.0 * sigma
    # sigma comparable to the reference +-0.2 at matched statistics
    assert 0.2 / 3.0 <= sigma <= 0.2 * 3.0
    assert rate["intercept"] < 0.06
    _ok(8, f"recovered ndot = {ndot:.2f} +- {sigma:.2f} quanta/s "
           f"(truth 2.1 within 2 sigma; intercept {rate['intercept']:.3f} < 0.06)")


def test_criterion_9_scaling_fits(rng):
    # omega^-1 over the 0.85-1.25 MHz band
    omega = np.linspace(0.85e6, 1.25e6, 12)
    s_e = 3.2e-14 * (omega / 1e6) ** -1.0 * np.exp(rng.normal(0.0, 0.03, len(omega)))
    fit_freq = fit_power_law(omega, s_e, y_sigma=0.03 * s_e)
    assert fit_freq.exponent == pytest.approx(-1.0, abs=0.1)

    # three trap sizes with systematic scatter: both d^-2 and d^-4 admissible
    d = np.array([75e-6, 100e-6, 150e-6])
    y = 1e-13 * (d / 100e-6) ** -3.0 * np.exp(rng.normal(0.0, 0.5, 3))
    fit_d = fit_power_law(d, y, y_sigma=0.5 * y)
    lo = fit_d.exponent - 2 * fit_d.exponent_sigma
    hi = fit_d.exponent + 2 * fit_d.exponent_sigma
    assert lo <= -4.0 and -2.0 <= hi
    _ok(9, f"frequency exponent {fit_freq.exponent:.3f} +- {fit_freq.exponent_sigma:.3f}; "
           f"size exponent {fit_d.exponent:.2f} +- {fit_d.exponent_sigma:.2f} "
           f"(2 sigma covers -2 and -4)")


def test_criterion_10_pipeline_determinism(pipeline_result):
    again = run_pipeline(dict(PIPELINE_CONFIG))
    digests = {}
    for name in sorted(pipeline_result.artifacts):
        h1 = hashlib.sha256(pipeline_result.artifacts[name].encode()).hexdigest()
        h2 = hashlib.sha256(again.artifacts[name].encode()).hexdigest()
        assert h1 == h2, f"artifact {name} not byte-identical"
        digests[name] = h1[:8]
    _ok(10, f"two runs byte-identical across {len(digests)} artifacts "
            f"({', '.join(sorted(digests))})")
