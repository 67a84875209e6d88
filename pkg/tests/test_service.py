import json
import math

import httpx
import numpy as np
import pytest

from surftrap.cli import _InProcessTransport
from surftrap.service import create_app


@pytest.fixture(scope="module")
def client():
    app = create_app()
    return httpx.Client(transport=_InProcessTransport(app),
                        base_url="http://testserver", timeout=None)


def test_health_and_constants(client):
    assert client.get("/healthz").json()["status"] == "ok"
    constants = client.get("/constants").json()
    assert constants["sr88_mass_u"] == pytest.approx(87.905612)


def test_build_requires_exactly_one_source(client):
    assert client.post("/trap/build", json={}).status_code == 422
    resp = client.post("/trap/build", json={"profile": "L150"})
    assert resp.status_code == 200
    doc = resp.json()
    assert {e["role"] for e in doc["layout"]["electrodes"]} == \
        {"RF", "DC1", "DC2", "DC3", "DC4", "CENTER"}
    assert doc["params"]["center_width_m"] == pytest.approx(136e-6)


def test_build_with_explicit_params(client):
    params = {
        "center_width_m": 136e-6, "gap_m": 21e-6, "rf_rail_width_m": 241e-6,
        "far_side_rail_width_m": 115.6e-6, "outer_dc_width_m": 272e-6,
        "electrode_length_m": 1.36e-3, "notch_width_m": 68e-6,
        "notch_depth_m": 34e-6, "dc_segment_length_m": 408e-6,
        "dc12_split_offset_m": 231.2e-6, "dc34_segment_length_m": 170e-6,
        "dc34_split_offset_m": 10.5e-6,
    }
    resp = client.post("/trap/build", json={"params": params})
    assert resp.status_code == 200


def test_solve_and_field_round_trip(client):
    layout = client.post("/trap/build", json={"profile": "L150"}).json()["layout"]
    voltages = {"v_rf_volts": 250.0, "omega_rf_rad_s": 2 * math.pi * 26e6,
                "v1_volts": 25.0, "v2_volts": 25.0, "v3_volts": -25.0,
                "v4_volts": -20.0, "v_center_volts": -1.0}
    solve = client.post("/trap/solve", json={
        "layout": layout, "voltages": voltages, "ion": "Sr88", "compensate": True})
    assert solve.status_code == 200
    sol = solve.json()
    assert 0.7e6 <= sol["secular_frequencies_hz"][0] <= 1.3e6
    assert sol["micromotion_displacement_m"] < 1e-9

    field = client.post("/trap/field", json={
        "layout": layout, "voltages": voltages,
        "grid": {"x0_m": -1e-4, "x1_m": 1e-4, "nx": 3,
                 "z0_m": 5e-5, "z1_m": 3e-4, "nz": 3}})
    assert field.status_code == 200
    rows = field.json()["rows"]
    assert len(rows) == 9
    assert all(r["z_m"] > 0 for r in rows)


def test_solve_unknown_ion_rejected(client):
    layout = client.post("/trap/build", json={"profile": "L75"}).json()["layout"]
    resp = client.post("/trap/solve", json={
        "layout": layout,
        "voltages": {"v_rf_volts": 100.0, "omega_rf_rad_s": 2 * math.pi * 38e6},
        "ion": "Yb171"})
    assert resp.status_code == 422


def test_cool_simulate(client):
    resp = client.post("/cool/simulate", json={
        "omega_rad_s": 2 * math.pi * 1e6, "initial_nbar": 10.0})
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["final_p0"] > 0.95
    assert len(doc["trace"]) == 151
    assert doc["eta"] == pytest.approx(0.0707, abs=0.001)
    both = client.post("/cool/simulate", json={
        "omega_rad_s": 2 * math.pi * 1e6, "initial_nbar": 10.0,
        "doppler_temperature_K": 5e-4})
    assert both.status_code == 422


def test_thermo_endpoints(client):
    rng = np.random.default_rng(3)
    det = np.linspace(-3.0, 3.0, 21)
    points = []
    for side, amp in (("red", 0.1), ("blue", 0.9)):
        profile = amp * np.exp(-det ** 2 / 2.0)
        sampled = rng.binomial(400, profile) / 400
        points += [{"detuning_rad_s": float(d), "excitation": float(e),
                    "shots": 400, "side": side, "delay_s": 0.01}
                   for d, e in zip(det, sampled)]
    resp = client.post("/thermo/fit", json={"points": points})
    assert resp.status_code == 200
    row = resp.json()["rows"][0]
    assert row["delay_s"] == 0.01
    expected = (0.1 / 0.9) / (1 - 0.1 / 0.9)
    assert row["nbar"] == pytest.approx(expected, abs=0.05)

    heating = client.post("/thermo/heating", json={
        "delays_s": [0.0, 0.01, 0.02, 0.04],
        "nbars": [0.01, 0.032, 0.052, 0.095],
        "sigmas": [0.01, 0.01, 0.01, 0.01]})
    assert heating.status_code == 200
    assert heating.json()["ndot"] == pytest.approx(2.1, abs=0.3)


def test_noise_endpoints(client):
    resp = client.post("/noise/convert", json={
        "measurements": [{"d_m": 150e-6, "omega_rad_s": 2 * math.pi * 1e6,
                          "ndot": 2.1, "ndot_sigma": 0.2, "T_K": 6.0,
                          "label": "quartz"}],
        "ion": "Sr88", "normalize_omega_rad_s": 2 * math.pi * 1e6})
    assert resp.status_code == 200
    row = resp.json()["rows"][0]
    assert row["S_E"] == pytest.approx(3.2e-14, rel=0.05)

    fit = client.post("/noise/fit", json={
        "x": [1.0, 2.0, 4.0], "y": [8.0, 4.0, 2.0]})
    assert fit.status_code == 200
    assert fit.json()["exponent"] == pytest.approx(-1.0, abs=1e-9)

    bad = client.post("/noise/fit", json={"x": [1.0], "y": [1.0]})
    assert bad.status_code == 422


def test_pipeline_endpoint_validation(client):
    resp = client.post("/pipeline/run", json={"config": {"schema_version": 1}})
    assert resp.status_code == 422
    assert "seed" in resp.json()["detail"]
    resp = client.post("/pipeline/run", json={
        "config": {"schema_version": 1, "seed": 1, "typo_key": True}})
    assert resp.status_code == 422


def test_openapi_lists_all_endpoints(client):
    paths = client.get("/openapi.json").json()["paths"]
    for route in ("/trap/build", "/trap/field", "/trap/solve", "/cool/simulate",
                  "/thermo/fit", "/thermo/heating", "/noise/convert",
                  "/noise/fit", "/pipeline/run"):
        assert route in paths
