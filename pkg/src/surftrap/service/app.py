"""FastAPI service wrapping the trap-simulation package.

Stateless computation endpoints: every request carries its full inputs and
returns the finished result, so the service can be shared by many clients.
Domain validation errors surface as 422 with the offending message; solver
failures as 409 (the configuration is understood but not solvable).
"""

from __future__ import annotations

import json

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..constants import constants_metadata
from ..cooling import CoolingSequence, cooling_trace, lamb_dicke, thermal_distribution, thermal_nbar
from ..electrostatics import VoltageSet, build_basis
from ..geometry import (FiveRodParams, TrapLayout, build_five_rod,
                        calibrate_rail_width, five_rod_profile)
from ..noise import NoiseMeasurement, fit_power_law
from ..pipeline import ConfigError, PipelineError, run_pipeline
from ..pseudopotential import ION_REGISTRY, UnstableTrapError, solve_trap
from ..thermometry import (FitError, HeatingSeries, SidebandScan, fit_gaussian,
                           fit_heating_rate, nbar_from_scans)
from . import models as m


def _layout_to_model(layout: TrapLayout) -> m.LayoutModel:
    return m.LayoutModel(**json.loads(layout.to_json()))


def _layout_from_model(model: m.LayoutModel) -> TrapLayout:
    return TrapLayout.from_json(model.model_dump_json())


_PARAM_FIELDS = {
    "center_width_m": "center_width", "gap_m": "gap",
    "rf_rail_width_m": "rf_rail_width", "far_side_rail_width_m": "far_side_rail_width",
    "outer_dc_width_m": "outer_dc_width", "electrode_length_m": "electrode_length",
    "notch_width_m": "notch_width", "notch_depth_m": "notch_depth",
    "dc_segment_length_m": "dc_segment_length", "dc12_split_offset_m": "dc12_split_offset",
    "dc34_segment_length_m": "dc34_segment_length", "dc34_split_offset_m": "dc34_split_offset",
}


def _params_from_model(model: m.FiveRodParamsModel) -> FiveRodParams:
    return FiveRodParams(**{dst: getattr(model, src) for src, dst in _PARAM_FIELDS.items()})


def _params_to_model(params: FiveRodParams) -> m.FiveRodParamsModel:
    return m.FiveRodParamsModel(**{src: getattr(params, dst)
                                   for src, dst in _PARAM_FIELDS.items()})


def _voltage_set(v: m.VoltageModel) -> VoltageSet:
    return VoltageSet(v_rf=v.v_rf_volts, omega_rf=v.omega_rf_rad_s, v1=v.v1_volts,
                      v2=v.v2_volts, v3=v.v3_volts, v4=v.v4_volts,
                      v_center=v.v_center_volts)


def _species(name: str):
    try:
        return ION_REGISTRY[name]
    except KeyError:
        raise HTTPException(422, f"unknown ion {name!r}; known: {sorted(ION_REGISTRY)}")


def create_app() -> FastAPI:
    app = FastAPI(title="surftrap", version=__version__,
                  description="Surface-electrode ion trap simulation service")

    @app.exception_handler(ValueError)
    async def _value_error(_, exc: ValueError):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.get("/constants")
    def constants():
        return constants_metadata()

    @app.post("/trap/build", response_model=m.BuildResponse)
    def trap_build(req: m.BuildRequest):
        if (req.profile is None) == (req.params is None):
            raise HTTPException(422, "provide exactly one of profile or params")
        if req.profile is not None:
            params, layout = five_rod_profile(req.profile)
        else:
            params = _params_from_model(req.params)
            if req.calibrate_height_m is not None:
                params = calibrate_rail_width(req.calibrate_height_m, params)
                layout = build_five_rod(params, characteristic_size_d=req.calibrate_height_m)
            else:
                layout = build_five_rod(params)
        return m.BuildResponse(layout=_layout_to_model(layout),
                               params=_params_to_model(params))

    @app.post("/trap/field", response_model=m.FieldResponse)
    def trap_field(req: m.FieldRequest):
        layout = _layout_from_model(req.layout)
        basis = build_basis(layout, req.gap_treatment)
        g = req.grid
        xs = np.linspace(g.x0_m, g.x1_m, g.nx)
        zs = np.linspace(g.z0_m, g.z1_m, g.nz)
        x, z = np.meshgrid(xs, zs, indexing="ij")
        pts = np.column_stack([x.ravel(), np.full(x.size, g.y_m), z.ravel()])
        volts = _voltage_set(req.voltages)
        weights = basis.dc_voltages(volts)
        weights.update({eid: volts.v_rf for eid in basis.rf_ids})
        phi = basis.potential(weights, pts)
        e = basis.field(weights, pts)
        rows = [m.FieldRow(x_m=p[0], y_m=p[1], z_m=p[2], phi_v=f,
                           ex_v_m=ev[0], ey_v_m=ev[1], ez_v_m=ev[2])
                for p, f, ev in zip(pts, phi, e)]
        return m.FieldResponse(rows=rows)

    @app.post("/trap/solve", response_model=m.SolveResponse)
    def trap_solve(req: m.SolveRequest):
        layout = _layout_from_model(req.layout)
        basis = build_basis(layout, req.gap_treatment)
        try:
            sol = solve_trap(basis, _voltage_set(req.voltages), _species(req.ion),
                             stray_field=req.stray_field_v_m, compensate=req.compensate)
        except UnstableTrapError as err:
            raise HTTPException(409, f"{err} (eigenvalues {err.eigenvalues.tolist()})")
        doc = sol.to_dict()
        return m.SolveResponse(
            r_null_m=tuple(doc["r_null_m"]), r_min_m=tuple(doc["r_min_m"]),
            secular_frequencies_rad_s=tuple(doc["secular_frequencies_rad_s"]),
            secular_frequencies_hz=tuple(doc["secular_frequencies_hz"]),
            principal_axes=doc["principal_axes"], tilt_deg=doc["tilt_deg"],
            depth_ev=doc["depth_ev"], mathieu_q=tuple(doc["mathieu_q"]),
            micromotion_displacement_m=doc["micromotion_displacement_m"],
            metadata=doc["metadata"])

    @app.post("/cool/simulate", response_model=m.CoolResponse)
    def cool_simulate(req: m.CoolRequest):
        species = _species(req.ion)
        if (req.initial_nbar is None) == (req.doppler_temperature_K is None):
            raise HTTPException(422, "provide exactly one of initial_nbar/doppler_temperature_K")
        eta = lamb_dicke(species, species.wavelength, req.omega_rad_s)
        seq = CoolingSequence.ramped(n_pulses=req.n_pulses, t_start=req.t_start_s,
                                     t_end=req.t_end_s, eta=eta,
                                     carrier_rabi=req.carrier_rabi_rad_s,
                                     profile=req.profile)
        nbar0 = req.initial_nbar
        if nbar0 is None:
            nbar0 = thermal_nbar(req.doppler_temperature_K, req.omega_rad_s)
        rows, final = cooling_trace(thermal_distribution(nbar0, req.n_max), seq)
        return m.CoolResponse(
            eta=eta, carrier_rabi_rad_s=seq.carrier_rabi,
            trace=[m.CoolTraceRow(pulse_index=i, p0=p, nbar=nb) for i, p, nb in rows],
            final_p0=final.ground_fidelity, final_nbar=final.nbar,
            leakage_flag=final.leakage_flag)

    @app.post("/thermo/fit", response_model=m.ThermoFitResponse)
    def thermo_fit(req: m.ThermoFitRequest):
        groups: dict[float, dict[str, list[m.ScanPoint]]] = {}
        for pt in req.points:
            groups.setdefault(pt.delay_s, {}).setdefault(pt.side, []).append(pt)
        rows = []
        for delay in sorted(groups):
            sides = groups[delay]
            if "red" not in sides or "blue" not in sides:
                raise HTTPException(422, f"delay {delay}: need both red and blue scans")
            scans = {}
            for side, pts in sides.items():
                scans[side] = SidebandScan(
                    detunings=np.array([p.detuning_rad_s for p in pts]),
                    excitation=np.array([p.excitation for p in pts]),
                    shots_per_point=pts[0].shots, side=side)
            try:
                nbar, sigma = nbar_from_scans(scans["red"], scans["blue"])
                fit_r = fit_gaussian(scans["red"])
                fit_b = fit_gaussian(scans["blue"])
            except FitError as err:
                raise HTTPException(409, str(err))
            rows.append(m.NbarRow(delay_s=delay, nbar=nbar, nbar_sigma=sigma,
                                  red_amplitude=fit_r.amplitude,
                                  blue_amplitude=fit_b.amplitude))
        return m.ThermoFitResponse(rows=rows)

    @app.post("/thermo/heating", response_model=m.HeatingFitResponse)
    def thermo_heating(req: m.HeatingSeriesModel):
        series = HeatingSeries(np.array(req.delays_s), np.array(req.nbars),
                               np.array(req.sigmas))
        return m.HeatingFitResponse(**fit_heating_rate(series))

    @app.post("/noise/convert", response_model=m.NoiseConvertResponse)
    def noise_convert(req: m.NoiseConvertRequest):
        species = _species(req.ion)
        rows = []
        for row in req.measurements:
            meas = NoiseMeasurement(
                trap_size_d=row.d_m, secular_frequency=row.omega_rad_s,
                heating_rate=row.ndot, heating_rate_sigma=row.ndot_sigma,
                temperature_K=row.T_K, label=row.label, species=species,
                freq_exponent=req.freq_exponent)
            rows.append(m.ConvertedNoiseRow(**meas.to_row()))
        return m.NoiseConvertResponse(rows=rows)

    @app.post("/noise/fit", response_model=m.PowerLawResponse)
    def noise_fit(req: m.PowerLawRequest):
        fit = fit_power_law(np.array(req.x), np.array(req.y),
                            None if req.y_sigma is None else np.array(req.y_sigma))
        return m.PowerLawResponse(exponent=fit.exponent, exponent_sigma=fit.exponent_sigma,
                                  amplitude=fit.amplitude, amplitude_sigma=fit.amplitude_sigma,
                                  residual_norm=fit.residual_norm, n_points=fit.n_points)

    @app.post("/pipeline/run", response_model=m.PipelineResponse)
    def pipeline_run(req: m.PipelineRequest):
        try:
            result = run_pipeline(req.config, threads=req.threads)
        except ConfigError as err:
            raise HTTPException(422, str(err))
        except PipelineError as err:
            raise HTTPException(409, f"{err}")
        return m.PipelineResponse(manifest=result.manifest, artifacts=result.artifacts)

    return app


app = create_app()
