"""Pydantic request/response models for the HTTP API.

These mirror the package's value types at the wire boundary; all quantities
are SI with unit-suffixed field names.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ElectrodeModel(StrictModel):
    id: str
    role: str
    polygon_m: list[tuple[float, float]]


class LayoutModel(StrictModel):
    schema_version: int = 1
    characteristic_size_d_m: float
    gap_width_m: float
    electrodes: list[ElectrodeModel]


class FiveRodParamsModel(StrictModel):
    center_width_m: float
    gap_m: float
    rf_rail_width_m: float
    far_side_rail_width_m: float
    outer_dc_width_m: float
    electrode_length_m: float
    notch_width_m: float
    notch_depth_m: float
    dc_segment_length_m: float
    dc12_split_offset_m: float
    dc34_segment_length_m: float
    dc34_split_offset_m: float


class BuildRequest(StrictModel):
    profile: Optional[Literal["L150", "L100", "L75"]] = None
    params: Optional[FiveRodParamsModel] = None
    calibrate_height_m: Optional[float] = None


class BuildResponse(StrictModel):
    layout: LayoutModel
    params: Optional[FiveRodParamsModel] = None


class VoltageModel(StrictModel):
    v_rf_volts: float
    omega_rf_rad_s: float
    v1_volts: float = 0.0
    v2_volts: float = 0.0
    v3_volts: float = 0.0
    v4_volts: float = 0.0
    v_center_volts: float = 0.0


class FieldGrid(StrictModel):
    x0_m: float
    x1_m: float
    nx: int = Field(ge=1)
    z0_m: float
    z1_m: float
    nz: int = Field(ge=1)
    y_m: float = 0.0


class FieldRequest(StrictModel):
    layout: LayoutModel
    voltages: VoltageModel
    grid: FieldGrid
    gap_treatment: Literal["midline", "exclude"] = "midline"


class FieldRow(StrictModel):
    x_m: float
    y_m: float
    z_m: float
    phi_v: float
    ex_v_m: float
    ey_v_m: float
    ez_v_m: float


class FieldResponse(StrictModel):
    rows: list[FieldRow]


class SolveRequest(StrictModel):
    layout: LayoutModel
    voltages: VoltageModel
    ion: str = "Sr88"
    gap_treatment: Literal["midline", "exclude"] = "midline"
    compensate: bool = False
    stray_field_v_m: Optional[tuple[float, float, float]] = None


class SolveResponse(StrictModel):
    r_null_m: tuple[float, float, float]
    r_min_m: tuple[float, float, float]
    secular_frequencies_rad_s: tuple[float, float, float]
    secular_frequencies_hz: tuple[float, float, float]
    principal_axes: list[list[float]]
    tilt_deg: float
    depth_ev: float
    mathieu_q: tuple[float, float, float]
    micromotion_displacement_m: float
    metadata: dict


class CoolRequest(StrictModel):
    ion: str = "Sr88"
    omega_rad_s: float
    initial_nbar: Optional[float] = None
    doppler_temperature_K: Optional[float] = None
    n_pulses: int = 150
    t_start_s: float = 10e-6
    t_end_s: float = 25e-6
    profile: Literal["linear", "geometric"] = "linear"
    carrier_rabi_rad_s: Optional[float] = None
    n_max: int = 200


class CoolTraceRow(StrictModel):
    pulse_index: int
    p0: float
    nbar: float


class CoolResponse(StrictModel):
    eta: float
    carrier_rabi_rad_s: float
    trace: list[CoolTraceRow]
    final_p0: float
    final_nbar: float
    leakage_flag: bool


class ScanPoint(StrictModel):
    detuning_rad_s: float
    excitation: float
    shots: int
    side: Literal["red", "blue"]
    delay_s: float = 0.0


class ThermoFitRequest(StrictModel):
    points: list[ScanPoint]


class NbarRow(StrictModel):
    delay_s: float
    nbar: float
    nbar_sigma: float
    red_amplitude: float
    blue_amplitude: float


class ThermoFitResponse(StrictModel):
    rows: list[NbarRow]


class HeatingSeriesModel(StrictModel):
    delays_s: list[float]
    nbars: list[float]
    sigmas: list[float]


class HeatingFitResponse(StrictModel):
    ndot: float
    ndot_sigma: float
    intercept: float
    intercept_sigma: float
    chi2: float
    n_points: int


class NoiseRow(StrictModel):
    d_m: float
    omega_rad_s: float
    ndot: float
    ndot_sigma: float = 0.0
    T_K: float = 0.0
    label: str = ""


class NoiseConvertRequest(StrictModel):
    measurements: list[NoiseRow]
    ion: str = "Sr88"
    normalize_omega_rad_s: float
    freq_exponent: float = -1.0


class ConvertedNoiseRow(StrictModel):
    d_m: float
    omega_rad_s: float
    ndot: float
    ndot_sigma: float
    T_K: float
    S_E: float
    S_E_sigma: float
    S_E_1MHz: float
    S_E_1MHz_sigma: float
    label: str


class NoiseConvertResponse(StrictModel):
    rows: list[ConvertedNoiseRow]


class PowerLawRequest(StrictModel):
    x: list[float]
    y: list[float]
    y_sigma: Optional[list[float]] = None


class PowerLawResponse(StrictModel):
    exponent: float
    exponent_sigma: float
    amplitude: float
    amplitude_sigma: float
    residual_norm: float
    n_points: int


class PipelineRequest(StrictModel):
    config: dict
    threads: int = 1


class PipelineResponse(StrictModel):
    manifest: dict
    artifacts: dict[str, str]
