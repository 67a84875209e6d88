"""End-to-end experiment pipeline: layout -> trap solution -> cooling ->
heating/thermometry -> noise conversion.

A single JSON config (versioned, unknown keys rejected) drives the stages;
every stage's output is an in-memory text artifact so the caller (CLI or
service) decides where files land.  All randomness flows from one master
seed through named SeedSequence spawns, so a fixed config produces
byte-identical artifacts at any thread count.
"""

from __future__ import annotations

import copy
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import cooling as cool_mod
from . import thermometry as thermo_mod
from .constants import constants_metadata
from .electrostatics import GAP_TREATMENTS, VoltageSet, build_basis
from .geometry import TrapLayout, five_rod_profile
from .noise import NoiseMeasurement, NoiseModel, OMEGA_REF_1MHZ
from .pseudopotential import ION_REGISTRY, solve_trap

CONFIG_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


class PipelineError(RuntimeError):
    """A stage failed; partial artifacts are preserved on the exception."""

    def __init__(self, stage: str, cause: Exception, result: "PipelineResult"):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.result = result


@dataclass
class PipelineResult:
    artifacts: dict[str, str] = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return self.manifest.get("status") == "partial"


_SCHEMA = {
    "schema_version": None,
    "seed": None,
    "ion": None,
    "layout": {"profile": None, "file": None, "inline": None},
    "voltages": {"v_rf_volts": None, "omega_rf_rad_s": None, "v1_volts": None,
                 "v2_volts": None, "v3_volts": None, "v4_volts": None,
                 "v_center_volts": None},
    "solve": {"compensate": None, "gap_treatment": None},
    "cooling": {"n_pulses": None, "t_start_s": None, "t_end_s": None,
                "profile": None, "initial_nbar": None, "doppler_temperature_K": None,
                "n_max": None, "carrier_rabi_rad_s": None, "omega_rad_s": None},
    "heating": {"ndot_quanta_s": None, "delays_s": None, "method": None,
                "trajectories": None},
    "thermometry": {"shots": None, "n_detunings": None,
                    "linewidth_sigma_rad_s": None},
    "noise": {"normalize_omega_rad_s": None, "freq_exponent": None,
              "temperature_K": None, "label": None},
}

_DEFAULTS = {
    "ion": "Sr88",
    "layout": {"profile": "L150"},
    "voltages": {"v_rf_volts": 250.0, "omega_rf_rad_s": 2.0 * math.pi * 26e6,
                 "v1_volts": 25.0, "v2_volts": 25.0, "v3_volts": -25.0,
                 "v4_volts": -20.0, "v_center_volts": -1.0},
    "solve": {"compensate": True, "gap_treatment": "midline"},
    "cooling": {"n_pulses": 150, "t_start_s": 10e-6, "t_end_s": 25e-6,
                "profile": "linear", "initial_nbar": 10.0,
                "doppler_temperature_K": None, "n_max": 200,
                "carrier_rabi_rad_s": None, "omega_rad_s": None},
    "heating": {"ndot_quanta_s": 2.1, "delays_s": [0.0, 0.010, 0.020, 0.040],
                "method": "master_equation", "trajectories": 100_000},
    "thermometry": {"shots": 100, "n_detunings": 41,
                    "linewidth_sigma_rad_s": 2.0 * math.pi * 20e3},
    "noise": {"normalize_omega_rad_s": OMEGA_REF_1MHZ, "freq_exponent": -1.0,
              "temperature_K": 6.0, "label": "simulated"},
}

_STAGES = ("layout", "trap", "cooling", "thermometry", "noise")


def _check_unknown_keys(node, schema, path=""):
    if not isinstance(node, dict):
        return
    for key, value in node.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {path + key!r}")
        sub = schema[key]
        if isinstance(sub, dict):
            _check_unknown_keys(value, sub, path + key + ".")


def resolve_config(config: dict) -> dict:
    """Validate, fill defaults, and return the fully resolved config."""
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    if config.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"config schema_version must be {CONFIG_SCHEMA_VERSION}")
    _check_unknown_keys(config, _SCHEMA)

    resolved = copy.deepcopy(_DEFAULTS)
    resolved["schema_version"] = CONFIG_SCHEMA_VERSION
    resolved["seed"] = config.get("seed")
    for section in ("ion",):
        if section in config:
            resolved[section] = config[section]
    if "layout" in config:
        resolved["layout"] = copy.deepcopy(config["layout"])
    for section in ("voltages", "solve", "cooling", "heating", "thermometry", "noise"):
        if section in config:
            resolved[section].update(config[section])

    if resolved["ion"] not in ION_REGISTRY:
        raise ConfigError(f"unknown ion {resolved['ion']!r}; known: {sorted(ION_REGISTRY)}")
    layout = resolved["layout"]
    if sum(k in layout for k in ("profile", "file", "inline")) != 1:
        raise ConfigError("layout needs exactly one of profile/file/inline")
    if resolved["solve"]["gap_treatment"] not in GAP_TREATMENTS:
        raise ConfigError(f"gap_treatment must be one of {GAP_TREATMENTS}")
    if resolved["heating"]["method"] not in ("master_equation", "monte_carlo"):
        raise ConfigError("heating.method must be master_equation or monte_carlo")
    # thermometry scan sampling is always stochastic; fail before computing
    if resolved["seed"] is None:
        raise ConfigError("seed is required (thermometry synthesis is stochastic)")
    cooling = resolved["cooling"]
    if (cooling["initial_nbar"] is None) == (cooling["doppler_temperature_K"] is None):
        raise ConfigError("cooling needs exactly one of initial_nbar/doppler_temperature_K")
    return resolved


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_text(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def run_pipeline(config: dict, load_file=None, threads: int = 1) -> PipelineResult:
    """Execute all stages; returns artifacts plus the manifest.

    ``load_file`` maps a layout file reference to its text (the CLI passes a
    filesystem reader; the service forbids file references).  ``threads``
    parallelizes Monte Carlo trajectory batches without changing any output.
    On a stage failure the artifacts produced so far are kept and a manifest
    with status="partial" is attached to the raised PipelineError.
    """
    resolved = resolve_config(config)
    result = PipelineResult()
    stage = "layout"
    try:
        layout = _stage_layout(resolved, result, load_file)
        stage = "trap"
        basis, solution = _stage_trap(resolved, result, layout)
        stage = "cooling"
        cooled, eta, carrier_rabi, omega = _stage_cooling(resolved, result, solution)
        stage = "thermometry"
        rate = _stage_thermometry(resolved, result, cooled, eta, carrier_rabi, threads)
        stage = "noise"
        _stage_noise(resolved, result, layout, omega, rate)
    except Exception as err:
        result.manifest = _manifest(resolved, result, status="partial",
                                    error={"stage": stage, "message": str(err)})
        raise PipelineError(stage, err, result) from err
    result.manifest = _manifest(resolved, result, status="complete", error=None)
    return result


def _manifest(resolved: dict, result: PipelineResult, status: str, error) -> dict:
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "status": status,
        "error": error,
        "config_resolved": resolved,
        "constants": constants_metadata(),
        "artifacts": [
            {"name": name, "sha256": _sha256(text), "bytes": len(text.encode("utf-8"))}
            for name, text in result.artifacts.items()
        ],
    }


def _stage_layout(resolved, result, load_file) -> TrapLayout:
    source = resolved["layout"]
    if "profile" in source:
        _, layout = five_rod_profile(source["profile"])
    elif "inline" in source:
        layout = TrapLayout.from_json(json.dumps(source["inline"]))
    else:
        if load_file is None:
            raise ConfigError("layout file references are not available here")
        layout = TrapLayout.from_json(load_file(source["file"]))
    result.artifacts["layout.json"] = layout.to_json() + "\n"
    return layout


def _voltage_set(resolved) -> VoltageSet:
    v = resolved["voltages"]
    return VoltageSet(v_rf=v["v_rf_volts"], omega_rf=v["omega_rf_rad_s"],
                      v1=v["v1_volts"], v2=v["v2_volts"], v3=v["v3_volts"],
                      v4=v["v4_volts"], v_center=v["v_center_volts"])


def _stage_trap(resolved, result, layout):
    species = ION_REGISTRY[resolved["ion"]]
    basis = build_basis(layout, resolved["solve"]["gap_treatment"])
    solution = solve_trap(basis, _voltage_set(resolved), species,
                          compensate=resolved["solve"]["compensate"])
    result.artifacts["solution.json"] = _json_text(solution.to_dict())
    return basis, solution


def _stage_cooling(resolved, result, solution):
    cfg = resolved["cooling"]
    species = ION_REGISTRY[resolved["ion"]]
    omega = cfg["omega_rad_s"]
    if omega is None:
        omega = float(np.min(solution.secular_frequencies))
    eta = cool_mod.lamb_dicke(species, species.wavelength, omega)
    seq = cool_mod.CoolingSequence.ramped(
        n_pulses=cfg["n_pulses"], t_start=cfg["t_start_s"], t_end=cfg["t_end_s"],
        eta=eta, carrier_rabi=cfg["carrier_rabi_rad_s"], profile=cfg["profile"])
    nbar0 = cfg["initial_nbar"]
    if nbar0 is None:
        nbar0 = cool_mod.thermal_nbar(cfg["doppler_temperature_K"], omega)
    initial = cool_mod.thermal_distribution(nbar0, cfg["n_max"])
    rows, cooled = cool_mod.cooling_trace(initial, seq)
    result.artifacts["populations.csv"] = _csv_text(
        ["pulse_index", "p0", "nbar"], [[i, p0, nb] for i, p0, nb in rows])
    return cooled, eta, seq.carrier_rabi, omega


def _stage_thermometry(resolved, result, cooled, eta, carrier_rabi, threads=1):
    heat = resolved["heating"]
    thermo = resolved["thermometry"]
    probe_t = thermo_mod.blue_pi_time(eta, carrier_rabi)
    lw = thermo["linewidth_sigma_rad_s"]
    detunings = np.linspace(-3.0 * lw, 3.0 * lw, thermo["n_detunings"])
    seed_root = np.random.SeedSequence(resolved["seed"])
    # one child per (delay, use): heating evolution, red scan, blue scan
    stage_seeds = seed_root.spawn(3 * len(heat["delays_s"]))

    scan_rows = []
    delays, nbars, sigmas = [], [], []
    for i, delay in enumerate(heat["delays_s"]):
        state = cooled
        if delay > 0.0:
            mc_seed = (int(stage_seeds[3 * i].generate_state(1)[0])
                       if heat["method"] == "monte_carlo" else None)
            state = cool_mod.evolve_heating(
                cooled, heat["ndot_quanta_s"], delay, method=heat["method"],
                trajectories=heat["trajectories"], seed=mc_seed, threads=threads)
        pair = {}
        for j, side in enumerate(("red", "blue")):
            seed = int(stage_seeds[3 * i + 1 + j].generate_state(1)[0])
            scan = thermo_mod.synthesize_scan(state, eta, carrier_rabi, probe_t,
                                              side, detunings, lw, thermo["shots"], seed)
            pair[side] = scan
            for det, exc in zip(scan.detunings, scan.excitation):
                scan_rows.append([delay, det, exc, thermo["shots"], side])
        nbar, sigma = thermo_mod.nbar_from_scans(pair["red"], pair["blue"])
        delays.append(delay)
        nbars.append(nbar)
        sigmas.append(sigma)

    result.artifacts["scans.csv"] = _csv_text(
        ["delay_s", "detuning_rad_s", "excitation", "shots", "side"], scan_rows)
    series = thermo_mod.HeatingSeries(np.array(delays), np.array(nbars), np.array(sigmas))
    rate = thermo_mod.fit_heating_rate(series)
    rate["samples"] = [{"delay_s": d, "nbar": n, "nbar_sigma": s}
                       for d, n, s in zip(delays, nbars, sigmas)]
    result.artifacts["rate.json"] = _json_text(rate)
    return rate


def _stage_noise(resolved, result, layout, omega, rate):
    cfg = resolved["noise"]
    species = ION_REGISTRY[resolved["ion"]]
    meas = NoiseMeasurement(
        trap_size_d=layout.characteristic_size_d, secular_frequency=omega,
        heating_rate=max(rate["ndot"], 0.0), heating_rate_sigma=rate["ndot_sigma"],
        temperature_K=cfg["temperature_K"], label=cfg["label"], species=species,
        freq_exponent=cfg["freq_exponent"])
    row = meas.to_row()
    result.artifacts["noise.csv"] = _csv_text(list(row), [list(row.values())])

    model = NoiseModel.from_heating_rate(
        ndot=max(rate["ndot"], 0.0), omega=omega, d=layout.characteristic_size_d,
        species=species, freq_exponent=cfg["freq_exponent"])
    result.artifacts["noise_model.json"] = _json_text({
        "s_e_ref_v2_m2_hz": model.s_e_ref,
        "d_ref_m": model.d_ref,
        "omega_ref_rad_s": model.omega_ref,
        "freq_exponent": model.freq_exponent,
        "distance_exponent": model.distance_exponent,
        "extrapolated_ndot_10um_10mhz": model.heating_rate(
            10e-6, 2.0 * math.pi * 10e6, species),
    })


def write_result(result: PipelineResult, outdir) -> list[str]:
    """Write artifacts plus manifest.json into outdir; returns paths written."""
    from pathlib import Path

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in result.artifacts.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(str(path))
    manifest_path = out / "manifest.json"
    manifest_path.write_text(_json_text(result.manifest), encoding="utf-8")
    written.append(str(manifest_path))
    return written
