"""Command-line front end.

The CLI is a thin client of the HTTP service: every command builds a request,
posts it to the API, and writes the response to disk.  By default the app is
served in-process (no socket) through httpx's ASGI transport; point
SURFTRAP_SERVER or --server at a running `surftrap serve` instance to use a
shared one.

Exit codes: 0 success, 2 validation error (bad config/inputs), 1 runtime
error.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import click
import httpx

SERVER_ENV = "SURFTRAP_SERVER"
OUT_DIR_ENV = "SURFTRAP_OUT_DIR"

EXIT_VALIDATION = 2
EXIT_RUNTIME = 1


class _InProcessTransport(httpx.BaseTransport):
    """Serve the ASGI app directly from a synchronous client (no socket)."""

    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        import asyncio

        async def call():
            response = await self._asgi.handle_async_request(request)
            content = await response.aread()
            await response.aclose()
            return response, content

        response, content = asyncio.run(call())
        return httpx.Response(status_code=response.status_code,
                              headers=response.headers, content=content)


def _client(server: str | None) -> httpx.Client:
    url = server or os.environ.get(SERVER_ENV)
    if url:
        return httpx.Client(base_url=url, timeout=600.0)
    from .service import app

    return httpx.Client(transport=_InProcessTransport(app),
                        base_url="http://surftrap.local", timeout=None)


def _post(ctx, path: str, payload: dict) -> dict:
    try:
        resp = ctx.obj["client"].post(path, json=payload)
    except httpx.HTTPError as err:
        click.echo(f"error: cannot reach service: {err}", err=True)
        sys.exit(EXIT_RUNTIME)
    if resp.status_code == 422:
        detail = resp.json().get("detail")
        click.echo(f"validation error: {detail}", err=True)
        sys.exit(EXIT_VALIDATION)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail")
        except Exception:
            detail = resp.text
        click.echo(f"error: {detail}", err=True)
        sys.exit(EXIT_RUNTIME)
    return resp.json()


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        click.echo(f"validation error: file not found: {path}", err=True)
        sys.exit(EXIT_VALIDATION)
    except json.JSONDecodeError as err:
        click.echo(f"validation error: invalid JSON in {path}: {err}", err=True)
        sys.exit(EXIT_VALIDATION)


def _read_csv(path: str) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except FileNotFoundError:
        click.echo(f"validation error: file not found: {path}", err=True)
        sys.exit(EXIT_VALIDATION)


def _write_text(path: str, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return buf.getvalue()


def _voltages_payload(path: str) -> dict:
    doc = _read_json(path)
    known = {"v_rf_volts", "omega_rf_rad_s", "v1_volts", "v2_volts", "v3_volts",
             "v4_volts", "v_center_volts"}
    unknown = set(doc) - known
    if unknown:
        click.echo(f"validation error: unknown voltage keys {sorted(unknown)}", err=True)
        sys.exit(EXIT_VALIDATION)
    return doc


@click.group()
@click.option("--server", default=None, metavar="URL",
              help=f"Service URL (default: in-process; env {SERVER_ENV}).")
@click.pass_context
def main(ctx, server):
    """Surface-electrode trap simulation toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["client"] = _client(server)


@main.group()
def trap():
    """Layouts, fields, and trap solutions."""


@trap.command("build")
@click.option("--profile", type=click.Choice(["L150", "L100", "L75"]), default=None)
@click.option("--params", "params_file", type=str, default=None,
              help="Five-rod parameter JSON (alternative to --profile).")
@click.option("--calibrate-height", type=float, default=None, metavar="METERS",
              help="Solve the RF rail width for this null height.")
@click.option("--out", required=True, help="Layout JSON output path.")
@click.pass_context
def trap_build(ctx, profile, params_file, calibrate_height, out):
    """Build a five-rod layout."""
    payload = {}
    if profile:
        payload["profile"] = profile
    if params_file:
        payload["params"] = _read_json(params_file)
    if calibrate_height is not None:
        payload["calibrate_height_m"] = calibrate_height
    doc = _post(ctx, "/trap/build", payload)
    _write_text(out, json.dumps(doc["layout"], indent=2) + "\n")
    click.echo(f"wrote {out}")


@trap.command("field")
@click.option("--layout", "layout_file", required=True)
@click.option("--grid", required=True, metavar="x0,x1,nx,z0,z1,nz",
              help="Grid spec in meters/counts.")
@click.option("--y", "y_m", type=float, default=0.0, help="y plane (m).")
@click.option("--volts", "volts_file", required=True)
@click.option("--gap-treatment", type=click.Choice(["midline", "exclude"]), default="midline")
@click.option("--out", required=True, help="CSV output path.")
@click.pass_context
def trap_field(ctx, layout_file, grid, y_m, volts_file, gap_treatment, out):
    """Evaluate potential and field on an x-z grid."""
    parts = grid.split(",")
    if len(parts) != 6:
        click.echo("validation error: --grid needs x0,x1,nx,z0,z1,nz", err=True)
        sys.exit(EXIT_VALIDATION)
    x0, x1, nx, z0, z1, nz = (float(parts[0]), float(parts[1]), int(parts[2]),
                              float(parts[3]), float(parts[4]), int(parts[5]))
    payload = {
        "layout": _read_json(layout_file),
        "voltages": _voltages_payload(volts_file),
        "grid": {"x0_m": x0, "x1_m": x1, "nx": nx, "z0_m": z0, "z1_m": z1,
                 "nz": nz, "y_m": y_m},
        "gap_treatment": gap_treatment,
    }
    doc = _post(ctx, "/trap/field", payload)
    rows = [[r["x_m"], r["y_m"], r["z_m"], r["phi_v"], r["ex_v_m"], r["ey_v_m"], r["ez_v_m"]]
            for r in doc["rows"]]
    _write_text(out, _csv_text(["x_m", "y_m", "z_m", "phi_v", "Ex_v_m", "Ey_v_m", "Ez_v_m"], rows))
    click.echo(f"wrote {out} ({len(rows)} points)")


@trap.command("solve")
@click.option("--layout", "layout_file", required=True)
@click.option("--volts", "volts_file", required=True)
@click.option("--ion", default="Sr88", show_default=True)
@click.option("--gap-treatment", type=click.Choice(["midline", "exclude"]), default="midline")
@click.option("--compensate/--no-compensate", default=False,
              help="Zero the static field at the RF null with a uniform shim.")
@click.option("--out", required=True, help="Solution JSON output path.")
@click.pass_context
def trap_solve(ctx, layout_file, volts_file, ion, gap_treatment, compensate, out):
    """Solve null, minimum, secular frequencies, tilt, depth."""
    payload = {
        "layout": _read_json(layout_file),
        "voltages": _voltages_payload(volts_file),
        "ion": ion,
        "gap_treatment": gap_treatment,
        "compensate": compensate,
    }
    doc = _post(ctx, "/trap/solve", payload)
    _write_text(out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    freqs = ", ".join(f"{f / 1e6:.4f}" for f in doc["secular_frequencies_hz"])
    click.echo(f"wrote {out} (secular {freqs} MHz, tilt {doc['tilt_deg']:.2f} deg)")


@main.group()
def cool():
    """Sideband cooling simulation."""


@cool.command("simulate")
@click.option("--config", "config_file", required=True,
              help="Cooling request JSON (see /cool/simulate schema).")
@click.option("--seed", type=int, default=None,
              help="Master seed; unused by the deterministic pulse model, "
                   "reserved for stochastic variants.")
@click.option("--out", required=True, help="CSV output (pulse_index,p0,nbar).")
@click.pass_context
def cool_simulate(ctx, config_file, seed, out):
    """Run the pulsed cooling sequence and trace populations."""
    payload = _read_json(config_file)
    doc = _post(ctx, "/cool/simulate", payload)
    rows = [[r["pulse_index"], r["p0"], r["nbar"]] for r in doc["trace"]]
    _write_text(out, _csv_text(["pulse_index", "p0", "nbar"], rows))
    click.echo(f"wrote {out} (final p0={doc['final_p0']:.4f}, nbar={doc['final_nbar']:.4f})")


@main.group()
def thermo():
    """Sideband thermometry fits."""


@thermo.command("fit")
@click.option("--scans", "scans_file", required=True,
              help="CSV: detuning_rad_s,excitation,shots,side[,delay_s].")
@click.option("--out", required=True, help="CSV output (delay_s,nbar,nbar_sigma,...).")
@click.pass_context
def thermo_fit(ctx, scans_file, out):
    """Fit red/blue scan pairs to Gaussian peaks and estimate nbar."""
    points = []
    for row in _read_csv(scans_file):
        points.append({
            "detuning_rad_s": float(row["detuning_rad_s"]),
            "excitation": float(row["excitation"]),
            "shots": int(float(row["shots"])),
            "side": row["side"],
            "delay_s": float(row.get("delay_s", 0.0) or 0.0),
        })
    doc = _post(ctx, "/thermo/fit", {"points": points})
    rows = [[r["delay_s"], r["nbar"], r["nbar_sigma"], r["red_amplitude"], r["blue_amplitude"]]
            for r in doc["rows"]]
    _write_text(out, _csv_text(
        ["delay_s", "nbar", "nbar_sigma", "red_amplitude", "blue_amplitude"], rows))
    click.echo(f"wrote {out} ({len(rows)} delay groups)")


@thermo.command("heating")
@click.option("--series", "series_file", required=True,
              help="CSV: delay_s,nbar,nbar_sigma.")
@click.option("--out", required=True, help="Rate JSON output path.")
@click.pass_context
def thermo_heating(ctx, series_file, out):
    """Weighted linear fit of nbar vs delay."""
    rows = _read_csv(series_file)
    payload = {
        "delays_s": [float(r["delay_s"]) for r in rows],
        "nbars": [float(r["nbar"]) for r in rows],
        "sigmas": [float(r["nbar_sigma"]) for r in rows],
    }
    doc = _post(ctx, "/thermo/heating", payload)
    _write_text(out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {out} (ndot {doc['ndot']:.3f} +- {doc['ndot_sigma']:.3f} quanta/s)")


@main.group()
def noise():
    """Heating-rate / field-noise conversions and scaling fits."""


@noise.command("convert")
@click.option("--in", "in_file", required=True,
              help="CSV: d_m,omega_rad_s,ndot,ndot_sigma,T_K[,label].")
@click.option("--ion", default="Sr88", show_default=True)
@click.option("--normalize", type=float, default=1e6, show_default=True,
              metavar="HZ", help="Normalization frequency in Hz.")
@click.option("--freq-exponent", type=float, default=-1.0, show_default=True)
@click.option("--out", required=True, help="CSV output path.")
@click.pass_context
def noise_convert(ctx, in_file, ion, normalize, freq_exponent, out):
    """Convert heating rates to field-noise densities."""
    measurements = []
    for row in _read_csv(in_file):
        measurements.append({
            "d_m": float(row["d_m"]),
            "omega_rad_s": float(row["omega_rad_s"]),
            "ndot": float(row["ndot"]),
            "ndot_sigma": float(row.get("ndot_sigma", 0.0) or 0.0),
            "T_K": float(row.get("T_K", 0.0) or 0.0),
            "label": row.get("label", "") or "",
        })
    payload = {"measurements": measurements, "ion": ion,
               "normalize_omega_rad_s": 2.0 * math.pi * normalize,
               "freq_exponent": freq_exponent}
    doc = _post(ctx, "/noise/convert", payload)
    header = ["d_m", "omega_rad_s", "ndot", "ndot_sigma", "T_K", "S_E", "S_E_sigma",
              "S_E_1MHz", "S_E_1MHz_sigma", "label"]
    rows = [[r[h] for h in header] for r in doc["rows"]]
    _write_text(out, _csv_text(header, rows))
    click.echo(f"wrote {out} ({len(rows)} rows)")


@noise.command("fit")
@click.option("--in", "in_file", required=True, help="CSV with the fit columns.")
@click.option("--x", "x_col", required=True, help="Column for x (e.g. d_m).")
@click.option("--y", "y_col", required=True, help="Column for y (e.g. S_E_1MHz).")
@click.option("--sigma", "sigma_col", default=None, help="Column for y sigma.")
@click.option("--out", default=None, help="Optional JSON output path.")
@click.pass_context
def noise_fit(ctx, in_file, x_col, y_col, sigma_col, out):
    """Weighted power-law fit y = A x^k; prints exponent +- sigma."""
    rows = _read_csv(in_file)
    try:
        payload = {"x": [float(r[x_col]) for r in rows],
                   "y": [float(r[y_col]) for r in rows]}
        if sigma_col:
            payload["y_sigma"] = [float(r[sigma_col]) for r in rows]
    except KeyError as err:
        click.echo(f"validation error: missing column {err}", err=True)
        sys.exit(EXIT_VALIDATION)
    doc = _post(ctx, "/noise/fit", payload)
    click.echo(f"exponent = {doc['exponent']:.4f} +- {doc['exponent_sigma']:.4f}  "
               f"amplitude = {doc['amplitude']:.6g} +- {doc['amplitude_sigma']:.3g}")
    if out:
        _write_text(out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        click.echo(f"wrote {out}")


@main.group()
def pipeline():
    """Config-driven end-to-end runs."""


@pipeline.command("run")
@click.option("--config", "config_file", required=True, help="Pipeline config JSON.")
@click.option("--out-dir", default=None,
              help=f"Output directory (default: env {OUT_DIR_ENV} or '.').")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads for Monte Carlo stages.")
@click.pass_context
def pipeline_run(ctx, config_file, out_dir, seed, threads):
    """Run layout -> solve -> cool -> thermometry -> noise, write a manifest."""
    config = _read_json(config_file)
    if seed is not None:
        config["seed"] = seed
    # resolve layout file references locally; the service takes inline layouts
    layout = config.get("layout", {})
    if isinstance(layout, dict) and "file" in layout:
        config["layout"] = {"inline": _read_json(layout["file"])}
    out = Path(out_dir or os.environ.get(OUT_DIR_ENV) or ".")
    doc = _post(ctx, "/pipeline/run", {"config": config, "threads": threads})
    out.mkdir(parents=True, exist_ok=True)
    for name, text in doc["artifacts"].items():
        _write_text(str(out / name), text)
    _write_text(str(out / "manifest.json"),
                json.dumps(doc["manifest"], indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {len(doc['artifacts']) + 1} files to {out}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
