"""Command-line entry points (`gw ...`).

Failures print one machine-parsable JSON line to stderr and exit
non-zero.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click

from .errors import GatewayError
from .install_code import credential_record, parse_qr_payload
from .scenario import Scenario, load_scenario_config
from .telemetry import TelemetryStore

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _fail(exc: Exception) -> "click.exceptions.Exit":
    code = getattr(exc, "code", type(exc).__name__)
    click.echo(json.dumps({"error": code, "message": str(exc)}), err=True)
    return click.exceptions.Exit(1)


@click.group()
def main() -> None:
    """Smart-building Zigbee-to-MQTT edge gateway (simulated radio)."""


@main.command("parse-qr")
@click.argument("qr")
def parse_qr(qr: str) -> None:
    """Parse a vendor QR credential string and print the derived record."""
    try:
        record = credential_record(parse_qr_payload(qr))
    except GatewayError as exc:
        raise _fail(exc)
    click.echo(json.dumps(record, indent=2))


@main.command()
@click.option("--scenario", "scenario_name", default="office", show_default=True,
              help="Scenario file path or packaged scenario name.")
@click.option("--hours", type=float, required=True, help="Simulated hours to run.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Output directory (default runs/<name>-<hours>h-seed<seed>).")
def simulate(scenario_name: str, hours: float, seed: int | None, out_dir: Path | None) -> None:
    """Headless scenario run; writes report, metrics, and the event log."""
    try:
        config = load_scenario_config(scenario_name)
        effective_seed = config.seed if seed is None else seed
        if out_dir is None:
            out_dir = Path("runs") / f"{config.name}-{hours:g}h-seed{effective_seed}"
        out_dir.mkdir(parents=True, exist_ok=True)
        scenario = Scenario(
            config, seed=effective_seed, telemetry_path=out_dir / "metrics.ndjson"
        )
        report = scenario.run(hours)
        scenario.telemetry.close()
        scenario.network.write_events(out_dir / "events.ndjson")
        report_path = out_dir / "report.json"
        report_path.write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    except (GatewayError, ValueError, OSError) as exc:
        raise _fail(exc)
    click.echo(str(report_path))


@main.command()
@click.option("--store", type=click.Path(exists=True, path_type=Path), required=True,
              help="Path to a metrics.ndjson store file.")
@click.option("--series", required=True, help="Series name, e.g. mqtt.messages or lqi.<device>.")
@click.option("--csv", "as_csv", is_flag=True, default=True, help="Emit CSV (default).")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="Write to a file instead of stdout.")
def metrics(store: Path, series: str, as_csv: bool, out_path: Path | None) -> None:
    """Export one telemetry series from a finished run."""
    try:
        loaded = TelemetryStore.load(store)
        if out_path:
            with open(out_path, "w", encoding="utf-8", newline="") as fp:
                loaded.export_csv(series, fp)
            click.echo(str(out_path))
        else:
            loaded.export_csv(series, sys.stdout)
    except (GatewayError, OSError) as exc:
        raise _fail(exc)


@main.command()
@click.option("--duration", type=float, required=True, help="Permit-join window in seconds (0-254).")
@click.option("--api", "api_url", default="http://127.0.0.1:8080", show_default=True,
              help="Base URL of a running gateway.")
def pair(duration: float, api_url: str) -> None:
    """Ask a running gateway to open (or close) its pairing window."""
    import httpx

    try:
        response = httpx.post(
            f"{api_url.rstrip('/')}/api/permit_join",
            json={"duration_s": duration},
            timeout=10.0,
        )
    except httpx.HTTPError as exc:
        raise _fail(exc)
    if response.status_code != 204:
        click.echo(
            json.dumps({"error": f"HTTP{response.status_code}", "message": response.text}),
            err=True,
        )
        raise click.exceptions.Exit(1)
    click.echo(json.dumps({"permit_join": duration > 0, "duration_s": duration}))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="Gateway config TOML.")
def run(config_path: Path) -> None:
    """Serve the broker, HTTP API, and live simulation."""
    from .server import RunSettings, serve

    try:
        with open(config_path, "rb") as fp:
            raw = tomllib.load(fp)
        section = raw.get("gateway", {})
        uplink = raw.get("uplink", {})
        settings = RunSettings(
            scenario=section.get("scenario", "office"),
            seed=section.get("seed"),
            broker_port=int(section.get("broker_port", 1883)),
            http_port=int(section.get("http_port", 8080)),
            base_topic=section.get("base_topic", "gw"),
            registry_path=section.get("registry_path"),
            telemetry_path=section.get("telemetry_path"),
            dashboard_dir=section.get("dashboard_dir"),
            time_scale=float(section.get("time_scale", 60.0)),
            uplink_address=uplink.get("address"),
            uplink_capacity=int(uplink.get("capacity", 10_000)),
            uplink_username=uplink.get("username"),
            uplink_password=uplink.get("password"),
        )
        config = load_scenario_config(settings.scenario)
        scenario = Scenario(
            config,
            seed=settings.seed,
            telemetry_path=settings.telemetry_path,
            registry_path=settings.registry_path,
            base_topic=settings.base_topic,
        )
        click.echo(
            f"broker :{settings.broker_port}  api :{settings.http_port}  "
            f"scenario {config.name} (seed {scenario.seed}, x{settings.time_scale:g} time)"
        )
        asyncio.run(serve(scenario, settings))
    except KeyboardInterrupt:
        pass
    except (GatewayError, OSError, ValueError) as exc:
        raise _fail(exc)


if __name__ == "__main__":
    main()
