"""Command line entry points.

``fedtrace simulate`` runs a scenario end-to-end in process and writes the
artifacts; ``serve-registry`` and ``serve-facility`` expose the HTTP
services; ``trace``, ``wipe``, and ``report`` talk to a running registry.
The service topology comes from a JSON config file named by ``--config``
or the ``FT_CONFIG`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

import httpx

from .errors import FedTraceError
from .facility import Facility
from .positioning import FacilityLayout
from .registration import Registry
from .service import HttpFacilityClient, create_facility_app, create_registry_app
from .sim import ScenarioSpec, generate_events, run_scenario
from .tables import RetentionPolicy
from .trace import TraceRequest, run_trace

CONFIG_ENV = "FT_CONFIG"


class CliError(Exception):
    pass


def load_config(path: Optional[str]) -> dict:
    name = path or os.environ.get(CONFIG_ENV)
    if not name:
        raise CliError(f"no config: pass --config or set {CONFIG_ENV}")
    try:
        return json.loads(Path(name).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {name}: {exc}")


def _facility_entry(config: dict, facility_id: str) -> dict:
    for entry in config.get("facilities", []):
        if entry.get("id") == facility_id:
            return entry
    raise CliError(f"facility {facility_id} not in config")


def _load_layout(entry: dict, config_dir: Path) -> Optional[FacilityLayout]:
    layout = entry.get("layout")
    if layout is None:
        return None
    if isinstance(layout, dict):
        return FacilityLayout.from_dict(layout)
    path = Path(layout)
    if not path.is_absolute():
        path = config_dir / path
    return FacilityLayout.load(path)


def build_facility_from_config(config: dict, facility_id: str, config_dir: Path) -> Facility:
    entry = _facility_entry(config, facility_id)
    return Facility(
        facility_id=facility_id,
        mode=entry["mode"],
        layout=_load_layout(entry, config_dir),
        facility_type=entry.get("type", "generic"),
        device_pool=entry.get("device_pool"),
    )


def build_registry_from_config(config: dict, config_dir: Path) -> Registry:
    from .registration import FacilityEntry

    registry_conf = config.get("registry", {})
    horizon = int(registry_conf.get("retention_horizon", RetentionPolicy().horizon))
    registry = Registry(policy=RetentionPolicy(horizon=horizon))
    for entry in config.get("facilities", []):
        client = HttpFacilityClient(
            httpx.Client(base_url=entry["address"], timeout=30.0),
            entry.get("token", ""),
        )
        registry.register_facility(
            FacilityEntry(
                facility_id=entry["id"],
                mode=entry["mode"],
                facility_type=entry.get("type", "generic"),
                client=client,
                layout=_load_layout(entry, config_dir),
            )
        )
    return registry


def _split_listen(listen: str) -> tuple[str, int]:
    host, _, port = listen.rpartition(":")
    return (host or "127.0.0.1", int(port))


def _serve(app, host: str, port: int) -> None:  # patched in tests
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")


def _registry_api(config: dict) -> tuple[httpx.Client, dict]:
    registry_conf = config.get("registry", {})
    address = registry_conf.get("address")
    if not address:
        listen = registry_conf.get("listen")
        if not listen:
            raise CliError("registry address missing from config")
        host, port = _split_listen(listen)
        address = f"http://{host}:{port}"
    headers = {"Authorization": f"Bearer {registry_conf.get('token', '')}"}
    return httpx.Client(base_url=address, timeout=60.0), headers


def _print_report_text(report: dict, out) -> None:
    print(f"patient: {report['patient']}", file=out)
    print(f"period: {report['period'][0]}..{report['period'][1]}", file=out)
    for section in report["sections"]:
        line = (
            f"[{section['facility']}/{section['mode']}] visit at {section['visit_time']}: "
            f"{len(section['raw_hits'])} raw, {len(section['filtered_hits'])} filtered, "
            f"{len(section['surface_pairs'])} surface"
        )
        if section.get("error"):
            line += f" (error: {section['error']['code']})"
        print(line, file=out)
    print(f"contacts: {len(report['contacts'])}", file=out)
    for contact in report["contacts"]:
        dist = contact.get("min_distance")
        dist_text = f"{dist:.2f} m" if dist is not None else "-"
        print(
            f"  {contact['phone']}\t{contact['facility']}\t"
            f"{','.join(contact['evidence'])}\t{contact['hit_count']} hits\t{dist_text}",
            file=out,
        )


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    spec = ScenarioSpec.load(Path(args.spec))
    out_dir = Path(args.out) if args.out else Path(f"scenario-{spec.seed}")
    out_dir.mkdir(parents=True, exist_ok=True)

    run = run_scenario(spec)
    spec.save(out_dir / "scenario.json")
    summary = {"counts": run.counts, "visits": len(run.truth.visits)}

    if args.logs:
        # regenerate the identical stream for the log files
        logs_dir = out_dir / "logs"
        logs_dir.mkdir(exist_ok=True)
        handles = {}
        try:
            with (logs_dir / "events.log").open("w", encoding="utf-8") as stream_file:
                for event in generate_events(spec, run.truth):
                    stream_file.write(event.line() + "\n")
                    kind = type(event).__name__
                    if kind == "U2uReadingEvent":
                        key = f"u2u-{event.facility}.log"
                        if key not in handles:
                            handles[key] = (logs_dir / key).open("w", encoding="utf-8")
                        handles[key].write(
                            f"{event.observer}\t{event.observed}\t{event.time}\t{event.rssi!r}\n"
                        )
                    elif kind == "GatewayReadingEvent":
                        key = f"gw-{event.facility}.log"
                        if key not in handles:
                            handles[key] = (logs_dir / key).open("w", encoding="utf-8")
                        handles[key].write(
                            f"{event.gateway}\t{event.device}\t{event.time}\t{event.rssi!r}\n"
                        )
        finally:
            for handle in handles.values():
                handle.close()

    snapshots = out_dir / "snapshots"
    for fid, facility in sorted(run.system.facilities.items()):
        facility.save_snapshot(snapshots / fid)
    snapshots.mkdir(parents=True, exist_ok=True)
    (snapshots / "visits.tsv").write_text(
        "\n".join(run.system.registry.visits.to_lines()) + "\n", encoding="utf-8"
    )

    if spec.plan is not None:
        from .sim import phone_for
        from .trace import report_to_dict

        patient = phone_for(spec.plan.patient)
        period = (spec.base_time, spec.base_time + spec.duration)
        report = run_trace(run.system.registry, TraceRequest(patient=patient, period=period))
        report_data = report_to_dict(report)
        (out_dir / "report.json").write_text(
            json.dumps(report_data, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        summary["contacts"] = len(report.contacts)
        print(f"trace for patient {patient}:")
        for contact in report.contacts:
            print(f"  {contact.phone}\t{contact.facility}\t{','.join(contact.evidence)}")

    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"scenario written to {out_dir}")
    print(json.dumps(summary["counts"], sort_keys=True))
    return 0


def cmd_serve_registry(args) -> int:
    config = load_config(args.config)
    config_dir = Path(args.config or os.environ[CONFIG_ENV]).resolve().parent
    registry = build_registry_from_config(config, config_dir)
    app = create_registry_app(registry, config.get("registry", {}).get("token", ""))
    host, port = _split_listen(config.get("registry", {}).get("listen", "127.0.0.1:8800"))
    _serve(app, host, port)
    return 0


def cmd_serve_facility(args) -> int:
    config = load_config(args.config)
    config_dir = Path(args.config or os.environ[CONFIG_ENV]).resolve().parent
    facility = build_facility_from_config(config, args.id, config_dir)
    entry = _facility_entry(config, args.id)
    app = create_facility_app(facility, entry.get("token", ""))
    host, port = _split_listen(entry.get("listen", "127.0.0.1:8801"))
    _serve(app, host, port)
    return 0


def cmd_trace(args) -> int:
    config = load_config(args.config)
    client, headers = _registry_api(config)
    payload: dict = {"phone": args.phone}
    if args.since is not None and args.until is not None:
        payload["period"] = [args.since, args.until]
    elif args.now is not None:
        payload["now"] = args.now
    response = client.post("/case", json=payload, headers=headers)
    if response.status_code >= 400:
        print(f"trace failed: {response.text}", file=sys.stderr)
        return 1
    body = response.json()
    if args.json:
        print(json.dumps(body, indent=2, sort_keys=True))
    else:
        print(f"trace id: {body['trace_id']}")
        _print_report_text(body["report"], sys.stdout)
    return 0


def cmd_wipe(args) -> int:
    config = load_config(args.config)
    client, headers = _registry_api(config)
    response = client.post("/wipe", json={"now": args.now}, headers=headers)
    if response.status_code >= 400:
        print(f"wipe failed: {response.text}", file=sys.stderr)
        return 1
    print(f"deleted {response.json()['deleted']} records")
    return 0


def cmd_report(args) -> int:
    config = load_config(args.config)
    client, headers = _registry_api(config)
    response = client.get(f"/report/{args.trace_id}", headers=headers)
    if response.status_code >= 400:
        print(f"report failed: {response.text}", file=sys.stderr)
        return 1
    body = response.json()
    if args.format == "json":
        print(json.dumps(body, indent=2, sort_keys=True))
    else:
        print(f"trace id: {body['trace_id']}")
        _print_report_text(body["report"], sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedtrace",
        description="Facility-owned contact tracing: simulate, serve, and trace.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="run a scenario end to end")
    simulate.add_argument("spec", help="scenario spec JSON file")
    simulate.add_argument("--out", help="output directory")
    simulate.add_argument("--logs", action="store_true", help="also write event log files")
    simulate.set_defaults(func=cmd_simulate)

    serve_registry = sub.add_parser("serve-registry", help="run the registry service")
    serve_registry.add_argument("--config", help=f"config file (default ${CONFIG_ENV})")
    serve_registry.set_defaults(func=cmd_serve_registry)

    serve_facility = sub.add_parser("serve-facility", help="run one facility service")
    serve_facility.add_argument("--id", required=True, help="facility id from the config")
    serve_facility.add_argument("--config", help=f"config file (default ${CONFIG_ENV})")
    serve_facility.set_defaults(func=cmd_serve_facility)

    trace = sub.add_parser("trace", help="trigger a trace for a patient phone")
    trace.add_argument("phone")
    trace.add_argument("--since", type=int, help="period start (unix seconds)")
    trace.add_argument("--until", type=int, help="period end (unix seconds)")
    trace.add_argument("--now", type=int, help="trace the horizon ending here")
    trace.add_argument("--json", action="store_true", help="print the full report as JSON")
    trace.add_argument("--config", help=f"config file (default ${CONFIG_ENV})")
    trace.set_defaults(func=cmd_trace)

    wipe = sub.add_parser("wipe", help="wipe expired registry records")
    wipe.add_argument("--now", type=int, required=True)
    wipe.add_argument("--config", help=f"config file (default ${CONFIG_ENV})")
    wipe.set_defaults(func=cmd_wipe)

    report = sub.add_parser("report", help="fetch a stored trace report")
    report.add_argument("trace_id")
    report.add_argument("--format", choices=("json", "text"), default="text")
    report.add_argument("--config", help=f"config file (default ${CONFIG_ENV})")
    report.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FedTraceError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
