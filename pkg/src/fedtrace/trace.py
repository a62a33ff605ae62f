"""The government-side trace procedure.

A confirmed case triggers a local visit lookup, one query per visit and
per facility mode, context filtering of the answers, and re-identification
of the surviving pseudonyms back to phone numbers. A facility that cannot
be reached yields an error-marked section instead of aborting the trace.
Raw facility answers are cached per query content, so officials can re-run
the analysis with different context profiles without touching facilities.

Reports are plain data with a canonical JSON form: identical stores and an
identical request produce byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .context import (
    ContextProfile,
    Heatmap,
    SurfacePair,
    apply_profile,
    build_heatmap,
    default_profile,
    hit_distance,
)
from .errors import FedTraceError, InvalidRequestError
from .location import ProximityHit, Trajectory
from .messages import FacilityQuery, SurfaceParams
from .positioning import FacilityLayout, ProximityParams
from .registration import Registry
from .tables import LocationFix, SymbolicLocation
from .u2u import ContactHit

Hit = Union[ContactHit, ProximityHit]


@dataclass(frozen=True)
class TraceRequest:
    """A case to trace: who, over which period, with which interpretation."""

    patient: str
    period: tuple[int, int]
    params: ProximityParams = field(default_factory=ProximityParams)
    context: dict[str, ContextProfile] = field(default_factory=dict)


@dataclass
class FacilitySection:
    """Everything one facility query contributed to the report."""

    facility: str
    mode: str
    visitor: str
    visit_time: int
    raw_hits: list[Hit] = field(default_factory=list)
    filtered_hits: list[Hit] = field(default_factory=list)
    surface_pairs: list[SurfacePair] = field(default_factory=list)
    heatmap: Optional[Heatmap] = None
    trajectory: Optional[Trajectory] = None
    layout: Optional[FacilityLayout] = None  # for rendering walls and zones
    diagnostics: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    error: Optional[dict[str, str]] = None


@dataclass
class ContactSummary:
    """One re-identified contact with its evidence footprint."""

    phone: str
    facility: str
    first_time: int
    last_time: int
    hit_count: int
    min_distance: Optional[float]
    evidence: list[str]  # sorted subset of {"contact", "proximity", "surface"}


@dataclass
class TraceReport:
    patient: str
    period: tuple[int, int]
    sections: list[FacilitySection]
    contacts: list[ContactSummary]
    unresolved_visitors: int = 0


def run_trace(registry: Registry, request: TraceRequest) -> TraceReport:
    """Fan the trace out to every visited facility and aggregate the answers."""
    start, end = request.period
    if start > end:
        raise InvalidRequestError("trace period start after end")
    if end - start > registry.policy.horizon:
        raise InvalidRequestError("trace period longer than the retention horizon")

    visits = registry.visits.lookup_by_phone(request.patient, request.period)
    visits.sort(key=lambda v: (v.facility, v.time, v.visitor))

    sections: list[FacilitySection] = []
    serial = 0
    for visit in visits:
        entry = registry.directory.get(visit.facility)
        if entry is None:
            sections.append(
                FacilitySection(
                    facility=visit.facility,
                    mode="unknown",
                    visitor=visit.visitor,
                    visit_time=visit.time,
                    error={"code": "unknown_facility", "detail": "not in directory"},
                )
            )
            continue
        profile = request.context.get(visit.facility) or entry.profile or default_profile(
            entry.facility_type
        )
        for mode in entry.modes:
            serial += 1
            query = FacilityQuery(
                request_id=f"q-{serial:04d}",
                visitor=visit.visitor,
                mode=mode,
                now=end,
                period=request.period,
                params=request.params,
                surface=(
                    SurfaceParams(profile.surface_dwell, profile.surface_lag)
                    if mode == "location"
                    else None
                ),
                want_trajectory=True,
            )
            section = FacilitySection(
                facility=visit.facility,
                mode=mode,
                visitor=visit.visitor,
                visit_time=visit.time,
            )
            cache_key = (visit.facility,) + query.cache_key()
            response = registry.trace_cache.get(cache_key)
            if response is None:
                try:
                    response = entry.client.trace_query(query)
                except FedTraceError as exc:
                    section.error = {"code": exc.code, "detail": str(exc)}
                    sections.append(section)
                    continue
                registry.trace_cache[cache_key] = response
            section.raw_hits = list(response.hits)
            section.trajectory = response.trajectory
            section.surface_pairs = list(response.surface_pairs)
            section.diagnostics = dict(response.diagnostics)
            filtered, warnings = apply_profile(
                response.hits,
                profile,
                mode=mode,
                patient_traj=response.trajectory,
                layout=entry.layout,
                params=request.params,
            )
            section.filtered_hits = filtered
            section.warnings = warnings
            if mode == "location":
                section.layout = entry.layout
                if response.cell_counts is not None:
                    trajectories = [response.trajectory] if response.trajectory else []
                    section.heatmap = build_heatmap(
                        visit.facility, [response.cell_counts], trajectories
                    )
            sections.append(section)

    sections.sort(key=lambda s: (s.facility, s.visit_time, s.visitor, s.mode))
    contacts, unresolved = _summarize_contacts(registry, request.patient, sections)
    return TraceReport(
        patient=request.patient,
        period=request.period,
        sections=sections,
        contacts=contacts,
        unresolved_visitors=unresolved,
    )


def _summarize_contacts(
    registry: Registry, patient: str, sections: Sequence[FacilitySection]
) -> tuple[list[ContactSummary], int]:
    """Re-identify surviving pseudonyms and merge their evidence per phone."""
    merged: dict[tuple[str, str], ContactSummary] = {}
    unresolved = 0

    def absorb(facility: str, visitor: str, time: int, kind: str, distance: Optional[float]) -> None:
        nonlocal unresolved
        visit = registry.visits.lookup_by_visitor(visitor)
        if visit is None:
            unresolved += 1
            return
        if visit.phone == patient:
            return  # the patient's own later visit is not a contact
        key = (facility, visit.phone)
        summary = merged.get(key)
        if summary is None:
            merged[key] = ContactSummary(
                phone=visit.phone,
                facility=facility,
                first_time=time,
                last_time=time,
                hit_count=1,
                min_distance=distance,
                evidence=[kind],
            )
            return
        summary.first_time = min(summary.first_time, time)
        summary.last_time = max(summary.last_time, time)
        summary.hit_count += 1
        if distance is not None:
            summary.min_distance = (
                distance if summary.min_distance is None else min(summary.min_distance, distance)
            )
        if kind not in summary.evidence:
            summary.evidence.append(kind)
            summary.evidence.sort()

    for section in sections:
        kind = "contact" if section.mode == "u2u" else "proximity"
        for hit in section.filtered_hits:
            absorb(section.facility, hit.visitor, hit.time, kind, hit_distance(hit))
        for pair in section.surface_pairs:
            absorb(section.facility, pair.visitor, pair.visitor_arrive, "surface", None)

    contacts = sorted(
        merged.values(), key=lambda c: (c.facility, c.first_time, c.phone)
    )
    return contacts, unresolved


# -- canonical serialization -------------------------------------------------


def hit_to_dict(hit: Hit) -> dict:
    if isinstance(hit, ContactHit):
        return {
            "visitor": hit.visitor,
            "time": hit.time,
            "estimated_distance": hit.estimated_distance,
        }
    return {
        "visitor": hit.visitor,
        "zone": hit.location.zone,
        "cell": list(hit.location.cell),
        "resolution": hit.location.resolution,
        "time": hit.time,
        "spatial_proximity": hit.spatial_proximity,
        "temporal_proximity": hit.temporal_proximity,
    }


def hit_from_dict(mode: str, data: dict) -> Hit:
    if mode == "u2u":
        return ContactHit(data["visitor"], int(data["time"]), float(data["estimated_distance"]))
    return ProximityHit(
        visitor=data["visitor"],
        location=SymbolicLocation(
            data["zone"], tuple(data["cell"]), float(data["resolution"])
        ),
        time=int(data["time"]),
        spatial_proximity=float(data["spatial_proximity"]),
        temporal_proximity=int(data["temporal_proximity"]),
    )


def trajectory_to_list(traj: Optional[Trajectory]) -> Optional[list[dict]]:
    if traj is None:
        return None
    return [
        {
            "zone": fix.location.zone,
            "cell": list(fix.location.cell),
            "resolution": fix.location.resolution,
            "time": fix.time,
        }
        for fix in traj.fixes
    ]


def trajectory_from_list(visitor: str, data: Optional[list[dict]]) -> Optional[Trajectory]:
    if data is None:
        return None
    fixes = tuple(
        LocationFix(
            device="",
            location=SymbolicLocation(d["zone"], tuple(d["cell"]), float(d["resolution"])),
            time=int(d["time"]),
        )
        for d in data
    )
    return Trajectory(visitor, fixes)


def section_to_dict(section: FacilitySection) -> dict:
    return {
        "facility": section.facility,
        "mode": section.mode,
        "visitor": section.visitor,
        "visit_time": section.visit_time,
        "raw_hits": [hit_to_dict(h) for h in section.raw_hits],
        "filtered_hits": [hit_to_dict(h) for h in section.filtered_hits],
        "surface_pairs": [
            {
                "visitor": p.visitor,
                "cell": list(p.cell),
                "patient_leave": p.patient_leave,
                "visitor_arrive": p.visitor_arrive,
            }
            for p in section.surface_pairs
        ],
        "heatmap": (
            {
                "cells": [list(row) for row in section.heatmap.cells],
                "patient_cells": [list(c) for c in section.heatmap.patient_cells],
            }
            if section.heatmap is not None
            else None
        ),
        "trajectory": trajectory_to_list(section.trajectory),
        "layout": section.layout.to_dict() if section.layout is not None else None,
        "diagnostics": dict(sorted(section.diagnostics.items())),
        "warnings": list(section.warnings),
        "error": section.error,
    }


def report_to_dict(report: TraceReport) -> dict:
    return {
        "patient": report.patient,
        "period": list(report.period),
        "sections": [section_to_dict(s) for s in report.sections],
        "contacts": [
            {
                "phone": c.phone,
                "facility": c.facility,
                "first_time": c.first_time,
                "last_time": c.last_time,
                "hit_count": c.hit_count,
                "min_distance": c.min_distance,
                "evidence": list(c.evidence),
            }
            for c in report.contacts
        ],
        "unresolved_visitors": report.unresolved_visitors,
    }


def report_to_json(report: TraceReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, separators=(",", ":"))


def report_to_json_bytes(report: TraceReport) -> bytes:
    return report_to_json(report).encode("utf-8")
