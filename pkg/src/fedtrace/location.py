"""Location-based tracing: gateway readings in, proximity answers out.

Fixed gateways overhear beacon broadcasts; readings are bucketed into
positioning epochs, trilaterated to symbolic locations, and appended to
the facility's locations table. The proximity query runs the
spatio-temporal range query over the patient's trajectory and re-maps
nearby devices to visitor pseudonyms at the fix time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import UnknownVisitorError
from .positioning import (
    DEFAULT_EPOCH,
    FacilityLayout,
    GatewayReading,
    PathLossModel,
    ProximityParams,
    st_range_query,
    trilaterate_point,
)
from .tables import LocationFix, LocationsTable, MasterTable, SymbolicLocation


@dataclass(frozen=True)
class ProximityHit:
    """A nearby sighting of another visitor, with both proximity gaps."""

    visitor: str
    location: SymbolicLocation
    time: int
    spatial_proximity: float  # meters
    temporal_proximity: int  # seconds


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered positioned fixes of one visitor inside one facility."""

    visitor: str
    fixes: tuple[LocationFix, ...]


class LocationIngestStats(NamedTuple):
    fixes_stored: int
    unknown_gateway_dropped: int
    no_fix_epochs: int
    degenerate_epochs: int


def ingest_gateway_readings(
    locations: LocationsTable,
    readings: Iterable[GatewayReading],
    layout: FacilityLayout,
    model: PathLossModel,
    epoch: int = DEFAULT_EPOCH,
) -> LocationIngestStats:
    """Bucket readings per (device, epoch), trilaterate, store the fixes.

    Readings naming unknown gateways are dropped and counted. Epochs heard
    by fewer than three gateways produce no fix and are counted too.
    """
    buckets: dict[tuple[str, int], list[GatewayReading]] = {}
    dropped = 0
    for r in readings:
        if layout.gateway(r.gateway) is None:
            dropped += 1
            continue
        buckets.setdefault((r.device, r.time // epoch), []).append(r)

    stored = 0
    no_fix = 0
    degenerate = 0
    for (device, epoch_index), epoch_readings in sorted(buckets.items()):
        result = trilaterate_point(epoch_readings, layout, model)
        if result.point is None:
            no_fix += 1
            continue
        if result.status == "degenerate":
            degenerate += 1
        location = layout.symbolic(*result.point)
        if locations.insert(LocationFix(device, location, epoch_index * epoch)):
            stored += 1
    return LocationIngestStats(stored, dropped, no_fix, degenerate)


def get_trajectory(
    master: MasterTable,
    locations: LocationsTable,
    visitor: str,
    now: int,
) -> Trajectory:
    """The visitor's fixes restricted to their visit window, time-ordered."""
    looked_up = master.lookup(visitor, now)
    if looked_up is None:
        raise UnknownVisitorError(f"visitor not in master table: {visitor}")
    device, (t_in, t_out) = looked_up
    return Trajectory(visitor, tuple(locations.fixes_for(device, t_in, t_out)))


class ProximityAnswer(NamedTuple):
    hits: list[ProximityHit]
    trajectory: Trajectory
    unmapped_dropped: int


def query_proximity(
    master: MasterTable,
    locations: LocationsTable,
    visitor: str,
    now: int,
    params: ProximityParams,
) -> ProximityAnswer:
    """Visitors spatio-temporally close to the patient's trajectory.

    One hit per qualifying (visitor, fix) pair so downstream analysis can
    reason about persistence; devices positioned but unassigned at the fix
    time are dropped and counted. Spatial gaps are quantized to 0.1 mm,
    matching the contact-distance convention.
    """
    trajectory = get_trajectory(master, locations, visitor, now)
    hits: list[ProximityHit] = []
    unmapped = 0
    own_device = master.lookup(visitor, now)[0]
    for range_hit in st_range_query(
        locations.all_fixes(), trajectory.fixes, params, exclude_device=own_device
    ):
        counterpart = master.reverse_lookup(range_hit.device, range_hit.fix.time)
        if counterpart is None:
            unmapped += 1
            continue
        hits.append(
            ProximityHit(
                visitor=counterpart,
                location=range_hit.fix.location,
                time=range_hit.fix.time,
                spatial_proximity=round(range_hit.spatial_gap, 4),
                temporal_proximity=range_hit.temporal_gap,
            )
        )
    hits.sort(key=lambda h: (h.time, h.visitor))
    return ProximityAnswer(hits, trajectory, unmapped)
