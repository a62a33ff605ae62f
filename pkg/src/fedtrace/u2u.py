"""User-to-user tracing: device sighting logs in, contact answers out.

Devices continuously log which other devices they see and how strongly.
At ingestion each reading's signal strength becomes a distance in meters,
mutual sightings are merged, and the result lands in the facility's
contacts table. Queries walk the patient's visit window and re-map the
counterpart devices to visitor pseudonyms at the event time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import UnknownVisitorError
from .positioning import PathLossModel, distance_from_rssi
from .tables import ContactsTable, MasterTable


class RawReading(NamedTuple):
    """One directed sighting from a device's local log."""

    observer: str
    observed: str
    time: int
    rssi: float


@dataclass(frozen=True)
class ContactHit:
    """A contact answer: who, when, and how close (meters)."""

    visitor: str
    time: int
    estimated_distance: float


class IngestStats(NamedTuple):
    events_stored: int
    self_sightings_dropped: int


def ingest_device_logs(
    contacts: ContactsTable,
    readings: Iterable[RawReading],
    model: PathLossModel,
) -> IngestStats:
    """Convert readings to distances and merge them into the contacts table.

    Self-sightings are dropped and tallied. Distances are quantized to
    0.1 mm on the way in: finer precision is physically meaningless and
    keeping stored numbers short limits what facility state can encode.
    """
    stored = 0
    dropped = 0
    for r in readings:
        if r.observer == r.observed:
            dropped += 1
            continue
        distance = round(distance_from_rssi(r.rssi, model), 4)
        stored += contacts.add_reading(r.observer, r.observed, r.time, distance)
    return IngestStats(stored, dropped)


class ContactAnswer(NamedTuple):
    hits: list[ContactHit]
    unmapped_dropped: int


def query_contacts(
    master: MasterTable,
    contacts: ContactsTable,
    visitor: str,
    now: int,
) -> ContactAnswer:
    """Contacts of a visitor across their visit window, time-sorted.

    Events whose counterpart device had no visitor assigned at the event
    time are dropped and counted (staff hardware, returned devices).
    """
    looked_up = master.lookup(visitor, now)
    if looked_up is None:
        raise UnknownVisitorError(f"visitor not in master table: {visitor}")
    device, (t_in, t_out) = looked_up
    hits: list[ContactHit] = []
    unmapped = 0
    for event in contacts.events_for(device, t_in, t_out):
        other = event.device_b if event.device_a == device else event.device_a
        counterpart = master.reverse_lookup(other, event.time)
        if counterpart is None:
            unmapped += 1
            continue
        hits.append(ContactHit(counterpart, event.time, event.distance))
    hits.sort(key=lambda h: (h.time, h.visitor))
    return ContactAnswer(hits, unmapped)
