"""Facility-side state and behavior.

A facility owns a master table plus, depending on its tracing mode, a
contacts table (user-to-user) and/or a locations table with a layout
(location-based). It never sees a phone number: visitors arrive as
pseudonyms through the device exchange. ``serialize_state`` dumps every
byte a facility holds, which is what the pseudonymity checks scan.

Mutations take a coarse per-facility lock: one writer at a time, queries
serialized between write batches, which trivially gives each query a
consistent snapshot.
"""

from __future__ import annotations

import json
import threading
from typing import Iterable, Optional

from .context import ContextProfile, SurfacePair, cell_counts, surface_contacts
from .errors import (
    DevicePoolExhaustedError,
    InvalidRequestError,
    NotSignedInError,
    UnknownDeviceError,
    UnsupportedModeError,
)
from .location import (
    LocationIngestStats,
    ingest_gateway_readings,
    query_proximity,
)
from .messages import FacilityQuery, FacilityResponse
from .positioning import (
    DEFAULT_EPOCH,
    FacilityLayout,
    GatewayReading,
    PathLossModel,
)
from .tables import ContactsTable, LocationsTable, MasterTable, RetentionPolicy
from .u2u import IngestStats, RawReading, ingest_device_logs, query_contacts

MODES = ("u2u", "location", "both")


class Facility:
    """One facility's tables, device pool, and query answering."""

    def __init__(
        self,
        facility_id: str,
        mode: str,
        layout: Optional[FacilityLayout] = None,
        model: Optional[PathLossModel] = None,
        device_pool: Optional[Iterable[str]] = None,
        facility_type: str = "generic",
        dedup_window: int = 5,
        epoch: int = DEFAULT_EPOCH,
    ):
        if mode not in MODES:
            raise InvalidRequestError(f"unknown facility mode: {mode}")
        if mode in ("location", "both") and layout is None:
            raise InvalidRequestError("location-based facilities need a layout")
        self.facility_id = facility_id
        self.mode = mode
        self.layout = layout
        self.model = model or PathLossModel()
        self.facility_type = facility_type
        self.epoch = epoch
        self.device_pool = sorted(device_pool) if device_pool is not None else None
        self.master = MasterTable()
        self.contacts = ContactsTable(dedup_window) if mode in ("u2u", "both") else None
        self.locations = LocationsTable() if mode in ("location", "both") else None
        self.counters: dict[str, int] = {}
        self._lock = threading.RLock()

    # -- registration side ------------------------------------------------

    @property
    def modes(self) -> tuple[str, ...]:
        if self.mode == "both":
            return ("location", "u2u")
        return (self.mode,)

    def supports(self, mode: str) -> bool:
        return mode in self.modes

    def exchange(self, visitor: str, device: Optional[str], time: int) -> str:
        """Bind a pseudonym to a device; allocates from the pool if unnamed."""
        with self._lock:
            if device is None:
                device = self._allocate(time)
            elif self.device_pool is not None and device not in self.device_pool:
                raise UnknownDeviceError(f"device not in pool: {device}")
            self.master.open_assignment(visitor, device, time)
            return device

    def _allocate(self, time: int) -> str:
        if self.device_pool is None:
            raise InvalidRequestError("facility has no device pool to allocate from")
        for device in self.device_pool:
            if self.master.device_free(device, time):
                return device
        raise DevicePoolExhaustedError(f"no free device at {self.facility_id}")

    def hand_back(self, device: str, time: int) -> str:
        """Device returned at the exit; closes the visit window."""
        with self._lock:
            rec = self.master.open_record(device)
            if rec is None:
                raise NotSignedInError(f"device has no open assignment: {device}")
            self.master.close(device, time)
            return rec.visitor

    # -- ingestion ---------------------------------------------------------

    def ingest_u2u(self, readings: Iterable[RawReading]) -> IngestStats:
        if self.contacts is None:
            raise UnsupportedModeError(f"{self.facility_id} does not run u2u tracing")
        with self._lock:
            stats = ingest_device_logs(self.contacts, readings, self.model)
            self._bump("self_sightings_dropped", stats.self_sightings_dropped)
            return stats

    def ingest_location(self, readings: Iterable[GatewayReading]) -> LocationIngestStats:
        if self.locations is None:
            raise UnsupportedModeError(f"{self.facility_id} does not run location tracing")
        with self._lock:
            stats = ingest_gateway_readings(
                self.locations, readings, self.layout, self.model, self.epoch
            )
            self._bump("unknown_gateway_dropped", stats.unknown_gateway_dropped)
            self._bump("no_fix_epochs", stats.no_fix_epochs)
            self._bump("degenerate_epochs", stats.degenerate_epochs)
            return stats

    def _bump(self, key: str, amount: int) -> None:
        if amount:
            self.counters[key] = self.counters.get(key, 0) + amount

    # -- trace queries -----------------------------------------------------

    def answer_trace_query(self, query: FacilityQuery) -> FacilityResponse:
        """Answer one trace inquiry in the requested mode."""
        if not self.supports(query.mode):
            raise UnsupportedModeError(
                f"{self.facility_id} ({self.mode}) cannot answer {query.mode} queries"
            )
        with self._lock:
            if query.mode == "u2u":
                answer = query_contacts(self.master, self.contacts, query.visitor, query.now)
                return FacilityResponse(
                    request_id=query.request_id,
                    mode="u2u",
                    hits=answer.hits,
                    diagnostics={"unmapped_contact_devices": answer.unmapped_dropped},
                )
            answer = query_proximity(
                self.master, self.locations, query.visitor, query.now, query.params
            )
            surface: list[SurfacePair] = []
            if query.surface is not None:
                profile = ContextProfile(
                    surface_dwell=query.surface.dwell, surface_lag=query.surface.lag
                )
                patient_device = self.master.lookup(query.visitor, query.now)[0]
                surface = surface_contacts(
                    answer.trajectory, self.locations, self.master, profile, patient_device
                )
            return FacilityResponse(
                request_id=query.request_id,
                mode="location",
                hits=answer.hits,
                trajectory=answer.trajectory if query.want_trajectory else None,
                surface_pairs=surface,
                cell_counts=cell_counts(self.locations, query.period, self.layout),
                diagnostics={"unmapped_proximity_devices": answer.unmapped_dropped},
            )

    # -- retention and state dumps ------------------------------------------

    def wipe_expired(self, now: int, policy: RetentionPolicy) -> int:
        """Physically delete everything older than the retention horizon."""
        cutoff = policy.cutoff(now)
        with self._lock:
            deleted = self.master.wipe_expired(cutoff)
            if self.contacts is not None:
                deleted += self.contacts.wipe_expired(cutoff)
            if self.locations is not None:
                deleted += self.locations.wipe_expired(cutoff)
            return deleted

    def serialize_state(self) -> bytes:
        """Every byte this facility holds, for snapshots and privacy scans."""
        with self._lock:
            parts = [f"# facility {self.facility_id} mode={self.mode}"]
            if self.device_pool is not None:
                parts.append("## pool")
                parts.extend(self.device_pool)
            parts.append("## master")
            parts.extend(self.master.to_lines())
            if self.contacts is not None:
                parts.append("## contacts")
                parts.extend(self.contacts.to_lines())
            if self.locations is not None:
                parts.append("## locations")
                parts.extend(self.locations.to_lines())
            parts.append("## counters")
            parts.append(json.dumps(self.counters, sort_keys=True))
            return ("\n".join(parts) + "\n").encode("utf-8")

    def save_snapshot(self, directory) -> None:
        """One TSV file per table under the given directory."""
        from pathlib import Path

        base = Path(directory)
        base.mkdir(parents=True, exist_ok=True)
        (base / "master.tsv").write_text(
            "\n".join(self.master.to_lines()) + "\n", encoding="utf-8"
        )
        if self.contacts is not None:
            (base / "contacts.tsv").write_text(
                "\n".join(self.contacts.to_lines()) + "\n", encoding="utf-8"
            )
        if self.locations is not None:
            (base / "locations.tsv").write_text(
                "\n".join(self.locations.to_lines()) + "\n", encoding="utf-8"
            )


class InProcessFacilityClient:
    """Direct adapter: the registry calls the facility object in memory."""

    def __init__(self, facility: Facility):
        self.facility = facility

    def exchange(self, visitor: str, device: Optional[str], time: int) -> str:
        return self.facility.exchange(visitor, device, time)

    def hand_back(self, device: str, time: int) -> str:
        return self.facility.hand_back(device, time)

    def trace_query(self, query: FacilityQuery) -> FacilityResponse:
        return self.facility.answer_trace_query(query)
