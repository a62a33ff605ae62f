"""In-memory tables for the registry and the facilities.

Four tables cover the whole system: the registry's visit table
(phone, facility, visitor, time), and per facility a master table
(visitor, device, time_in, time_out), a contacts table of pairwise device
sightings, and a locations table of positioned fixes. Every table keeps
hash indexes over its lookup keys, deletes expired records physically,
and serializes to tab-separated text (one file per table, header first,
timestamps as decimal seconds).

All period and window comparisons use closed intervals [a, b].
"""

from __future__ import annotations

import secrets
from bisect import insort
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Iterable, Iterator, Optional

from .errors import (
    DeviceBusyError,
    DuplicateVisitorError,
    InvalidPhoneError,
)

#: Default retention horizon: two weeks, in seconds.
TWO_WEEKS = 14 * 24 * 3600


def validate_phone(phone: str) -> str:
    """Check the syntactic phone/government-id rule: 8 to 15 digits."""
    if not (8 <= len(phone) <= 15) or not phone.isdigit():
        raise InvalidPhoneError(f"not a valid phone or id number: {phone!r}")
    return phone


@dataclass(frozen=True)
class RetentionPolicy:
    """How long any record may be kept before it must be wiped."""

    horizon: int = TWO_WEEKS

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ValueError("retention horizon must be positive")

    def cutoff(self, now: int) -> int:
        """Records strictly older than this timestamp must go."""
        return now - self.horizon


class TokenIssuer:
    """Issues 128-bit visit pseudonyms as 32 lowercase hex characters.

    Uses the process CSPRNG by default. A seeded ``random.Random`` can be
    injected to make simulation runs byte-reproducible.
    """

    def __init__(self, rng: Random | None = None):
        self._rng = rng

    def issue(self) -> str:
        if self._rng is None:
            return secrets.token_hex(16)
        return f"{self._rng.getrandbits(128):032x}"


@dataclass(frozen=True)
class VisitRecord:
    """Registry-side link between a phone/id number and one pseudonymous visit."""

    phone: str
    facility: str
    visitor: str
    time: int


@dataclass
class MasterRecord:
    """Facility-side link between a pseudonym and a device over a time window."""

    visitor: str
    device: str
    time_in: int
    time_out: Optional[int] = None

    def window(self, now: int) -> tuple[int, int]:
        """Visit window; open visits close at the query time."""
        return (self.time_in, self.time_out if self.time_out is not None else now)

    def contains(self, time: int) -> bool:
        if time < self.time_in:
            return False
        return self.time_out is None or time <= self.time_out


@dataclass(frozen=True)
class SymbolicLocation:
    """Zone label plus grid cell on the facility map.

    ``resolution`` is the grid cell edge in meters; cell centers are the
    reference points for every distance computed between symbolic locations.
    """

    zone: str
    cell: tuple[int, int]
    resolution: float = 1.0

    def center(self) -> tuple[float, float]:
        col, row = self.cell
        return ((col + 0.5) * self.resolution, (row + 0.5) * self.resolution)

    def encode(self) -> str:
        return f"{self.zone}|{self.cell[0]}|{self.cell[1]}|{self.resolution!r}"

    @classmethod
    def decode(cls, text: str) -> "SymbolicLocation":
        zone, col, row, res = text.split("|")
        return cls(zone, (int(col), int(row)), float(res))


@dataclass(frozen=True)
class ContactEvent:
    """One pairwise sighting, stored symmetrically, distance in meters."""

    device_a: str
    device_b: str
    time: int
    distance: float


@dataclass(frozen=True)
class LocationFix:
    """A positioned device at a point in time."""

    device: str
    location: SymbolicLocation
    time: int


class VisitTable:
    """The registry's single big table, indexed by phone and by visitor."""

    FIELDS = ("phone", "facility", "visitor", "time")

    def __init__(self) -> None:
        self._records: list[VisitRecord] = []
        self._by_phone: dict[str, list[VisitRecord]] = {}
        self._by_visitor: dict[str, VisitRecord] = {}

    def __len__(self) -> int:
        return len(self._records)

    def insert(self, rec: VisitRecord) -> None:
        if rec.visitor in self._by_visitor:
            raise DuplicateVisitorError(f"visitor id issued twice: {rec.visitor}")
        self._records.append(rec)
        self._by_phone.setdefault(rec.phone, []).append(rec)
        self._by_visitor[rec.visitor] = rec

    def lookup_by_phone(self, phone: str, period: tuple[int, int]) -> list[VisitRecord]:
        """All visits of a phone within the closed period, time-ascending."""
        start, end = period
        if start > end:
            raise ValueError("period start after end")
        hits = [r for r in self._by_phone.get(phone, ()) if start <= r.time <= end]
        hits.sort(key=lambda r: (r.time, r.visitor))
        return hits

    def lookup_by_visitor(self, visitor: str) -> Optional[VisitRecord]:
        return self._by_visitor.get(visitor)

    def records(self) -> list[VisitRecord]:
        return list(self._records)

    def wipe_expired(self, cutoff: int) -> int:
        """Physically drop records with time < cutoff; rebuild both indexes."""
        keep = [r for r in self._records if r.time >= cutoff]
        deleted = len(self._records) - len(keep)
        if deleted:
            self._records = keep
            self._by_phone = {}
            self._by_visitor = {}
            for r in keep:
                self._by_phone.setdefault(r.phone, []).append(r)
                self._by_visitor[r.visitor] = r
        return deleted

    def to_lines(self) -> Iterator[str]:
        yield "\t".join(self.FIELDS)
        for r in self._records:
            yield f"{r.phone}\t{r.facility}\t{r.visitor}\t{r.time}"

    def load_lines(self, lines: Iterable[str]) -> None:
        for line in _data_lines(lines, self.FIELDS):
            phone, facility, visitor, time = line.split("\t")
            self.insert(VisitRecord(phone, facility, visitor, int(time)))


class MasterTable:
    """Visitor-to-device assignments, indexed by visitor and by device.

    For a fixed device the closed windows [time_in, time_out] never overlap,
    so a timestamped reverse lookup is unambiguous.
    """

    FIELDS = ("visitor", "device", "time_in", "time_out")

    def __init__(self) -> None:
        self._records: list[MasterRecord] = []
        self._by_visitor: dict[str, MasterRecord] = {}
        self._by_device: dict[str, list[MasterRecord]] = {}

    def __len__(self) -> int:
        return len(self._records)

    def open_assignment(self, visitor: str, device: str, time_in: int) -> MasterRecord:
        if visitor in self._by_visitor:
            raise DuplicateVisitorError(f"visitor already in master table: {visitor}")
        for rec in self._by_device.get(device, ()):
            if rec.time_out is None or rec.time_out >= time_in:
                raise DeviceBusyError(f"device {device} busy at {time_in}")
        rec = MasterRecord(visitor, device, time_in)
        self._records.append(rec)
        self._by_visitor[visitor] = rec
        self._by_device.setdefault(device, []).append(rec)
        return rec

    def close(self, device: str, time_out: int) -> MasterRecord:
        rec = self.open_record(device)
        if rec is None:
            raise DeviceBusyError(f"device {device} has no open assignment")
        if time_out < rec.time_in:
            raise ValueError("time_out before time_in")
        rec.time_out = time_out
        return rec

    def open_record(self, device: str) -> Optional[MasterRecord]:
        for rec in self._by_device.get(device, ()):
            if rec.time_out is None:
                return rec
        return None

    def device_free(self, device: str, at: int) -> bool:
        """True when a new window starting at ``at`` would not overlap."""
        return all(
            rec.time_out is not None and rec.time_out < at
            for rec in self._by_device.get(device, ())
        )

    def lookup(self, visitor: str, now: int) -> Optional[tuple[str, tuple[int, int]]]:
        """Device and visit window for a visitor; open visits end at ``now``."""
        rec = self._by_visitor.get(visitor)
        if rec is None:
            return None
        return (rec.device, rec.window(now))

    def reverse_lookup(self, device: str, time: int) -> Optional[str]:
        """Visitor holding the device at the given instant, if any."""
        for rec in self._by_device.get(device, ()):
            if rec.contains(time):
                return rec.visitor
        return None

    def has_visitor(self, visitor: str) -> bool:
        return visitor in self._by_visitor

    def records(self) -> list[MasterRecord]:
        return list(self._records)

    def wipe_expired(self, cutoff: int) -> int:
        """Drop records whose time_out (or time_in while open) < cutoff."""

        def stale(rec: MasterRecord) -> bool:
            stamp = rec.time_in if rec.time_out is None else rec.time_out
            return stamp < cutoff

        keep = [r for r in self._records if not stale(r)]
        deleted = len(self._records) - len(keep)
        if deleted:
            self._records = keep
            self._by_visitor = {r.visitor: r for r in keep}
            self._by_device = {}
            for r in keep:
                self._by_device.setdefault(r.device, []).append(r)
        return deleted

    def to_lines(self) -> Iterator[str]:
        yield "\t".join(self.FIELDS)
        for r in self._records:
            out = "" if r.time_out is None else str(r.time_out)
            yield f"{r.visitor}\t{r.device}\t{r.time_in}\t{out}"

    def load_lines(self, lines: Iterable[str]) -> None:
        for line in _data_lines(lines, self.FIELDS):
            visitor, device, time_in, time_out = line.split("\t")
            rec = self.open_assignment(visitor, device, int(time_in))
            if time_out:
                rec.time_out = int(time_out)


def pair_key(device_a: str, device_b: str) -> tuple[str, str]:
    return (device_a, device_b) if device_a <= device_b else (device_b, device_a)


class ContactsTable:
    """Pairwise sightings merged into symmetric contact events.

    Readings arrive per device in batches (typically at hand-back time), so
    the two sides of a mutual sighting may land in different batches. A
    reading is matched greedily against the earliest unmatched opposite-
    direction reading of the same pair within ``dedup_window`` seconds; the
    merged event keeps the earlier timestamp and the mean distance. Readings
    that never find a partner still count as events. Re-ingesting a reading
    with an already-seen (pair, time, direction) key is a no-op, which makes
    batch ingestion idempotent.
    """

    FIELDS = ("device_a", "device_b", "time", "distance")

    def __init__(self, dedup_window: int = 5):
        self.dedup_window = dedup_window
        # pair -> {event time: distance}
        self._events: dict[tuple[str, str], dict[int, float]] = {}
        # pair -> sorted list of unmatched (time, direction, distance)
        self._pending: dict[tuple[str, str], list[tuple[int, int, float]]] = {}
        # pair -> {(time << 1) | direction} of every reading ever accepted
        self._seen: dict[tuple[str, str], set[int]] = {}
        self._pairs_of: dict[str, set[tuple[str, str]]] = {}

    def event_count(self) -> int:
        return sum(len(evs) for evs in self._events.values()) + sum(
            len(p) for p in self._pending.values()
        )

    def add_reading(self, observer: str, observed: str, time: int, distance: float) -> int:
        """Record one directed sighting. Returns the change in event count."""
        if observer == observed:
            raise ValueError("self-sighting")
        pair = pair_key(observer, observed)
        direction = 0 if observer == pair[0] else 1
        seen = self._seen.setdefault(pair, set())
        key = (time << 1) | direction
        if key in seen:
            return 0
        seen.add(key)
        self._register_pair(pair)
        pending = self._pending.setdefault(pair, [])
        for i, (ptime, pdir, pdist) in enumerate(pending):
            if pdir != direction and abs(time - ptime) <= self.dedup_window:
                del pending[i]
                self._store_event(pair, min(time, ptime), (distance + pdist) / 2.0)
                return 0
        insort(pending, (time, direction, distance))
        return 1

    def insert_event(self, event: ContactEvent) -> None:
        """Direct insertion, used by fixtures and snapshot loading."""
        if event.device_a == event.device_b:
            raise ValueError("self-contact event")
        pair = pair_key(event.device_a, event.device_b)
        self._register_pair(pair)
        self._store_event(pair, event.time, event.distance)

    def _register_pair(self, pair: tuple[str, str]) -> None:
        self._pairs_of.setdefault(pair[0], set()).add(pair)
        self._pairs_of.setdefault(pair[1], set()).add(pair)

    def _store_event(self, pair: tuple[str, str], time: int, distance: float) -> None:
        events = self._events.setdefault(pair, {})
        if time in events:
            # Same (pair, time) from two different merge paths: average.
            events[time] = (events[time] + distance) / 2.0
        else:
            events[time] = distance

    def events_for(
        self, device: str, start: Optional[int] = None, end: Optional[int] = None
    ) -> list[ContactEvent]:
        """Every event touching the device within [start, end], time-sorted."""
        out: list[ContactEvent] = []
        for pair in self._pairs_of.get(device, ()):
            for time, dist in self._events.get(pair, {}).items():
                if (start is None or time >= start) and (end is None or time <= end):
                    out.append(ContactEvent(pair[0], pair[1], time, dist))
            for time, _direction, dist in self._pending.get(pair, ()):
                if (start is None or time >= start) and (end is None or time <= end):
                    out.append(ContactEvent(pair[0], pair[1], time, dist))
        out.sort(key=lambda e: (e.time, e.device_a, e.device_b))
        return out

    def all_events(self) -> list[ContactEvent]:
        out: list[ContactEvent] = []
        for pair, events in self._events.items():
            out.extend(ContactEvent(pair[0], pair[1], t, d) for t, d in events.items())
        for pair, pending in self._pending.items():
            out.extend(ContactEvent(pair[0], pair[1], t, d) for t, _dir, d in pending)
        out.sort(key=lambda e: (e.time, e.device_a, e.device_b))
        return out

    def wipe_expired(self, cutoff: int) -> int:
        deleted = 0
        for pair in list(self._events):
            events = self._events[pair]
            stale = [t for t in events if t < cutoff]
            deleted += len(stale)
            for t in stale:
                del events[t]
            if not events:
                del self._events[pair]
        for pair in list(self._pending):
            pending = self._pending[pair]
            kept = [p for p in pending if p[0] >= cutoff]
            deleted += len(pending) - len(kept)
            if kept:
                self._pending[pair] = kept
            else:
                del self._pending[pair]
        for pair in list(self._seen):
            seen = self._seen[pair]
            self._seen[pair] = {k for k in seen if (k >> 1) >= cutoff}
            if not self._seen[pair]:
                del self._seen[pair]
        return deleted

    def to_lines(self) -> Iterator[str]:
        yield "\t".join(self.FIELDS)
        for e in self.all_events():
            yield f"{e.device_a}\t{e.device_b}\t{e.time}\t{e.distance:.4f}"

    def load_lines(self, lines: Iterable[str]) -> None:
        for line in _data_lines(lines, self.FIELDS):
            a, b, time, distance = line.split("\t")
            self.insert_event(ContactEvent(a, b, int(time), float(distance)))


class LocationsTable:
    """Positioned fixes per device, one per (device, timestamp)."""

    FIELDS = ("device", "location", "time")

    def __init__(self) -> None:
        self._fixes: dict[str, dict[int, SymbolicLocation]] = {}
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def insert(self, fix: LocationFix) -> bool:
        """Store a fix; duplicate (device, time) entries are ignored."""
        per_device = self._fixes.setdefault(fix.device, {})
        if fix.time in per_device:
            return False
        per_device[fix.time] = fix.location
        self._count += 1
        return True

    def fixes_for(
        self, device: str, start: Optional[int] = None, end: Optional[int] = None
    ) -> list[LocationFix]:
        per_device = self._fixes.get(device, {})
        times = sorted(
            t
            for t in per_device
            if (start is None or t >= start) and (end is None or t <= end)
        )
        return [LocationFix(device, per_device[t], t) for t in times]

    def devices(self) -> list[str]:
        return sorted(self._fixes)

    def all_fixes(self) -> Iterator[LocationFix]:
        for device in sorted(self._fixes):
            per_device = self._fixes[device]
            for t in sorted(per_device):
                yield LocationFix(device, per_device[t], t)

    def wipe_expired(self, cutoff: int) -> int:
        deleted = 0
        for device in list(self._fixes):
            per_device = self._fixes[device]
            stale = [t for t in per_device if t < cutoff]
            deleted += len(stale)
            for t in stale:
                del per_device[t]
            if not per_device:
                del self._fixes[device]
        self._count -= deleted
        return deleted

    def to_lines(self) -> Iterator[str]:
        yield "\t".join(self.FIELDS)
        for fix in self.all_fixes():
            yield f"{fix.device}\t{fix.location.encode()}\t{fix.time}"

    def load_lines(self, lines: Iterable[str]) -> None:
        for line in _data_lines(lines, self.FIELDS):
            device, loc, time = line.split("\t")
            self.insert(LocationFix(device, SymbolicLocation.decode(loc), int(time)))


def _data_lines(lines: Iterable[str], fields: tuple[str, ...]) -> Iterator[str]:
    it = iter(lines)
    header = next(it, None)
    if header is not None and header.rstrip("\n") != "\t".join(fields):
        raise ValueError(f"unexpected snapshot header: {header!r}")
    for line in it:
        line = line.rstrip("\n")
        if line:
            yield line


def save_table(path: Path, table) -> None:
    path.write_text("\n".join(table.to_lines()) + "\n", encoding="utf-8")


def load_table(path: Path, table) -> None:
    with path.open(encoding="utf-8") as fh:
        table.load_lines(fh)
