"""Registry-side registration flow.

The government registry is the only party that ever holds phone numbers.
Sign-in runs on the registry machine at the facility entrance: it issues a
fresh pseudonym, completes the device exchange with the facility over an
authenticated channel, records the visit, and notifies the visitor by SMS
(simulated as an outbox event). Frequent-visitor badges are linked to
phone numbers registry-side, so a badge scan is just a sign-in whose
device is the badge itself.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from random import Random
from typing import Optional

from .context import ContextProfile
from .errors import DeviceBusyError, UnknownBadgeError, UnknownFacilityError
from .messages import FacilityClient
from .positioning import FacilityLayout
from .tables import (
    RetentionPolicy,
    TokenIssuer,
    VisitRecord,
    VisitTable,
    validate_phone,
)

#: SMS destination used when the visitor identified by government id.
MACHINE = "machine"


@dataclass(frozen=True)
class DeviceAssignment:
    visitor: str
    device: str
    facility: str
    issued_at: int


@dataclass(frozen=True)
class SmsEvent:
    """Simulated SMS; the body carries exactly one visitor pseudonym."""

    destination: str  # phone digits, or MACHINE
    body: str
    time: int


@dataclass(frozen=True)
class FrequentVisitorLink:
    phone: str
    facility: str
    badge: str


@dataclass
class FacilityEntry:
    """Directory row: how the registry reaches and interprets one facility."""

    facility_id: str
    mode: str  # "u2u", "location", or "both"
    facility_type: str
    client: FacilityClient
    layout: Optional[FacilityLayout] = None
    profile: Optional[ContextProfile] = None  # standing override, else type default

    @property
    def modes(self) -> tuple[str, ...]:
        if self.mode == "both":
            return ("location", "u2u")
        return (self.mode,)


class Registry:
    """The government-owned server: visit table, pseudonyms, directory."""

    def __init__(
        self,
        policy: Optional[RetentionPolicy] = None,
        token_rng: Optional[Random] = None,
    ):
        self.policy = policy or RetentionPolicy()
        self.issuer = TokenIssuer(token_rng)
        self.visits = VisitTable()
        self.directory: dict[str, FacilityEntry] = {}
        self.sms_outbox: list[SmsEvent] = []
        self._links: dict[tuple[str, str], str] = {}  # (facility, badge) -> phone
        self._badge_of: dict[tuple[str, str], str] = {}  # (facility, phone) -> badge
        self.reports: dict[str, dict] = {}
        self.trace_cache: dict[tuple, object] = {}
        self._report_serial = 0
        self._lock = threading.RLock()

    def register_facility(self, entry: FacilityEntry) -> None:
        self.directory[entry.facility_id] = entry

    def _entry(self, facility: str) -> FacilityEntry:
        entry = self.directory.get(facility)
        if entry is None:
            raise UnknownFacilityError(f"facility not in directory: {facility}")
        return entry

    def _sign_in(
        self,
        number: str,
        facility: str,
        now: int,
        device: Optional[str],
        sms_destination: str,
    ) -> tuple[DeviceAssignment, SmsEvent]:
        validate_phone(number)
        entry = self._entry(facility)
        with self._lock:
            visitor = self.issuer.issue()
            assigned = entry.client.exchange(visitor, device, now)
            self.visits.insert(VisitRecord(number, facility, visitor, now))
            sms = SmsEvent(
                destination=sms_destination,
                body=f"Your visit code for facility {facility} is {visitor}.",
                time=now,
            )
            self.sms_outbox.append(sms)
            return (DeviceAssignment(visitor, assigned, facility, now), sms)

    def sign_in(
        self, phone: str, facility: str, now: int, device: Optional[str] = None
    ) -> tuple[DeviceAssignment, SmsEvent]:
        """Sign in with a phone number; the SMS goes to the visitor."""
        return self._sign_in(phone, facility, now, device, sms_destination=phone)

    def sign_in_by_gov_id(
        self, gov_id: str, facility: str, now: int, device: Optional[str] = None
    ) -> tuple[DeviceAssignment, SmsEvent]:
        """Sign in with a government id; the SMS stays on the machine."""
        return self._sign_in(gov_id, facility, now, device, sms_destination=MACHINE)

    def register_frequent(self, phone: str, facility: str, badge: str) -> FrequentVisitorLink:
        """One-time setup linking a phone to a badge device at a facility."""
        validate_phone(phone)
        self._entry(facility)
        with self._lock:
            holder = self._links.get((facility, badge))
            if holder is not None and holder != phone:
                raise DeviceBusyError(f"badge {badge} already linked at {facility}")
            previous = self._badge_of.get((facility, phone))
            if previous is not None and previous != badge:
                del self._links[(facility, previous)]
            self._links[(facility, badge)] = phone
            self._badge_of[(facility, phone)] = badge
            return FrequentVisitorLink(phone, facility, badge)

    def badge_scan(self, badge: str, facility: str, now: int) -> DeviceAssignment:
        """Badge scan at the entrance: a sign-in whose device is the badge."""
        phone = self._links.get((facility, badge))
        if phone is None:
            raise UnknownBadgeError(f"badge not registered at {facility}: {badge}")
        assignment, _sms = self.sign_in(phone, facility, now, device=badge)
        return assignment

    def next_report_id(self) -> str:
        with self._lock:
            self._report_serial += 1
            return f"trace-{self._report_serial:04d}"

    def wipe_expired(self, now: int) -> int:
        """Drop expired visits; stale SMS events and cached answers go too."""
        cutoff = self.policy.cutoff(now)
        with self._lock:
            deleted = self.visits.wipe_expired(cutoff)
            self.sms_outbox = [s for s in self.sms_outbox if s.time >= cutoff]
            self.trace_cache.clear()
            return deleted
