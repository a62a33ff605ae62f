"""Wire message shapes exchanged between the registry and facilities.

These are the only things that ever cross the trust boundary toward a
facility, and none of them carries a phone number. Field names are the
wire schema; the HTTP layer serializes them one-to-one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Union

from .context import SurfacePair
from .location import ProximityHit, Trajectory
from .positioning import ProximityParams
from .u2u import ContactHit


@dataclass(frozen=True)
class SurfaceParams:
    """Dwell/lag thresholds for the facility-side surface-reuse scan."""

    dwell: int
    lag: int


@dataclass(frozen=True)
class FacilityQuery:
    """One trace inquiry for one visit, sent registry -> facility."""

    request_id: str
    visitor: str
    mode: str  # "u2u" or "location"
    now: int  # closes open visit windows deterministically
    period: tuple[int, int]
    params: ProximityParams = field(default_factory=ProximityParams)
    surface: Optional[SurfaceParams] = None
    want_trajectory: bool = True

    def cache_key(self) -> tuple:
        return (
            self.visitor,
            self.mode,
            self.now,
            self.period,
            self.params.radius,
            self.params.window,
            self.surface,
            self.want_trajectory,
        )


@dataclass
class FacilityResponse:
    """Facility answer: mode-tagged hits plus location-mode extras."""

    request_id: str
    mode: str
    hits: Sequence[Union[ContactHit, ProximityHit]]
    trajectory: Optional[Trajectory] = None
    surface_pairs: Sequence[SurfacePair] = ()
    cell_counts: Optional[list[list[int]]] = None
    diagnostics: dict[str, int] = field(default_factory=dict)


class FacilityClient(Protocol):
    """What the registry needs from a facility, in-process or over HTTP."""

    def exchange(self, visitor: str, device: Optional[str], time: int) -> str:
        """Complete a sign-in: bind the visitor pseudonym to a device.

        Returns the device actually handed out (the facility may pick one
        from its pool when none is named).
        """

    def hand_back(self, device: str, time: int) -> str:
        """Close the device's open assignment; returns the visitor."""

    def trace_query(self, query: FacilityQuery) -> FacilityResponse:
        """Answer a trace inquiry."""
