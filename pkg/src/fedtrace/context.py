"""Context-aware analysis of trace answers.

Raw facility answers are deliberately over-inclusive; health officials
narrow them with profiles tuned to the facility type: a distance cap for
packed venues, a persistence requirement for seated ones, wall occlusion
where a layout is on file, and the surface-reuse query for shared spots
like food-court tables. Each filter is an independent predicate evaluated
against the raw hit set, so applying them in any order gives the same
final selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

from .location import ProximityHit, Trajectory
from .positioning import FacilityLayout, ProximityParams, wall_between
from .tables import LocationsTable, MasterTable
from .u2u import ContactHit

Hit = Union[ContactHit, ProximityHit]

FACILITY_TYPES = ("stadium", "restaurant", "mall", "office", "generic")


@dataclass(frozen=True)
class ContextProfile:
    """Per-facility-type interpretation of raw hits. All knobs optional."""

    facility_type: str = "generic"
    max_distance: Optional[float] = None  # meters; None disables the cap
    min_persistence: int = 0  # seconds a contact must span
    persistence_gap: int = 120  # max silence inside one persistent run
    use_wall_occlusion: bool = False
    surface_dwell: int = 60  # seconds both parties must sit in a cell
    surface_lag: int = 1800  # max seconds between leave and arrive

    def __post_init__(self) -> None:
        if self.max_distance is not None and self.max_distance <= 0:
            raise ValueError("max_distance must be positive")
        for name in ("min_persistence", "persistence_gap", "surface_dwell", "surface_lag"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


#: Defaults per facility type. The numbers are configuration, not doctrine.
DEFAULT_PROFILES: dict[str, ContextProfile] = {
    "stadium": ContextProfile("stadium", max_distance=2.0),
    "restaurant": ContextProfile("restaurant", min_persistence=600, persistence_gap=120),
    "mall": ContextProfile("mall", max_distance=5.0),
    "office": ContextProfile("office", min_persistence=300, persistence_gap=120),
    "generic": ContextProfile("generic"),
}


def default_profile(facility_type: str) -> ContextProfile:
    return DEFAULT_PROFILES.get(facility_type, DEFAULT_PROFILES["generic"])


def profile_to_dict(profile: ContextProfile) -> dict:
    return {
        "facility_type": profile.facility_type,
        "max_distance": profile.max_distance,
        "min_persistence": profile.min_persistence,
        "persistence_gap": profile.persistence_gap,
        "use_wall_occlusion": profile.use_wall_occlusion,
        "surface_dwell": profile.surface_dwell,
        "surface_lag": profile.surface_lag,
    }


def profile_from_dict(data: dict) -> ContextProfile:
    """Parse a profile, starting from the named facility type's defaults."""
    base = default_profile(data.get("facility_type", "generic"))
    fields = {"facility_type": base.facility_type}
    for name in (
        "max_distance",
        "min_persistence",
        "persistence_gap",
        "use_wall_occlusion",
        "surface_dwell",
        "surface_lag",
    ):
        fields[name] = data.get(name, getattr(base, name))
    if fields["max_distance"] is not None:
        fields["max_distance"] = float(fields["max_distance"])
    return ContextProfile(
        facility_type=fields["facility_type"],
        max_distance=fields["max_distance"],
        min_persistence=int(fields["min_persistence"]),
        persistence_gap=int(fields["persistence_gap"]),
        use_wall_occlusion=bool(fields["use_wall_occlusion"]),
        surface_dwell=int(fields["surface_dwell"]),
        surface_lag=int(fields["surface_lag"]),
    )


def hit_distance(hit: Hit) -> float:
    if isinstance(hit, ContactHit):
        return hit.estimated_distance
    return hit.spatial_proximity


def filter_signal_profile(hits: Sequence[Hit], profile: ContextProfile) -> list[Hit]:
    """Keep hits at most max_distance away; no cap means identity."""
    if profile.max_distance is None:
        return list(hits)
    return [h for h in hits if hit_distance(h) <= profile.max_distance]


def _persistent_visitors(hits: Sequence[Hit], profile: ContextProfile) -> set[str]:
    by_visitor: dict[str, list[int]] = {}
    for h in hits:
        by_visitor.setdefault(h.visitor, []).append(h.time)
    keep: set[str] = set()
    for visitor, times in by_visitor.items():
        times.sort()
        run_start = times[0]
        prev = times[0]
        for t in times[1:]:
            if t - prev > profile.persistence_gap:
                if prev - run_start >= profile.min_persistence:
                    break
                run_start = t
            prev = t
        if prev - run_start >= profile.min_persistence:
            keep.add(visitor)
    return keep


def filter_persistence(hits: Sequence[Hit], profile: ContextProfile) -> list[Hit]:
    """Keep a visitor's hits iff some run of them (gaps <= persistence_gap)
    spans at least min_persistence seconds."""
    if profile.min_persistence <= 0:
        return list(hits)
    keep = _persistent_visitors(hits, profile)
    return [h for h in hits if h.visitor in keep]


def filter_wall_occlusion(
    hits: Sequence[ProximityHit],
    patient_traj: Trajectory,
    layout: Optional[FacilityLayout],
    params: ProximityParams,
) -> tuple[list[ProximityHit], list[str]]:
    """Drop hits that are wall-separated from every qualifying patient fix.

    A hit survives if at least one patient fix within the query thresholds
    has line of sight to it. Without a layout the filter passes everything
    through and reports a warning instead.
    """
    if layout is None:
        return (list(hits), ["wall_occlusion_skipped_no_layout"])
    kept: list[ProximityHit] = []
    for hit in hits:
        visible = False
        for p in patient_traj.fixes:
            if abs(p.time - hit.time) > params.window:
                continue
            px, py = p.location.center()
            hx, hy = hit.location.center()
            if math.hypot(px - hx, py - hy) > params.radius:
                continue
            if not wall_between(layout, p.location, hit.location):
                visible = True
                break
        if visible:
            kept.append(hit)
    return (kept, [])


def apply_profile(
    hits: Sequence[Hit],
    profile: ContextProfile,
    *,
    mode: str,
    patient_traj: Optional[Trajectory] = None,
    layout: Optional[FacilityLayout] = None,
    params: Optional[ProximityParams] = None,
) -> tuple[list[Hit], list[str]]:
    """Intersect all profile predicates, each evaluated on the raw hits."""
    warnings: list[str] = []
    keep = set(range(len(hits)))

    if profile.max_distance is not None:
        keep &= {i for i in keep if hit_distance(hits[i]) <= profile.max_distance}
    if profile.min_persistence > 0:
        persistent = _persistent_visitors(hits, profile)
        keep &= {i for i in keep if hits[i].visitor in persistent}
    if profile.use_wall_occlusion and mode == "location":
        if patient_traj is None or params is None:
            warnings.append("wall_occlusion_skipped_no_trajectory")
        else:
            visible, occl_warnings = filter_wall_occlusion(
                list(hits), patient_traj, layout, params
            )
            warnings.extend(occl_warnings)
            if not occl_warnings:
                visible_keys = {(h.visitor, h.time, h.location) for h in visible}
                keep &= {
                    i
                    for i in keep
                    if (hits[i].visitor, hits[i].time, hits[i].location) in visible_keys
                }
    return ([hits[i] for i in sorted(keep)], warnings)


class SurfacePair(NamedTuple):
    """A visitor reusing a spot the patient dwelt in, shortly after."""

    visitor: str
    cell: tuple[int, int]
    patient_leave: int
    visitor_arrive: int


def _dwell_runs(fixes: Sequence) -> list[tuple[tuple[int, int], int, int]]:
    """Maximal consecutive same-cell runs as (cell, first_time, last_time)."""
    runs = []
    for fix in fixes:
        cell = fix.location.cell
        if runs and runs[-1][0] == cell:
            runs[-1][2] = fix.time
        else:
            runs.append([cell, fix.time, fix.time])
    return [(cell, first, last) for cell, first, last in runs]


def surface_contacts(
    patient_traj: Trajectory,
    locations: LocationsTable,
    master: MasterTable,
    profile: ContextProfile,
    patient_device: Optional[str] = None,
) -> list[SurfacePair]:
    """Visitors who occupied a patient dwell cell within the lag window.

    Both dwells must last at least ``surface_dwell`` seconds and the
    visitor must arrive strictly after the patient left, at most
    ``surface_lag`` seconds later. Overlapping occupancy is a proximity
    hit, not a surface contact.
    """
    dwell = profile.surface_dwell
    lag = profile.surface_lag
    patient_runs = [
        (cell, first, last)
        for cell, first, last in _dwell_runs(patient_traj.fixes)
        if last - first >= dwell
    ]
    if not patient_runs:
        return []
    by_cell: dict[tuple[int, int], list[int]] = {}
    for cell, _first, last in patient_runs:
        by_cell.setdefault(cell, []).append(last)

    pairs: list[SurfacePair] = []
    for device in locations.devices():
        if device == patient_device:
            continue
        for cell, first, last in _dwell_runs(locations.fixes_for(device)):
            if last - first < dwell:
                continue
            for leave in by_cell.get(cell, ()):
                if 0 < first - leave <= lag:
                    visitor = master.reverse_lookup(device, first)
                    if visitor is not None:
                        pairs.append(SurfacePair(visitor, cell, leave, first))
    pairs.sort(key=lambda p: (p.patient_leave, p.visitor_arrive, p.visitor))
    return pairs


def cell_counts(
    locations: LocationsTable,
    period: tuple[int, int],
    layout: FacilityLayout,
) -> list[list[int]]:
    """Row-major grid of fix counts within the closed period."""
    grid = [[0] * layout.ncols for _ in range(layout.nrows)]
    start, end = period
    for fix in locations.all_fixes():
        if start <= fix.time <= end:
            col, row = fix.location.cell
            if 0 <= col < layout.ncols and 0 <= row < layout.nrows:
                grid[row][col] += 1
    return grid


@dataclass(frozen=True)
class Heatmap:
    """Per-cell fix counts for one facility, with patient cells flagged."""

    facility: str
    cells: tuple[tuple[int, ...], ...]  # row-major
    patient_cells: tuple[tuple[int, int], ...]

    def total(self) -> int:
        return sum(sum(row) for row in self.cells)


def build_heatmap(
    facility: str,
    grids: Sequence[Sequence[Sequence[int]]],
    trajectories: Sequence[Trajectory],
) -> Optional[Heatmap]:
    """Assemble the report heatmap from facility-computed period grids.

    Every response for one facility covers the same trace period, so the
    grids are identical; the first is used. Patient cells are the union
    over the patient's trajectories at that facility.
    """
    if not grids:
        return None
    cells = tuple(tuple(int(v) for v in row) for row in grids[0])
    patient_cells = sorted(
        {fix.location.cell for traj in trajectories for fix in traj.fixes}
    )
    return Heatmap(facility, cells, tuple(patient_cells))
