"""Deterministic scenario engine and ground-truth oracle.

Synthesizes facility layouts, visitor mobility (random waypoint inside
zone rectangles), sign-in/out flows, and the radio readings both tracing
modes consume. Everything derives from one seed: the same spec produces
byte-identical event streams and, through the seeded pseudonym issuer,
byte-identical trace reports.

The ground truth keeps continuous 1 Hz positions per visit and never
touches the tables built by the system under test; the brute-force
contact oracle works on those positions alone.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Iterable, Iterator, NamedTuple, Optional, Union

import numpy as np

from .errors import InfeasiblePlanError
from .facility import Facility, InProcessFacilityClient
from .positioning import FacilityLayout, GatewayReading, PathLossModel, grid_layout
from .registration import FacilityEntry, Registry
from .tables import RetentionPolicy
from .u2u import RawReading

DEFAULT_BASE_TIME = 1_700_000_000


def phone_for(index: int) -> str:
    """Synthetic phone numbers: 5550000000, 5550000001, ..."""
    return str(5_550_000_000 + index)


# -- scenario specification ---------------------------------------------------


@dataclass(frozen=True)
class MobilityParams:
    waypoint_dwell_mean: float = 30.0  # seconds
    speed: float = 1.2  # m/s


@dataclass(frozen=True)
class PlannedContact:
    """Force a visitor alongside the patient for a while."""

    contact: int  # visitor index
    facility: str
    start: int  # offset from scenario start, seconds
    duration: int
    distance: float  # meters kept between the two


@dataclass(frozen=True)
class InfectionPlan:
    patient: int = 0
    planted: tuple[PlannedContact, ...] = ()


@dataclass(frozen=True)
class FacilitySpec:
    facility_id: str
    mode: str  # "u2u", "location", or "both"
    layout: FacilityLayout
    facility_type: str = "generic"


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    facilities: tuple[FacilitySpec, ...]
    visitors: int
    duration: int  # seconds of simulated time
    mobility: MobilityParams = field(default_factory=MobilityParams)
    sampling: int = 1  # seconds between radio emissions
    plan: Optional[InfectionPlan] = None
    visit_duration_mean: float = 900.0
    base_time: int = DEFAULT_BASE_TIME
    visibility_range: float = 15.0  # device-to-device radio cutoff, meters
    gateway_range: float = 35.0  # beacon-to-gateway cutoff, meters
    contact_radius: float = 2.0  # "true contact" radius for GroundTruth.pairs
    model: PathLossModel = field(default_factory=PathLossModel)

    def to_dict(self) -> dict:
        themap = {
            "seed": self.seed,
            "visitors": self.visitors,
            "duration": self.duration,
            "sampling": self.sampling,
            "visit_duration_mean": self.visit_duration_mean,
            "base_time": self.base_time,
            "visibility_range": self.visibility_range,
            "gateway_range": self.gateway_range,
            "contact_radius": self.contact_radius,
            "mobility": {
                "waypoint_dwell_mean": self.mobility.waypoint_dwell_mean,
                "speed": self.mobility.speed,
            },
            "model": {
                "reference_power": self.model.reference_power,
                "exponent": self.model.exponent,
                "noise_sigma": self.model.noise_sigma,
                "min_distance": self.model.min_distance,
            },
            "facilities": [
                {
                    "id": f.facility_id,
                    "mode": f.mode,
                    "type": f.facility_type,
                    "layout": f.layout.to_dict(),
                }
                for f in self.facilities
            ],
        }
        if self.plan is not None:
            themap["infection_plan"] = {
                "patient": self.plan.patient,
                "planted": [
                    {
                        "contact": p.contact,
                        "facility": p.facility,
                        "start": p.start,
                        "duration": p.duration,
                        "distance": p.distance,
                    }
                    for p in self.plan.planted
                ],
            }
        return themap

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        facilities = []
        for f in data["facilities"]:
            if "layout" in f:
                layout = FacilityLayout.from_dict(f["layout"])
            else:
                layout = grid_layout(
                    float(f.get("width", 30.0)),
                    float(f.get("height", 30.0)),
                    gateway_grid=int(f.get("gateway_grid", 3)),
                )
            facilities.append(
                FacilitySpec(f["id"], f["mode"], layout, f.get("type", "generic"))
            )
        plan = None
        if "infection_plan" in data:
            raw = data["infection_plan"]
            plan = InfectionPlan(
                patient=int(raw.get("patient", 0)),
                planted=tuple(
                    PlannedContact(
                        contact=int(p["contact"]),
                        facility=p["facility"],
                        start=int(p["start"]),
                        duration=int(p["duration"]),
                        distance=float(p["distance"]),
                    )
                    for p in raw.get("planted", ())
                ),
            )
        mobility = MobilityParams(
            waypoint_dwell_mean=float(data.get("mobility", {}).get("waypoint_dwell_mean", 30.0)),
            speed=float(data.get("mobility", {}).get("speed", 1.2)),
        )
        model_raw = data.get("model", {})
        model = PathLossModel(
            reference_power=float(model_raw.get("reference_power", -59.0)),
            exponent=float(model_raw.get("exponent", 2.0)),
            noise_sigma=float(model_raw.get("noise_sigma", 2.0)),
            min_distance=float(model_raw.get("min_distance", 0.1)),
        )
        return cls(
            seed=int(data["seed"]),
            facilities=tuple(facilities),
            visitors=int(data["visitors"]),
            duration=int(data["duration"]),
            mobility=mobility,
            sampling=int(data.get("sampling", 1)),
            plan=plan,
            visit_duration_mean=float(data.get("visit_duration_mean", 900.0)),
            base_time=int(data.get("base_time", DEFAULT_BASE_TIME)),
            visibility_range=float(data.get("visibility_range", 15.0)),
            gateway_range=float(data.get("gateway_range", 35.0)),
            contact_radius=float(data.get("contact_radius", 2.0)),
            model=model,
        )

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "ScenarioSpec":
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


# -- ground truth -------------------------------------------------------------


@dataclass
class TruthVisit:
    person: int
    facility: str
    device: str
    t_in: int  # absolute timestamps, [t_in, t_out] inclusive
    t_out: int
    xs: np.ndarray  # continuous positions at 1 Hz, length t_out - t_in + 1
    ys: np.ndarray

    def position(self, t: int) -> tuple[float, float]:
        i = t - self.t_in
        return (float(self.xs[i]), float(self.ys[i]))


@dataclass
class GroundTruth:
    """Everything the oracle knows, independent of the tracing pipeline."""

    phones: list[str]  # phone per person index
    visits: list[TruthVisit]
    pairs: dict[str, set[tuple[int, int]]] = field(default_factory=dict)

    def visits_of(self, person: int) -> list[TruthVisit]:
        return [v for v in self.visits if v.person == person]


# -- event stream -------------------------------------------------------------


class SignInEvent(NamedTuple):
    time: int
    phone: str
    facility: str
    device: str

    def line(self) -> str:
        return f"signin\t{self.time}\t{self.phone}\t{self.facility}\t{self.device}"


class SignOutEvent(NamedTuple):
    time: int
    facility: str
    device: str

    def line(self) -> str:
        return f"signout\t{self.time}\t{self.facility}\t{self.device}"


class U2uReadingEvent(NamedTuple):
    time: int
    facility: str
    observer: str
    observed: str
    rssi: float

    def line(self) -> str:
        return f"u2u\t{self.time}\t{self.facility}\t{self.observer}\t{self.observed}\t{self.rssi!r}"


class GatewayReadingEvent(NamedTuple):
    time: int
    facility: str
    gateway: str
    device: str
    rssi: float

    def line(self) -> str:
        return f"gw\t{self.time}\t{self.facility}\t{self.gateway}\t{self.device}\t{self.rssi!r}"


Event = Union[SignInEvent, SignOutEvent, U2uReadingEvent, GatewayReadingEvent]


# -- scenario generation ------------------------------------------------------


@dataclass
class _PlannedVisit:
    person: int
    facility_index: int
    start: int  # offsets from scenario start
    end: int
    forced_spans: list[tuple[int, int, int, float]] = field(default_factory=list)
    # forced spans: (start, end, partner person, distance); partner -1 = anchor
    device: str = ""
    xs: Optional[np.ndarray] = None
    ys: Optional[np.ndarray] = None


def _validate_plan(spec: ScenarioSpec) -> list[PlannedContact]:
    plan = spec.plan
    if plan is None:
        return []
    facility_ids = {f.facility_id for f in spec.facilities}
    if plan.patient >= spec.visitors or plan.patient < 0:
        raise InfeasiblePlanError("patient index outside the visitor population")
    if len({p.contact for p in plan.planted} | {plan.patient}) > spec.visitors:
        raise InfeasiblePlanError("more planted contacts than visitors")
    for planted in plan.planted:
        if planted.contact >= spec.visitors or planted.contact < 0:
            raise InfeasiblePlanError("planted contact index outside the population")
        if planted.contact == plan.patient:
            raise InfeasiblePlanError("patient cannot be their own contact")
        if planted.facility not in facility_ids:
            raise InfeasiblePlanError(f"unknown facility in plan: {planted.facility}")
        if planted.start < 0 or planted.start + planted.duration > spec.duration:
            raise InfeasiblePlanError("planted span outside the scenario duration")
        if planted.duration <= 0 or planted.distance <= 0:
            raise InfeasiblePlanError("planted duration and distance must be positive")
    return list(plan.planted)


def _plan_visits(spec: ScenarioSpec, rng: np.random.Generator) -> list[_PlannedVisit]:
    planted = _validate_plan(spec)
    index_of = {f.facility_id: i for i, f in enumerate(spec.facilities)}

    forced: dict[tuple[int, int], list[tuple[int, int, int, float]]] = {}
    for p in planted:
        patient = spec.plan.patient
        fi = index_of[p.facility]
        span_end = p.start + p.duration
        forced.setdefault((patient, fi), []).append((p.start, span_end, -1, p.distance))
        forced.setdefault((p.contact, fi), []).append((p.start, span_end, patient, p.distance))

    pinned_people = {person for person, _fi in forced}
    visits: list[_PlannedVisit] = []

    for (person, fi), spans in sorted(forced.items()):
        spans.sort()
        margin = 120
        start = max(0, min(s for s, _e, _p, _d in spans) - margin)
        end = min(spec.duration, max(e for _s, e, _p, _d in spans) + margin)
        visits.append(_PlannedVisit(person, fi, start, end, forced_spans=spans))

    # a person cannot be in two facilities at once
    by_person: dict[int, list[_PlannedVisit]] = {}
    for v in visits:
        by_person.setdefault(v.person, []).append(v)
    for person, person_visits in by_person.items():
        person_visits.sort(key=lambda v: v.start)
        for a, b in zip(person_visits, person_visits[1:]):
            if a.end >= b.start:
                raise InfeasiblePlanError(
                    f"planted visits of visitor {person} overlap in time"
                )

    for person in range(spec.visitors):
        if person in pinned_people:
            continue
        length = int(min(max(60.0, rng.exponential(spec.visit_duration_mean)), spec.duration - 1))
        start = int(rng.integers(0, max(1, spec.duration - length)))
        fi = int(rng.integers(0, len(spec.facilities)))
        visits.append(_PlannedVisit(person, fi, start, start + length))

    visits.sort(key=lambda v: (v.start, v.facility_index, v.person))
    return visits


def _assign_devices(spec: ScenarioSpec, visits: list[_PlannedVisit]) -> None:
    """FIFO device reuse per facility; new devices minted when none is free."""
    free: dict[int, list[str]] = {i: [] for i in range(len(spec.facilities))}
    busy: dict[int, list[tuple[int, str]]] = {i: [] for i in range(len(spec.facilities))}
    minted: dict[int, int] = {i: 0 for i in range(len(spec.facilities))}
    for visit in visits:  # already sorted by start time
        fi = visit.facility_index
        still_busy = []
        for out_time, device in busy[fi]:
            if out_time < visit.start:
                free[fi].append(device)
            else:
                still_busy.append((out_time, device))
        busy[fi] = still_busy
        free[fi].sort()
        if free[fi]:
            device = free[fi].pop(0)
        else:
            minted[fi] += 1
            device = f"{spec.facilities[fi].facility_id}-D{minted[fi]:04d}"
        visit.device = device
        busy[fi].append((visit.end, device))


def _zone_rects(layout: FacilityLayout) -> list[tuple[float, float, float, float]]:
    margin = 0.25
    rects = []
    for zone in layout.zones:
        x0, y0, x1, y1 = zone.rect
        rects.append(
            (
                min(x0 + margin, x1),
                min(y0 + margin, y1),
                max(x1 - margin, x0),
                max(y1 - margin, y0),
            )
        )
    if not rects:
        rects.append((margin, margin, layout.width - margin, layout.height - margin))
    return rects


def _synthesize_path(
    rng: np.random.Generator,
    layout: FacilityLayout,
    length: int,
    mobility: MobilityParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Random-waypoint positions at 1 Hz: dwell, walk straight, repeat."""
    xs = np.empty(length + 1)
    ys = np.empty(length + 1)
    rects = _zone_rects(layout)

    def random_point() -> tuple[float, float]:
        x0, y0, x1, y1 = rects[int(rng.integers(0, len(rects)))]
        return (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))

    x, y = random_point()
    i = 0
    while i <= length:
        dwell = max(1, int(rng.exponential(mobility.waypoint_dwell_mean)))
        take = min(dwell, length + 1 - i)
        xs[i : i + take] = x
        ys[i : i + take] = y
        i += take
        if i > length:
            break
        tx, ty = random_point()
        distance = math.hypot(tx - x, ty - y)
        steps = max(1, math.ceil(distance / max(mobility.speed, 1e-6)))
        take = min(steps, length + 1 - i)
        frac = np.arange(1, take + 1) / steps
        xs[i : i + take] = x + (tx - x) * frac
        ys[i : i + take] = y + (ty - y) * frac
        i += take
        if take == steps:
            x, y = tx, ty
        else:
            x, y = float(xs[i - 1]), float(ys[i - 1])
    return xs, ys


def _apply_plants(
    spec: ScenarioSpec,
    visits: list[_PlannedVisit],
    rng: np.random.Generator,
) -> None:
    """Pin planted contacts to the patient's path at the agreed distance."""
    anchor: dict[tuple[int, int], _PlannedVisit] = {}
    for v in visits:
        for span in v.forced_spans:
            if span[2] == -1:
                anchor[(v.facility_index, span[0])] = v

    for v in visits:
        layout = spec.facilities[v.facility_index].layout
        for start, end, partner, distance in v.forced_spans:
            if partner == -1:
                continue
            patient_visit = anchor[(v.facility_index, start)]
            angle = float(rng.uniform(0, 2 * math.pi))
            # stay strictly inside the agreed distance; clamping to the
            # layout can only move the pair closer together
            dx = math.cos(angle) * distance * 0.9
            dy = math.sin(angle) * distance * 0.9
            lo = v.start
            for t in range(start, min(end, v.end) + 1):
                if t < lo or t - patient_visit.start < 0 or t > patient_visit.end:
                    continue
                px = patient_visit.xs[t - patient_visit.start]
                py = patient_visit.ys[t - patient_visit.start]
                cx, cy = layout.clamp(px + dx, py + dy)
                v.xs[t - v.start] = cx
                v.ys[t - v.start] = cy


def build_truth(spec: ScenarioSpec) -> GroundTruth:
    """Plan visits, synthesize mobility, and compute true contact pairs."""
    rng = np.random.default_rng([spec.seed, 0])
    visits = _plan_visits(spec, rng)
    _assign_devices(spec, visits)
    for v in visits:
        layout = spec.facilities[v.facility_index].layout
        v.xs, v.ys = _synthesize_path(rng, layout, v.end - v.start, spec.mobility)
    _apply_plants(spec, visits, rng)

    truth = GroundTruth(
        phones=[phone_for(i) for i in range(spec.visitors)],
        visits=[
            TruthVisit(
                person=v.person,
                facility=spec.facilities[v.facility_index].facility_id,
                device=v.device,
                t_in=spec.base_time + v.start,
                t_out=spec.base_time + v.end,
                xs=v.xs,
                ys=v.ys,
            )
            for v in visits
        ],
    )
    truth.pairs = oracle_contacts(truth, spec.contact_radius, 0)
    return truth


def generate_events(spec: ScenarioSpec, truth: GroundTruth) -> Iterator[Event]:
    """Time-ordered stream of sign-ins, radio readings, and sign-outs."""
    facilities = sorted(spec.facilities, key=lambda f: f.facility_id)
    per_facility = {
        f.facility_id: sorted(
            (v for v in truth.visits if v.facility == f.facility_id),
            key=lambda v: (v.t_in, v.device),
        )
        for f in facilities
    }
    noise_rngs = {
        f.facility_id: np.random.default_rng([spec.seed, 1000 + i])
        for i, f in enumerate(facilities)
    }
    entry_index = {f.facility_id: 0 for f in facilities}
    active: dict[str, dict[str, TruthVisit]] = {f.facility_id: {} for f in facilities}

    model = spec.model
    ref = model.reference_power
    ten_n = 10.0 * model.exponent
    min_d = model.min_distance

    for offset in range(spec.duration + 1):
        t = spec.base_time + offset
        for f in facilities:
            fid = f.facility_id
            visits = per_facility[fid]
            idx = entry_index[fid]
            while idx < len(visits) and visits[idx].t_in == t:
                visit = visits[idx]
                yield SignInEvent(t, truth.phones[visit.person], fid, visit.device)
                active[fid][visit.device] = visit
                idx += 1
            entry_index[fid] = idx

            if offset % spec.sampling == 0 and active[fid]:
                rng = noise_rngs[fid]
                devices = sorted(active[fid])
                pts = np.array(
                    [
                        (
                            active[fid][d].xs[t - active[fid][d].t_in],
                            active[fid][d].ys[t - active[fid][d].t_in],
                        )
                        for d in devices
                    ]
                )
                if f.mode in ("u2u", "both") and len(devices) > 1:
                    diff = pts[:, None, :] - pts[None, :, :]
                    dist = np.hypot(diff[..., 0], diff[..., 1])
                    iu, ju = np.triu_indices(len(devices), k=1)
                    close = dist[iu, ju] <= spec.visibility_range
                    pair_i = iu[close]
                    pair_j = ju[close]
                    if len(pair_i):
                        d = np.maximum(dist[pair_i, pair_j], min_d)
                        base = ref - ten_n * np.log10(d)
                        noise = rng.normal(0.0, model.noise_sigma, size=2 * len(pair_i))
                        for k in range(len(pair_i)):
                            a = devices[int(pair_i[k])]
                            b = devices[int(pair_j[k])]
                            yield U2uReadingEvent(t, fid, a, b, float(base[k] + noise[2 * k]))
                            yield U2uReadingEvent(t, fid, b, a, float(base[k] + noise[2 * k + 1]))
                if f.mode in ("location", "both"):
                    gw = f.layout.gateways
                    gw_pts = np.array([(g.x, g.y) for g in gw])
                    diff = pts[:, None, :] - gw_pts[None, :, :]
                    dist = np.hypot(diff[..., 0], diff[..., 1])
                    audible = dist <= spec.gateway_range
                    count = int(audible.sum())
                    if count:
                        noise = rng.normal(0.0, model.noise_sigma, size=count)
                        n = 0
                        for di in range(len(devices)):
                            for gi in range(len(gw)):
                                if audible[di, gi]:
                                    d = max(dist[di, gi], min_d)
                                    rssi = ref - ten_n * math.log10(d) + noise[n]
                                    n += 1
                                    yield GatewayReadingEvent(
                                        t, fid, gw[gi].id, devices[di], float(rssi)
                                    )

            leaving = [d for d, v in active[fid].items() if v.t_out == t]
            for device in sorted(leaving):
                yield SignOutEvent(t, fid, device)
                del active[fid][device]


def generate_scenario(spec: ScenarioSpec) -> tuple[Iterator[Event], GroundTruth]:
    """The sim-harness entry point: event stream plus independent truth."""
    truth = build_truth(spec)
    return generate_events(spec, truth), truth


def stream_digest(events: Iterable[Event]) -> str:
    """SHA-256 over the serialized event lines."""
    digest = hashlib.sha256()
    for event in events:
        digest.update(event.line().encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


# -- brute-force oracle -------------------------------------------------------


def _visits_close(
    a: TruthVisit, b: TruthVisit, radius: float, window: int
) -> bool:
    r2 = radius * radius
    if window == 0:
        lo = max(a.t_in, b.t_in)
        hi = min(a.t_out, b.t_out)
        if lo > hi:
            return False
        ax = a.xs[lo - a.t_in : hi - a.t_in + 1]
        ay = a.ys[lo - a.t_in : hi - a.t_in + 1]
        bx = b.xs[lo - b.t_in : hi - b.t_in + 1]
        by = b.ys[lo - b.t_in : hi - b.t_in + 1]
        return bool((((ax - bx) ** 2 + (ay - by) ** 2) <= r2).any())
    if a.t_in > b.t_out + window or b.t_in > a.t_out + window:
        return False
    ta = np.arange(a.t_in, a.t_out + 1)
    tb = np.arange(b.t_in, b.t_out + 1)
    chunk = 512
    for start in range(0, len(ta), chunk):
        sl = slice(start, start + chunk)
        dt = np.abs(ta[sl, None] - tb[None, :]) <= window
        if not dt.any():
            continue
        dx = a.xs[sl, None] - b.xs[None, :]
        dy = a.ys[sl, None] - b.ys[None, :]
        if (((dx * dx + dy * dy) <= r2) & dt).any():
            return True
    return False


def oracle_contacts(
    truth: GroundTruth, radius: float, window: int
) -> dict[str, set[tuple[int, int]]]:
    """Quadratic scan of continuous positions, per facility.

    A pair is included iff the two people came within ``radius`` meters
    within ``window`` seconds of each other while both signed in. The scan
    only reads ground-truth trajectories.
    """
    per_facility: dict[str, set[tuple[int, int]]] = {}
    by_facility: dict[str, list[TruthVisit]] = {}
    for visit in truth.visits:
        by_facility.setdefault(visit.facility, []).append(visit)
    for fid, visits in by_facility.items():
        pairs: set[tuple[int, int]] = set()
        for i in range(len(visits)):
            for j in range(i + 1, len(visits)):
                a, b = visits[i], visits[j]
                if a.person == b.person:
                    continue
                key = (min(a.person, b.person), max(a.person, b.person))
                if key in pairs:
                    continue
                if _visits_close(a, b, radius, window):
                    pairs.add(key)
        per_facility[fid] = pairs
    return per_facility


def positioning_errors(truth: GroundTruth, facility: Facility) -> np.ndarray:
    """Distance between each stored fix and the true position at fix time."""
    errors = []
    for visit in truth.visits:
        if visit.facility != facility.facility_id or facility.locations is None:
            continue
        for fix in facility.locations.fixes_for(visit.device, visit.t_in, visit.t_out):
            cx, cy = fix.location.center()
            tx, ty = visit.position(fix.time)
            errors.append(math.hypot(cx - tx, cy - ty))
    return np.array(errors)


# -- running a scenario against the system ------------------------------------


@dataclass
class TracingSystem:
    registry: Registry
    facilities: dict[str, Facility]

    def wipe_expired(self, now: int) -> int:
        deleted = self.registry.wipe_expired(now)
        for facility in self.facilities.values():
            deleted += facility.wipe_expired(now, self.registry.policy)
        return deleted


def build_system(
    spec: ScenarioSpec,
    policy: Optional[RetentionPolicy] = None,
    client_factory=None,
) -> TracingSystem:
    """Registry plus one facility per spec entry, wired through clients.

    ``client_factory`` maps a Facility to a FacilityClient; the default is
    the in-process adapter. The pseudonym issuer is seeded from the
    scenario seed so repeated runs are byte-identical.
    """
    registry = Registry(policy=policy, token_rng=Random(spec.seed ^ 0x746F6B656E))
    facilities: dict[str, Facility] = {}
    for f in spec.facilities:
        facility = Facility(
            f.facility_id,
            f.mode,
            layout=f.layout,
            model=spec.model,
            facility_type=f.facility_type,
        )
        facilities[f.facility_id] = facility
        client = (
            InProcessFacilityClient(facility)
            if client_factory is None
            else client_factory(facility)
        )
        registry.register_facility(
            FacilityEntry(f.facility_id, f.mode, f.facility_type, client, layout=f.layout)
        )
    return TracingSystem(registry, facilities)


@dataclass
class ScenarioRun:
    spec: ScenarioSpec
    truth: GroundTruth
    system: TracingSystem
    counts: dict[str, int]
    stream_sha256: Optional[str] = None


def run_scenario(
    spec: ScenarioSpec,
    system: Optional[TracingSystem] = None,
    hash_stream: bool = False,
    ingest_chunk: int = 200_000,
) -> ScenarioRun:
    """Drive the generated event stream into a (possibly wire-backed) system.

    Device logs upload at hand-back: u2u readings buffer per observer and
    ingest when that device signs out. Gateway readings ingest in chunks,
    mirroring a streaming collector. Unclosed buffers flush at the end.
    """
    if system is None:
        system = build_system(spec)
    registry = system.registry
    events, truth = generate_scenario(spec)

    u2u_buffers: dict[str, dict[str, list[RawReading]]] = {
        fid: {} for fid in system.facilities
    }
    gw_buffers: dict[str, list[GatewayReading]] = {fid: [] for fid in system.facilities}
    counts = {
        "sign_ins": 0,
        "sign_outs": 0,
        "u2u_readings": 0,
        "gateway_readings": 0,
        "contact_events": 0,
        "location_fixes": 0,
    }
    digest = hashlib.sha256() if hash_stream else None

    def flush_gateway(fid: str) -> None:
        buffered = gw_buffers[fid]
        if buffered:
            stats = system.facilities[fid].ingest_location(buffered)
            counts["location_fixes"] += stats.fixes_stored
            gw_buffers[fid] = []

    for event in events:
        if digest is not None:
            digest.update(event.line().encode("utf-8"))
            digest.update(b"\n")
        if isinstance(event, U2uReadingEvent):
            counts["u2u_readings"] += 1
            u2u_buffers[event.facility].setdefault(event.observer, []).append(
                RawReading(event.observer, event.observed, event.time, event.rssi)
            )
        elif isinstance(event, GatewayReadingEvent):
            counts["gateway_readings"] += 1
            gw_buffers[event.facility].append(
                GatewayReading(event.gateway, event.device, event.time, event.rssi)
            )
            if len(gw_buffers[event.facility]) >= ingest_chunk:
                flush_gateway(event.facility)
        elif isinstance(event, SignInEvent):
            counts["sign_ins"] += 1
            registry.sign_in(event.phone, event.facility, event.time, event.device)
        else:
            counts["sign_outs"] += 1
            system.facilities[event.facility].hand_back(event.device, event.time)
            log = u2u_buffers[event.facility].pop(event.device, None)
            if log:
                stats = system.facilities[event.facility].ingest_u2u(log)
                counts["contact_events"] += stats.events_stored

    for fid in sorted(system.facilities):
        for device in sorted(u2u_buffers[fid]):
            log = u2u_buffers[fid][device]
            if log:
                stats = system.facilities[fid].ingest_u2u(log)
                counts["contact_events"] += stats.events_stored
        flush_gateway(fid)

    return ScenarioRun(
        spec,
        truth,
        system,
        counts,
        stream_sha256=digest.hexdigest() if digest else None,
    )


def two_facility_spec(
    seed: int,
    visitors: int = 100,
    duration: int = 1800,
    visit_duration_mean: float = 420.0,
    plan: Optional[InfectionPlan] = None,
    size: float = 30.0,
    facility_types: tuple[str, str] = ("generic", "generic"),
) -> ScenarioSpec:
    """The workhorse fixture: one u2u facility and one location facility."""
    return ScenarioSpec(
        seed=seed,
        facilities=(
            FacilitySpec("F1", "u2u", grid_layout(size, size), facility_types[0]),
            FacilitySpec("F2", "location", grid_layout(size, size), facility_types[1]),
        ),
        visitors=visitors,
        duration=duration,
        visit_duration_mean=visit_duration_mean,
        plan=plan,
    )
