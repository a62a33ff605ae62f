"""Signal model, facility layouts, trilateration, and the indoor
spatio-temporal range query.

Signal strength maps to distance through a log-distance path-loss model.
Gateway readings for one device are bucketed into short positioning epochs
and solved by linearized least squares over the gateway circles; the
resulting point is snapped to the layout grid and zone, which is the only
form the locations table ever stores. Distances between stored locations
are always measured between cell centers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import LayoutError
from .tables import LocationFix, SymbolicLocation

#: Epoch length (seconds) for bucketing gateway readings into fixes.
DEFAULT_EPOCH = 5


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss: rssi = reference_power - 10*exponent*log10(d)."""

    reference_power: float = -59.0  # dBm at 1 m
    exponent: float = 2.0
    noise_sigma: float = 2.0  # dBm, used by the simulator only
    min_distance: float = 0.1  # meters, clamp below this

    def __post_init__(self) -> None:
        if self.exponent <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.min_distance <= 0:
            raise ValueError("min_distance must be positive")


def rssi_from_distance(distance: float, model: PathLossModel, noise: float = 0.0) -> float:
    """Signal strength at a true distance, plus sampled noise in dBm."""
    d = max(distance, model.min_distance)
    return model.reference_power - 10.0 * model.exponent * math.log10(d) + noise


def distance_from_rssi(rssi: float, model: PathLossModel) -> float:
    """Invert the path-loss model; never returns less than min_distance."""
    d = 10.0 ** ((model.reference_power - rssi) / (10.0 * model.exponent))
    return max(d, model.min_distance)


@dataclass(frozen=True)
class Zone:
    label: str
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1 in meters


@dataclass(frozen=True)
class Gateway:
    id: str
    x: float
    y: float


class GatewayReading(NamedTuple):
    gateway: str
    device: str
    time: int
    rssi: float


@dataclass(frozen=True)
class ProximityParams:
    """Spatio-temporal proximity thresholds, both closed (<=)."""

    radius: float = 10.0  # meters
    window: int = 600  # seconds

    def __post_init__(self) -> None:
        if self.radius <= 0 or self.window <= 0:
            raise ValueError("radius and window must be positive")


@dataclass
class FacilityLayout:
    """Grid, zones, walls, and gateway positions of one facility."""

    width: float
    height: float
    resolution: float = 1.0
    zones: list[Zone] = field(default_factory=list)
    walls: list[tuple[float, float, float, float]] = field(default_factory=list)
    gateways: list[Gateway] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.resolution <= 0:
            raise LayoutError("layout dimensions must be positive")
        if len(self.gateways) < 3:
            raise LayoutError("a layout needs at least 3 gateways")
        for gw in self.gateways:
            if not (0 <= gw.x <= self.width and 0 <= gw.y <= self.height):
                raise LayoutError(f"gateway {gw.id} outside the layout")
        for zone in self.zones:
            if "|" in zone.label or "\t" in zone.label or "\n" in zone.label:
                raise LayoutError(f"zone label contains reserved characters: {zone.label!r}")
        self._gateway_index = {gw.id: gw for gw in self.gateways}
        if len(self._gateway_index) != len(self.gateways):
            raise LayoutError("duplicate gateway ids")
        self._zone_cache: dict[tuple[int, int], str] = {}

    @property
    def ncols(self) -> int:
        return max(1, math.ceil(self.width / self.resolution))

    @property
    def nrows(self) -> int:
        return max(1, math.ceil(self.height / self.resolution))

    def gateway(self, gateway_id: str) -> Optional[Gateway]:
        return self._gateway_index.get(gateway_id)

    def clamp(self, x: float, y: float) -> tuple[float, float]:
        return (min(max(x, 0.0), self.width), min(max(y, 0.0), self.height))

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        col = min(int(x / self.resolution), self.ncols - 1)
        row = min(int(y / self.resolution), self.nrows - 1)
        return (max(col, 0), max(row, 0))

    def zone_of(self, cell: tuple[int, int]) -> str:
        """Zone containing the cell center; uncovered cells are 'corridor'."""
        cached = self._zone_cache.get(cell)
        if cached is not None:
            return cached
        cx = (cell[0] + 0.5) * self.resolution
        cy = (cell[1] + 0.5) * self.resolution
        label = "corridor"
        for zone in self.zones:
            x0, y0, x1, y1 = zone.rect
            if x0 <= cx <= x1 and y0 <= cy <= y1:
                label = zone.label
                break
        self._zone_cache[cell] = label
        return label

    def symbolic(self, x: float, y: float) -> SymbolicLocation:
        x, y = self.clamp(x, y)
        cell = self.cell_of(x, y)
        return SymbolicLocation(self.zone_of(cell), cell, self.resolution)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "resolution": self.resolution,
            "zones": [{"label": z.label, "rect": list(z.rect)} for z in self.zones],
            "walls": [list(w) for w in self.walls],
            "gateways": [{"id": g.id, "x": g.x, "y": g.y} for g in self.gateways],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FacilityLayout":
        return cls(
            width=float(data["width"]),
            height=float(data["height"]),
            resolution=float(data.get("resolution", 1.0)),
            zones=[Zone(z["label"], tuple(float(v) for v in z["rect"])) for z in data.get("zones", [])],
            walls=[tuple(float(v) for v in w) for w in data.get("walls", [])],
            gateways=[Gateway(g["id"], float(g["x"]), float(g["y"])) for g in data.get("gateways", [])],
        )

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "FacilityLayout":
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


def grid_layout(
    width: float = 30.0,
    height: float = 30.0,
    resolution: float = 1.0,
    gateway_grid: int = 3,
    zones: Optional[list[Zone]] = None,
    walls: Optional[list[tuple[float, float, float, float]]] = None,
) -> FacilityLayout:
    """A rectangular layout with gateways on a regular grid (default 3x3)."""
    gateways = []
    n = 0
    for iy in range(gateway_grid):
        for ix in range(gateway_grid):
            n += 1
            fx = 0.1 + 0.8 * (ix / (gateway_grid - 1)) if gateway_grid > 1 else 0.5
            fy = 0.1 + 0.8 * (iy / (gateway_grid - 1)) if gateway_grid > 1 else 0.5
            gateways.append(Gateway(f"G{n}", round(fx * width, 3), round(fy * height, 3)))
    if zones is None:
        zones = [Zone("hall", (0.0, 0.0, width, height))]
    return FacilityLayout(
        width=width,
        height=height,
        resolution=resolution,
        zones=zones,
        walls=walls or [],
        gateways=gateways,
    )


class FixResult(NamedTuple):
    """Outcome of one trilateration attempt."""

    status: str  # "ok", "degenerate" (centroid fallback), or "no_fix"
    point: Optional[tuple[float, float]]


def _solve_2x2_least_squares(a: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    """Normal-equations solve of an overdetermined n x 2 system, or None."""
    ata = a.T @ a
    det = ata[0, 0] * ata[1, 1] - ata[0, 1] * ata[1, 0]
    scale = max(ata[0, 0], ata[1, 1], 1e-30)
    if abs(det) < 1e-9 * scale * scale:
        return None
    atb = a.T @ b
    return np.array(
        [
            (ata[1, 1] * atb[0] - ata[0, 1] * atb[1]) / det,
            (ata[0, 0] * atb[1] - ata[1, 0] * atb[0]) / det,
        ]
    )


def trilaterate_point(
    readings: Sequence[GatewayReading],
    layout: FacilityLayout,
    model: PathLossModel,
    refine_iterations: int = 3,
) -> FixResult:
    """Estimate a device position from gateway readings of one epoch.

    Keeps the strongest reading per gateway and converts signal to distance.
    The solve is the linearized circle system (differences against the
    nearest gateway's circle), rows weighted by the inverse estimated
    distance since far readings carry proportionally larger errors, then a
    few Gauss-Newton refinement steps on the true circle residuals. With
    noiseless inputs the linear stage is already exact. Fewer than three
    distinct gateways is a no-fix; a rank-deficient (collinear) system falls
    back to the centroid of the three nearest gateways.
    """
    strongest: dict[str, GatewayReading] = {}
    for r in readings:
        if layout.gateway(r.gateway) is None:
            continue
        best = strongest.get(r.gateway)
        if best is None or r.rssi > best.rssi:
            strongest[r.gateway] = r
    if len(strongest) < 3:
        return FixResult("no_fix", None)

    ids = sorted(strongest)
    pts = np.array([(layout.gateway(g).x, layout.gateway(g).y) for g in ids])
    dists = np.array([distance_from_rssi(strongest[g].rssi, model) for g in ids])
    weights = 1.0 / np.maximum(dists, 0.5)

    ref = int(np.argmin(dists))
    rows = [i for i in range(len(ids)) if i != ref]
    a = 2.0 * (pts[rows] - pts[ref]) * weights[rows, None]
    b = (
        dists[ref] ** 2
        - dists[rows] ** 2
        + pts[rows, 0] ** 2
        - pts[ref, 0] ** 2
        + pts[rows, 1] ** 2
        - pts[ref, 1] ** 2
    ) * weights[rows]
    solution = _solve_2x2_least_squares(a, b)
    if solution is None:
        nearest = np.argsort(dists)[:3]
        x, y = pts[nearest].mean(axis=0)
        return FixResult("degenerate", layout.clamp(float(x), float(y)))

    for _ in range(refine_iterations):
        diff = solution - pts
        norms = np.maximum(np.hypot(diff[:, 0], diff[:, 1]), 1e-9)
        residuals = dists - norms
        if np.max(np.abs(residuals)) <= 1e-9:
            break  # linear stage already exact (noiseless input)
        jac = diff / norms[:, None] * weights[:, None]
        step = _solve_2x2_least_squares(jac, residuals * weights)
        if step is None:
            break
        solution = solution + step
    return FixResult("ok", layout.clamp(float(solution[0]), float(solution[1])))


def trilaterate(
    readings: Sequence[GatewayReading],
    layout: FacilityLayout,
    model: PathLossModel,
) -> Optional[SymbolicLocation]:
    """Symbolic location for one epoch's readings, or None when unfixable."""
    result = trilaterate_point(readings, layout, model)
    if result.point is None:
        return None
    return layout.symbolic(*result.point)


class RangeHit(NamedTuple):
    """A fix of another device found near the reference trajectory."""

    device: str
    fix: LocationFix
    spatial_gap: float  # meters between cell centers, min over qualifying pairs
    temporal_gap: int  # seconds, min over qualifying pairs


def st_range_query(
    fixes: Iterable[LocationFix],
    trajectory: Sequence[LocationFix],
    params: ProximityParams,
    exclude_device: Optional[str] = None,
) -> list[RangeHit]:
    """All fixes of other devices within radius and window of the trajectory.

    A fix qualifies when some trajectory fix is within ``params.radius``
    meters (cell centers) and ``params.window`` seconds, both thresholds
    closed. Each qualifying fix is reported once with its minimal spatial
    and temporal gaps over the qualifying trajectory fixes. Candidate
    pruning uses a (time bucket, cell block) hash grid, so the result is
    identical to the quadratic scan.
    """
    if not trajectory:
        return []
    window = params.window
    radius = params.radius
    resolution = trajectory[0].location.resolution
    block = max(1, math.ceil(radius / resolution))

    index: dict[tuple[int, int, int], list[LocationFix]] = {}
    for fix in fixes:
        if exclude_device is not None and fix.device == exclude_device:
            continue
        col, row = fix.location.cell
        key = (fix.time // window, col // block, row // block)
        index.setdefault(key, []).append(fix)

    best: dict[tuple[str, int], tuple[LocationFix, float, int]] = {}
    for p in trajectory:
        pcx, pcy = p.location.center()
        pcol, prow = p.location.cell
        tlo = (p.time - window) // window
        thi = (p.time + window) // window
        for tb in range(tlo, thi + 1):
            for cb in range(pcol // block - 1, pcol // block + 2):
                for rb in range(prow // block - 1, prow // block + 2):
                    for fix in index.get((tb, cb, rb), ()):
                        dt = abs(fix.time - p.time)
                        if dt > window:
                            continue
                        fcx, fcy = fix.location.center()
                        gap = math.hypot(fcx - pcx, fcy - pcy)
                        if gap > radius:
                            continue
                        key = (fix.device, fix.time)
                        prev = best.get(key)
                        if prev is None:
                            best[key] = (fix, gap, dt)
                        else:
                            best[key] = (prev[0], min(prev[1], gap), min(prev[2], dt))

    hits = [RangeHit(fix.device, fix, gap, dt) for (fix, gap, dt) in best.values()]
    hits.sort(key=lambda h: (h.fix.time, h.device))
    return hits


def segments_intersect(
    seg_a: tuple[float, float, float, float],
    seg_b: tuple[float, float, float, float],
) -> bool:
    """Closed-segment intersection test (endpoint touches count)."""
    ax1, ay1, ax2, ay2 = seg_a
    bx1, by1, bx2, by2 = seg_b

    def orient(ox: float, oy: float, px: float, py: float, qx: float, qy: float) -> int:
        val = (px - ox) * (qy - oy) - (py - oy) * (qx - ox)
        if val > 0:
            return 1
        if val < 0:
            return -1
        return 0

    def on_segment(ox: float, oy: float, px: float, py: float, qx: float, qy: float) -> bool:
        return min(ox, px) <= qx <= max(ox, px) and min(oy, py) <= qy <= max(oy, py)

    o1 = orient(ax1, ay1, ax2, ay2, bx1, by1)
    o2 = orient(ax1, ay1, ax2, ay2, bx2, by2)
    o3 = orient(bx1, by1, bx2, by2, ax1, ay1)
    o4 = orient(bx1, by1, bx2, by2, ax2, ay2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(ax1, ay1, ax2, ay2, bx1, by1):
        return True
    if o2 == 0 and on_segment(ax1, ay1, ax2, ay2, bx2, by2):
        return True
    if o3 == 0 and on_segment(bx1, by1, bx2, by2, ax1, ay1):
        return True
    if o4 == 0 and on_segment(bx1, by1, bx2, by2, ax2, ay2):
        return True
    return False


def wall_between(
    layout: FacilityLayout, loc_a: SymbolicLocation, loc_b: SymbolicLocation
) -> bool:
    """True when any wall segment crosses the line between two cell centers."""
    ax, ay = loc_a.center()
    bx, by = loc_b.center()
    seg = (ax, ay, bx, by)
    return any(segments_intersect(seg, wall) for wall in layout.walls)
