/** Wire shapes returned by the registry. The console never recomputes a
 * number: everything rendered comes verbatim out of these objects. */

export interface CaseResponse {
  trace_id: string;
  report: Report;
}

export interface Report {
  patient: string;
  period: [number, number];
  sections: Section[];
  contacts: Contact[];
  unresolved_visitors: number;
}

export interface Contact {
  phone: string;
  facility: string;
  first_time: number;
  last_time: number;
  hit_count: number;
  min_distance: number | null;
  evidence: string[];
}

export interface ContactHitJson {
  visitor: string;
  time: number;
  estimated_distance: number;
}

export interface ProximityHitJson {
  visitor: string;
  time: number;
  zone: string;
  cell: [number, number];
  resolution: number;
  spatial_proximity: number;
  temporal_proximity: number;
}

export type HitJson = ContactHitJson | ProximityHitJson;

export function isProximityHit(hit: HitJson): hit is ProximityHitJson {
  return (hit as ProximityHitJson).spatial_proximity !== undefined;
}

export interface SurfacePairJson {
  visitor: string;
  cell: [number, number];
  patient_leave: number;
  visitor_arrive: number;
}

export interface HeatmapJson {
  cells: number[][]; // row-major counts
  patient_cells: [number, number][];
}

export interface TrajectoryPointJson {
  zone: string;
  cell: [number, number];
  resolution: number;
  time: number;
}

export interface ZoneJson {
  label: string;
  rect: [number, number, number, number];
}

export interface LayoutJson {
  width: number;
  height: number;
  resolution: number;
  zones: ZoneJson[];
  walls: [number, number, number, number][];
  gateways: { id: string; x: number; y: number }[];
}

export interface Section {
  facility: string;
  mode: string; // "u2u" | "location" | "unknown"
  visitor: string;
  visit_time: number;
  raw_hits: HitJson[];
  filtered_hits: HitJson[];
  surface_pairs: SurfacePairJson[];
  heatmap: HeatmapJson | null;
  trajectory: TrajectoryPointJson[] | null;
  layout: LayoutJson | null;
  diagnostics: Record<string, number>;
  warnings: string[];
  error: { code: string; detail: string } | null;
}

export interface ProfileOverride {
  facility_type?: string;
  max_distance?: number | null;
  min_persistence?: number;
  persistence_gap?: number;
  use_wall_occlusion?: boolean;
  surface_dwell?: number;
  surface_lag?: number;
}

export interface CaseRequest {
  phone: string;
  period?: [number, number];
  now?: number;
  params?: { radius: number; window: number };
  context?: Record<string, ProfileOverride>;
}
