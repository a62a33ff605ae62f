/** Parameter panel state and client-side validation.
 *
 * Edits never touch the server until a re-run is submitted, and invalid
 * values are rejected before a request is built. */

import type { CaseRequest, ProfileOverride, Report } from "./types.js";

export interface ProfileState {
  facilityType: string;
  maxDistance: string; // free-text fields; validated on submit
  minPersistence: string;
  persistenceGap: string;
  useWallOcclusion: boolean;
  surfaceDwell: string;
  surfaceLag: string;
}

export interface PanelState {
  radius: string;
  window: string;
  profiles: Record<string, ProfileState>;
}

export const FACILITY_TYPES = ["generic", "stadium", "restaurant", "mall", "office"];

export function defaultProfileState(): ProfileState {
  return {
    facilityType: "generic",
    maxDistance: "",
    minPersistence: "0",
    persistenceGap: "120",
    useWallOcclusion: false,
    surfaceDwell: "60",
    surfaceLag: "1800",
  };
}

export function defaultPanel(report: Report | null): PanelState {
  const profiles: Record<string, ProfileState> = {};
  if (report) {
    for (const section of report.sections) {
      if (!(section.facility in profiles)) {
        profiles[section.facility] = defaultProfileState();
      }
    }
  }
  return { radius: "10", window: "600", profiles };
}

function positiveNumber(text: string, name: string, errors: string[]): number | undefined {
  const value = Number(text);
  if (!Number.isFinite(value) || value <= 0) {
    errors.push(`${name} must be a positive number`);
    return undefined;
  }
  return value;
}

function nonNegativeInt(text: string, name: string, errors: string[]): number | undefined {
  const value = Number(text);
  if (!Number.isInteger(value) || value < 0) {
    errors.push(`${name} must be a non-negative integer`);
    return undefined;
  }
  return value;
}

export interface ValidatedPanel {
  errors: string[];
  params?: { radius: number; window: number };
  context?: Record<string, ProfileOverride>;
}

export function validatePanel(panel: PanelState): ValidatedPanel {
  const errors: string[] = [];
  const radius = positiveNumber(panel.radius, "radius", errors);
  const window = nonNegativeInt(panel.window, "window", errors);
  if (window === 0) {
    errors.push("window must be at least 1 second");
  }
  const context: Record<string, ProfileOverride> = {};
  for (const [facility, profile] of Object.entries(panel.profiles)) {
    const override: ProfileOverride = { facility_type: profile.facilityType };
    if (profile.maxDistance.trim() !== "") {
      const value = positiveNumber(profile.maxDistance, `${facility} max distance`, errors);
      if (value !== undefined) override.max_distance = value;
    } else {
      override.max_distance = null;
    }
    const persistence = nonNegativeInt(
      profile.minPersistence, `${facility} persistence`, errors);
    if (persistence !== undefined) override.min_persistence = persistence;
    const gap = nonNegativeInt(profile.persistenceGap, `${facility} persistence gap`, errors);
    if (gap !== undefined) override.persistence_gap = gap;
    const dwell = nonNegativeInt(profile.surfaceDwell, `${facility} surface dwell`, errors);
    if (dwell !== undefined) override.surface_dwell = dwell;
    const lag = nonNegativeInt(profile.surfaceLag, `${facility} surface lag`, errors);
    if (lag !== undefined) override.surface_lag = lag;
    override.use_wall_occlusion = profile.useWallOcclusion;
    context[facility] = override;
  }
  if (errors.length > 0) {
    return { errors };
  }
  return {
    errors: [],
    params: { radius: radius!, window: window! },
    context,
  };
}

export function buildCaseRequest(
  phone: string,
  period: [number, number] | null,
  panel: PanelState,
): { errors: string[]; request?: CaseRequest } {
  const errors: string[] = [];
  if (!/^[0-9]{8,15}$/.test(phone)) {
    errors.push("phone must be 8 to 15 digits");
  }
  if (period && period[0] > period[1]) {
    errors.push("period start is after its end");
  }
  const validated = validatePanel(panel);
  errors.push(...validated.errors);
  if (errors.length > 0) {
    return { errors };
  }
  const request: CaseRequest = { phone, params: validated.params, context: validated.context };
  if (period) {
    request.period = period;
  }
  return { errors: [], request };
}
