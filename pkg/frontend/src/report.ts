/** Shaping of report JSON into renderable rows. Values pass through
 * untouched; formatting happens at the last moment with String(). */

import { isProximityHit } from "./types.js";
import type { Contact, HitJson, Report, Section } from "./types.js";

export interface ContactRow {
  phone: string;
  facility: string;
  evidence: string;
  hitCount: number;
  minDistance: number | null;
  firstTime: number;
  lastTime: number;
}

export function contactRows(report: Report): ContactRow[] {
  return report.contacts.map((contact: Contact) => ({
    phone: contact.phone,
    facility: contact.facility,
    evidence: contact.evidence.join(", "),
    hitCount: contact.hit_count,
    minDistance: contact.min_distance,
    firstTime: contact.first_time,
    lastTime: contact.last_time,
  }));
}

export interface HitRow {
  visitor: string;
  time: number;
  distance: number; // estimated distance or spatial gap, as reported
  temporalGap: number | null;
  where: string | null; // "zone (col, row)" for proximity hits
}

export function hitRows(hits: HitJson[]): HitRow[] {
  return hits.map((hit) => {
    if (isProximityHit(hit)) {
      return {
        visitor: hit.visitor,
        time: hit.time,
        distance: hit.spatial_proximity,
        temporalGap: hit.temporal_proximity,
        where: `${hit.zone} (${hit.cell[0]}, ${hit.cell[1]})`,
      };
    }
    return {
      visitor: hit.visitor,
      time: hit.time,
      distance: hit.estimated_distance,
      temporalGap: null,
      where: null,
    };
  });
}

export interface SectionSummary {
  facility: string;
  mode: string;
  visitTime: number;
  rawCount: number;
  filteredCount: number;
  surfaceCount: number;
  warnings: string[];
  error: string | null;
}

export function sectionSummaries(report: Report): SectionSummary[] {
  return report.sections.map((section: Section) => ({
    facility: section.facility,
    mode: section.mode,
    visitTime: section.visit_time,
    rawCount: section.raw_hits.length,
    filteredCount: section.filtered_hits.length,
    surfaceCount: section.surface_pairs.length,
    warnings: section.warnings,
    error: section.error ? section.error.code : null,
  }));
}

export function isEmptyReport(report: Report): boolean {
  return report.sections.length === 0 && report.contacts.length === 0;
}
