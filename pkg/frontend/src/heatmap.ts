/** Heatmap view model: cell colors, tooltips, and layout geometry.
 *
 * Counts come verbatim from the report; the only derivation here is the
 * color, a linear alpha scale to the maximum cell count. */

import type { LayoutJson, Section, TrajectoryPointJson } from "./types.js";

export interface HeatmapCell {
  col: number;
  row: number;
  count: number;
  color: string;
  tooltip: string;
  patient: boolean;
}

export interface HeatmapModel {
  facility: string;
  ncols: number;
  nrows: number;
  resolution: number;
  maxCount: number;
  cells: HeatmapCell[]; // row-major
  walls: [number, number, number, number][]; // meters
  zones: { label: string; rect: [number, number, number, number] }[];
  trajectory: [number, number][]; // cell centers in meters, time order
}

export const BASE_COLOR = "rgba(208, 32, 32, 0)";

export function colorFor(count: number, maxCount: number): string {
  if (count <= 0 || maxCount <= 0) {
    return BASE_COLOR;
  }
  const alpha = Math.min(count / maxCount, 1);
  return `rgba(208, 32, 32, ${alpha.toFixed(3)})`;
}

export function tooltipFor(col: number, row: number, count: number): string {
  return `cell (${col}, ${row}): ${count} fixes`;
}

export function maxCount(cells: number[][]): number {
  let best = 0;
  for (const row of cells) {
    for (const value of row) {
      if (value > best) best = value;
    }
  }
  return best;
}

export function trajectoryCenters(
  trajectory: TrajectoryPointJson[] | null,
  layout: LayoutJson,
): [number, number][] {
  if (!trajectory) return [];
  return trajectory.map((point) => [
    (point.cell[0] + 0.5) * layout.resolution,
    (point.cell[1] + 0.5) * layout.resolution,
  ]);
}

/** Why a section has no heatmap, for the disabled pane. */
export function heatmapUnavailableReason(section: Section): string | null {
  if (section.error) return `facility query failed: ${section.error.code}`;
  if (section.mode !== "location") {
    return "user-to-user facilities report contacts, not positions, so there is no heatmap";
  }
  if (!section.heatmap || !section.layout) return "no heatmap in the facility answer";
  return null;
}

export function heatmapModel(section: Section): HeatmapModel | null {
  if (heatmapUnavailableReason(section) !== null) return null;
  const heatmap = section.heatmap!;
  const layout = section.layout!;
  const patientCells = new Set(heatmap.patient_cells.map(([c, r]) => `${c},${r}`));
  const top = maxCount(heatmap.cells);
  const cells: HeatmapCell[] = [];
  heatmap.cells.forEach((rowValues, row) => {
    rowValues.forEach((count, col) => {
      cells.push({
        col,
        row,
        count,
        color: colorFor(count, top),
        tooltip: tooltipFor(col, row, count),
        patient: patientCells.has(`${col},${row}`),
      });
    });
  });
  return {
    facility: section.facility,
    ncols: heatmap.cells[0]?.length ?? 0,
    nrows: heatmap.cells.length,
    resolution: layout.resolution,
    maxCount: top,
    cells,
    walls: layout.walls,
    zones: layout.zones.map((z) => ({ label: z.label, rect: z.rect })),
    trajectory: trajectoryCenters(section.trajectory, layout),
  };
}
