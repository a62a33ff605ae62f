/** DOM rendering. Tables and panes are rebuilt from view models; the
 * heatmap draws on a canvas with a tooltip that echoes the cell model. */

import type { ContactDiff } from "./diff.js";
import { heatmapModel, heatmapUnavailableReason } from "./heatmap.js";
import type { HeatmapModel } from "./heatmap.js";
import { contactRows, hitRows, sectionSummaries } from "./report.js";
import type { Report, Section } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function table(headers: string[], rows: (string | number)[][]): HTMLTableElement {
  const root = el("table", "data-table");
  const head = root.createTHead().insertRow();
  for (const header of headers) {
    head.appendChild(el("th", undefined, header));
  }
  const body = root.createTBody();
  for (const row of rows) {
    const tr = body.insertRow();
    for (const value of row) {
      tr.insertCell().textContent = String(value);
    }
  }
  return root;
}

export function renderBanner(target: HTMLElement, kind: "error" | "info", text: string): void {
  target.replaceChildren(el("div", `banner banner-${kind}`, text));
}

export function clearBanner(target: HTMLElement): void {
  target.replaceChildren();
}

export function renderContacts(target: HTMLElement, report: Report): void {
  const rows = contactRows(report);
  if (rows.length === 0) {
    target.replaceChildren(
      el("div", "empty-state", "No contacts found for this case and period."),
    );
    return;
  }
  target.replaceChildren(
    table(
      ["phone", "facility", "evidence", "hits", "min distance (m)", "first", "last"],
      rows.map((r) => [
        r.phone,
        r.facility,
        r.evidence,
        r.hitCount,
        r.minDistance === null ? "-" : r.minDistance,
        r.firstTime,
        r.lastTime,
      ]),
    ),
  );
}

export function renderDiff(target: HTMLElement, diff: ContactDiff | null): void {
  if (diff === null) {
    target.replaceChildren(el("div", "empty-state", "Re-run the case to compare runs."));
    return;
  }
  const wrap = el("div");
  const added = el("div", "diff-block diff-added");
  added.appendChild(el("h4", undefined, `added (${diff.added.length})`));
  for (const contact of diff.added) {
    added.appendChild(el("div", undefined, `+ ${contact.phone} @ ${contact.facility}`));
  }
  const removed = el("div", "diff-block diff-removed");
  removed.appendChild(el("h4", undefined, `removed (${diff.removed.length})`));
  for (const contact of diff.removed) {
    removed.appendChild(el("div", undefined, `- ${contact.phone} @ ${contact.facility}`));
  }
  wrap.append(added, removed);
  wrap.appendChild(
    el("div", "diff-note", `${diff.unchanged.length} contacts unchanged`),
  );
  target.replaceChildren(wrap);
}

function renderHitsPane(section: Section): HTMLElement {
  const pane = el("div", "hits-pane");
  const tabs = el("div", "tabs");
  const rawButton = el("button", "tab active", `raw (${section.raw_hits.length})`);
  const filteredButton = el(
    "button",
    "tab",
    `filtered (${section.filtered_hits.length})`,
  );
  rawButton.title = "every hit the facility reported, before context filters";
  filteredButton.title = "hits surviving the context profile";
  const body = el("div", "tab-body");

  const show = (which: "raw" | "filtered") => {
    const hits = which === "raw" ? section.raw_hits : section.filtered_hits;
    rawButton.classList.toggle("active", which === "raw");
    filteredButton.classList.toggle("active", which === "filtered");
    const rows = hitRows(hits);
    body.replaceChildren(
      rows.length === 0
        ? el("div", "empty-state", "no hits")
        : table(
            ["visitor", "time", "distance (m)", "time gap (s)", "where"],
            rows.map((r) => [
              r.visitor.slice(0, 10) + "..",
              r.time,
              r.distance,
              r.temporalGap === null ? "-" : r.temporalGap,
              r.where ?? "-",
            ]),
          ),
    );
  };
  rawButton.onclick = () => show("raw");
  filteredButton.onclick = () => show("filtered");
  tabs.append(rawButton, filteredButton);
  pane.append(tabs, body);
  show("raw");
  return pane;
}

function drawHeatmap(canvas: HTMLCanvasElement, model: HeatmapModel): void {
  const scale = Math.max(
    4,
    Math.floor(Math.min(560 / model.ncols, 560 / model.nrows)),
  );
  canvas.width = model.ncols * scale;
  canvas.height = model.nrows * scale;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#fbfbf8";
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  const meters = scale / model.resolution;
  for (const zone of model.zones) {
    const [x0, y0, x1, y1] = zone.rect;
    ctx.strokeStyle = "#c8c4ae";
    ctx.strokeRect(x0 * meters, y0 * meters, (x1 - x0) * meters, (y1 - y0) * meters);
  }
  for (const cell of model.cells) {
    if (cell.count > 0) {
      ctx.fillStyle = cell.color;
      ctx.fillRect(cell.col * scale, cell.row * scale, scale, scale);
    }
    if (cell.patient) {
      ctx.strokeStyle = "#1446c8";
      ctx.lineWidth = 1.5;
      ctx.strokeRect(cell.col * scale + 1, cell.row * scale + 1, scale - 2, scale - 2);
      ctx.lineWidth = 1;
    }
  }
  ctx.strokeStyle = "#2b2b2b";
  ctx.lineWidth = 2;
  for (const [x0, y0, x1, y1] of model.walls) {
    ctx.beginPath();
    ctx.moveTo(x0 * meters, y0 * meters);
    ctx.lineTo(x1 * meters, y1 * meters);
    ctx.stroke();
  }
  ctx.lineWidth = 1;
  if (model.trajectory.length > 1) {
    ctx.strokeStyle = "#1446c8";
    ctx.beginPath();
    model.trajectory.forEach(([x, y], i) => {
      if (i === 0) ctx.moveTo(x * meters, y * meters);
      else ctx.lineTo(x * meters, y * meters);
    });
    ctx.stroke();
  }

  const tooltip = el("div", "heatmap-tooltip");
  tooltip.style.display = "none";
  canvas.parentElement?.appendChild(tooltip);
  canvas.onmousemove = (event) => {
    const rect = canvas.getBoundingClientRect();
    const col = Math.floor((event.clientX - rect.left) / scale);
    const row = Math.floor((event.clientY - rect.top) / scale);
    const cell = model.cells[row * model.ncols + col];
    if (!cell) {
      tooltip.style.display = "none";
      return;
    }
    tooltip.textContent = cell.tooltip;
    tooltip.style.display = "block";
    tooltip.style.left = `${event.clientX - rect.left + 12}px`;
    tooltip.style.top = `${event.clientY - rect.top + 12}px`;
  };
  canvas.onmouseleave = () => {
    tooltip.style.display = "none";
  };
}

export function renderSections(target: HTMLElement, report: Report): void {
  target.replaceChildren();
  const summaries = sectionSummaries(report);
  report.sections.forEach((section, index) => {
    const summary = summaries[index]!;
    const card = el("div", "section-card");
    const title = el(
      "h3",
      undefined,
      `${summary.facility} / ${summary.mode} (visit at ${summary.visitTime})`,
    );
    card.appendChild(title);
    if (summary.error) {
      card.appendChild(el("div", "banner banner-error", `facility error: ${summary.error}`));
      target.appendChild(card);
      return;
    }
    for (const warning of summary.warnings) {
      card.appendChild(el("div", "banner banner-info", warning));
    }
    card.appendChild(renderHitsPane(section));
    if (section.surface_pairs.length > 0) {
      card.appendChild(el("h4", undefined, `surface contacts (${section.surface_pairs.length})`));
      card.appendChild(
        table(
          ["visitor", "cell", "patient left", "visitor arrived"],
          section.surface_pairs.map((p) => [
            p.visitor.slice(0, 10) + "..",
            `(${p.cell[0]}, ${p.cell[1]})`,
            p.patient_leave,
            p.visitor_arrive,
          ]),
        ),
      );
    }
    const heatmapWrap = el("div", "heatmap-wrap");
    heatmapWrap.appendChild(el("h4", undefined, "heatmap"));
    const model = heatmapModel(section);
    if (model === null) {
      heatmapWrap.appendChild(
        el("div", "empty-state", heatmapUnavailableReason(section) ?? "unavailable"),
      );
    } else {
      const holder = el("div", "heatmap-holder");
      const canvas = el("canvas", "heatmap-canvas");
      holder.appendChild(canvas);
      heatmapWrap.appendChild(holder);
      heatmapWrap.appendChild(
        el(
          "div",
          "heatmap-legend",
          `max ${model.maxCount} fixes per cell; blue outline = patient cells, blue line = patient trajectory`,
        ),
      );
      drawHeatmap(canvas, model);
    }
    card.appendChild(heatmapWrap);
    target.appendChild(card);
  });
}
