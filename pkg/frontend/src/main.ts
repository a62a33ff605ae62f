/** Console wiring: connect form, case form, parameter panel, panes. */

import { AuthError, ApiError } from "./api.js";
import { diffContacts } from "./diff.js";
import {
  FACILITY_TYPES,
  PanelState,
  ProfileState,
  buildCaseRequest,
  defaultPanel,
  defaultProfileState,
} from "./params.js";
import { clearBanner, renderBanner, renderContacts, renderDiff, renderSections } from "./render.js";
import { ConsoleSession } from "./session.js";
import type { Report } from "./types.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element: ${id}`);
  return node as T;
}

let session: ConsoleSession | null = null;
let panel: PanelState = defaultPanel(null);

const banner = () => byId<HTMLDivElement>("banner");

function profileEditor(facility: string, state: ProfileState): HTMLElement {
  const wrap = document.createElement("fieldset");
  wrap.className = "profile-editor";
  const legend = document.createElement("legend");
  legend.textContent = facility;
  wrap.appendChild(legend);

  const field = (label: string, input: HTMLElement) => {
    const row = document.createElement("label");
    row.className = "field";
    const span = document.createElement("span");
    span.textContent = label;
    row.append(span, input);
    wrap.appendChild(row);
  };

  const typeSelect = document.createElement("select");
  for (const kind of FACILITY_TYPES) {
    const option = document.createElement("option");
    option.value = kind;
    option.textContent = kind;
    option.selected = kind === state.facilityType;
    typeSelect.appendChild(option);
  }
  typeSelect.onchange = () => (state.facilityType = typeSelect.value);
  field("type", typeSelect);

  const text = (value: string, onInput: (v: string) => void, placeholder = "") => {
    const input = document.createElement("input");
    input.type = "text";
    input.value = value;
    input.placeholder = placeholder;
    input.oninput = () => onInput(input.value);
    return input;
  };
  field("max distance (m)", text(state.maxDistance, (v) => (state.maxDistance = v), "no cap"));
  field("min persistence (s)", text(state.minPersistence, (v) => (state.minPersistence = v)));
  field("persistence gap (s)", text(state.persistenceGap, (v) => (state.persistenceGap = v)));
  field("surface dwell (s)", text(state.surfaceDwell, (v) => (state.surfaceDwell = v)));
  field("surface lag (s)", text(state.surfaceLag, (v) => (state.surfaceLag = v)));

  const walls = document.createElement("input");
  walls.type = "checkbox";
  walls.checked = state.useWallOcclusion;
  walls.onchange = () => (state.useWallOcclusion = walls.checked);
  field("wall occlusion", walls);
  return wrap;
}

function renderPanel(): void {
  const host = byId<HTMLDivElement>("profiles");
  host.replaceChildren();
  for (const [facility, state] of Object.entries(panel.profiles)) {
    host.appendChild(profileEditor(facility, state));
  }
}

function renderReport(report: Report, previous: Report | null): void {
  renderContacts(byId("contacts"), report);
  renderSections(byId("sections"), report);
  renderDiff(byId("diff"), previous ? diffContacts(previous.contacts, report.contacts) : null);
  byId("trace-meta").textContent = session?.traceId
    ? `trace ${session.traceId} for ${report.patient}, period ${report.period[0]}..${report.period[1]}`
    : "";
  // panel follows the facilities present in the report
  for (const section of report.sections) {
    if (!(section.facility in panel.profiles)) {
      panel.profiles[section.facility] = defaultProfileState();
    }
  }
  renderPanel();
}

async function submit(rerun: boolean): Promise<void> {
  if (!session) {
    renderBanner(banner(), "error", "connect to a registry first");
    return;
  }
  const phone = byId<HTMLInputElement>("phone").value.trim();
  const sinceText = byId<HTMLInputElement>("since").value.trim();
  const untilText = byId<HTMLInputElement>("until").value.trim();
  let period: [number, number] | null = null;
  if (sinceText !== "" || untilText !== "") {
    const since = Number(sinceText);
    const until = Number(untilText);
    if (!Number.isInteger(since) || !Number.isInteger(until)) {
      renderBanner(banner(), "error", "period bounds must be unix seconds");
      return;
    }
    period = [since, until];
  }
  const built = buildCaseRequest(phone, period, panel);
  if (built.errors.length > 0 || !built.request) {
    renderBanner(banner(), "error", built.errors.join("; "));
    return;
  }
  clearBanner(banner());
  byId("trace-meta").textContent = rerun ? "re-running with new parameters..." : "tracing...";
  try {
    const previous = rerun ? session.currentReport : null;
    await session.submit(built.request);
    renderReport(session.currentReport!, previous);
  } catch (error) {
    if ((error as Error).name === "AbortError") {
      return; // superseded by a newer request
    }
    if (error instanceof AuthError) {
      renderBanner(banner(), "error", "token rejected: re-enter the auth token and reconnect");
      byId<HTMLInputElement>("token").focus();
      return;
    }
    if (error instanceof ApiError) {
      renderBanner(banner(), "error", `${error.code}: ${error.message}`);
      return;
    }
    renderBanner(banner(), "error", String(error));
  }
}

function connect(): void {
  const address = byId<HTMLInputElement>("registry").value.trim().replace(/\/$/, "");
  const token = byId<HTMLInputElement>("token").value;
  if (!address) {
    renderBanner(banner(), "error", "registry address required");
    return;
  }
  session = new ConsoleSession(address, token);
  panel = defaultPanel(null);
  renderPanel();
  clearBanner(banner());
  byId("trace-meta").textContent = `connected to ${address}`;
}

export function boot(): void {
  byId<HTMLButtonElement>("connect").onclick = connect;
  byId<HTMLButtonElement>("submit").onclick = () => void submit(false);
  byId<HTMLButtonElement>("rerun").onclick = () => void submit(true);
  renderPanel();
}

if (typeof document !== "undefined" && document.getElementById("connect")) {
  boot();
}
