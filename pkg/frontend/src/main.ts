/** DOM wiring: correction panel with live validation, sketch canvas, and
 * the ranked-results grid. All numeric truth comes from the API. */

import { ApiClient } from "./api.js";
import { buildChartModel } from "./charts.js";
import { displayScore, sketchToQuery, splitAtSpan } from "./query.js";
import {
  UiState,
  addSketchPoint,
  applyParseResult,
  applyRunError,
  applyRunResult,
  canRun,
  clearSketch,
  initialState,
  resultsAreCurrent,
  setQueryText,
  startRun,
} from "./state.js";
import type { DatasetInfo, ResultJson } from "./types.js";

const api = new ApiClient();
let state: UiState = initialState();
let datasets: DatasetInfo[] = [];
let parseTimer: number | undefined;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

function update(next: UiState): void {
  state = next;
  render();
}

// --- correction panel -------------------------------------------------------

function scheduleParse(): void {
  window.clearTimeout(parseTimer);
  const seq = state.parseSeq;
  const text = state.queryText;
  if (!text.trim()) return;
  parseTimer = window.setTimeout(async () => {
    try {
      const parsed = await api.parse(text);
      if (parsed.ok && parsed.canonical !== null) {
        update(applyParseResult(state, seq, { kind: "ok", canonical: parsed.canonical, ast: parsed.ast }));
      } else {
        update(applyParseResult(state, seq, { kind: "error", issues: parsed.issues }));
      }
    } catch (err) {
      update(
        applyParseResult(state, seq, {
          kind: "error",
          issues: [{ code: "NETWORK", message: String(err) }],
        }),
      );
    }
  }, 250);
}

function renderCorrectionPanel(): void {
  const panel = $("correction");
  const input = $<HTMLInputElement>("query-input");
  panel.innerHTML = "";
  panel.className = "panel";
  input.classList.remove("bad");
  if (state.parse.kind === "idle") {
    panel.textContent = "Type a shape query, e.g. u >> d >> u";
    return;
  }
  if (state.parse.kind === "checking") {
    panel.textContent = "checking…";
    return;
  }
  if (state.parse.kind === "ok") {
    panel.classList.add("ok");
    const label = document.createElement("span");
    label.textContent = "parsed: ";
    const canonical = document.createElement("a");
    canonical.href = "#";
    canonical.textContent = state.parse.canonical;
    canonical.title = "replace the input with the canonical form";
    canonical.addEventListener("click", (ev) => {
      ev.preventDefault();
      input.value = (state.parse as { canonical: string }).canonical;
      onQueryEdited();
    });
    panel.append(label, canonical);
    return;
  }
  panel.classList.add("bad");
  input.classList.add("bad");
  for (const issue of state.parse.issues) {
    const row = document.createElement("div");
    if (issue.span) {
      const { before, bad, after } = splitAtSpan(state.queryText, issue.span);
      const pre = document.createElement("code");
      pre.textContent = before;
      const mark = document.createElement("code");
      mark.className = "squiggle";
      mark.textContent = bad;
      const post = document.createElement("code");
      post.textContent = after;
      row.append(pre, mark, post, document.createTextNode(` — ${issue.message}`));
    } else {
      row.textContent = `${issue.code}: ${issue.message}`;
    }
    panel.append(row);
  }
}

// --- results grid ------------------------------------------------------------

const SVG_NS = "http://www.w3.org/2000/svg";

function chartCard(result: ResultJson): HTMLElement {
  const model = buildChartModel(result);
  const card = document.createElement("div");
  card.className = "card";
  card.addEventListener("click", () => card.classList.toggle("expanded"));

  const badge = document.createElement("div");
  badge.className = "badge" + (model.score >= 0 ? " pos" : " neg");
  badge.textContent = displayScore(model.score);
  const title = document.createElement("div");
  title.className = "card-title";
  title.textContent = model.vizId;
  title.append(badge);

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${model.width} ${model.height}`);
  for (const bx of model.breakpoints) {
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(bx));
    line.setAttribute("x2", String(bx));
    line.setAttribute("y1", "0");
    line.setAttribute("y2", String(model.height));
    line.setAttribute("class", "breakpoint");
    svg.append(line);
  }
  const path = document.createElementNS(SVG_NS, "path");
  path.setAttribute("d", model.seriesPath);
  path.setAttribute("class", "series");
  svg.append(path);
  for (const seg of model.segments) {
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", seg.x1.toFixed(1));
    line.setAttribute("y1", seg.y1.toFixed(1));
    line.setAttribute("x2", seg.x2.toFixed(1));
    line.setAttribute("y2", seg.y2.toFixed(1));
    line.setAttribute("class", "fit");
    svg.append(line);
  }
  card.append(title, svg);
  return card;
}

function renderResults(): void {
  const grid = $("results");
  const banner = $("warnings");
  grid.innerHTML = "";
  banner.innerHTML = "";
  banner.hidden = true;
  if (state.error) {
    banner.hidden = false;
    banner.textContent = state.error;
    return;
  }
  if (!state.response || !resultsAreCurrent(state)) {
    const note = document.createElement("p");
    note.className = "empty";
    note.textContent = state.response
      ? "query changed since the last run — run it again"
      : "no results yet";
    grid.append(note);
    return;
  }
  if (state.response.warnings.length) {
    banner.hidden = false;
    banner.textContent = state.response.warnings.join("; ");
  }
  if (!state.response.results.length) {
    const note = document.createElement("p");
    note.className = "empty";
    note.textContent = "no trendline matched — loosen the query or check the axis columns";
    grid.append(note);
    return;
  }
  for (const result of state.response.results) {
    grid.append(chartCard(result));
  }
}

// --- sketch canvas ------------------------------------------------------------

function renderSketch(): void {
  const canvas = $<HTMLCanvasElement>("sketch-canvas");
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#5b8def";
  ctx.fillStyle = "#5b8def";
  const pts = [...state.sketch].sort((a, b) => a[0] - b[0]);
  pts.forEach(([x, y], i) => {
    ctx.beginPath();
    ctx.arc(x, canvas.height - y, 3, 0, Math.PI * 2);
    ctx.fill();
    if (i > 0) {
      ctx.beginPath();
      ctx.moveTo(pts[i - 1][0], canvas.height - pts[i - 1][1]);
      ctx.lineTo(x, canvas.height - y);
      ctx.stroke();
    }
  });
  const button = $<HTMLButtonElement>("sketch-to-query");
  button.disabled = sketchToQuery(state.sketch) === null;
  button.title = button.disabled ? "click at least two x positions first" : "";
}

// --- top-level render -----------------------------------------------------------

function render(): void {
  renderCorrectionPanel();
  renderResults();
  renderSketch();
  $<HTMLButtonElement>("run").disabled = !canRun(state);
  $("run-status").textContent = state.running ? "running…" : "";
}

function onQueryEdited(): void {
  const input = $<HTMLInputElement>("query-input");
  update(setQueryText(state, input.value));
  scheduleParse();
}

async function onRun(): Promise<void> {
  if (!canRun(state)) return;
  const next = startRun(state);
  const seq = next.runSeq;
  const text = next.queryText;
  update(next);
  try {
    const response = await api.runQuery({
      dataset: state.dataset!,
      z: state.zColumn!,
      x: state.xColumn!,
      y: state.yColumn!,
      bin_width: state.binWidth,
      query: text,
      k: state.k,
      engine: state.engine,
    });
    update(applyRunResult(state, seq, response, text));
  } catch (err) {
    if ((err as Error).name === "AbortError") return;
    update(applyRunError(state, seq, String(err)));
  }
}

function fillColumnSelects(): void {
  const dataset = datasets.find((d) => d.name === state.dataset);
  for (const [id, setter] of [
    ["z-col", (v: string | null) => (state = { ...state, zColumn: v })],
    ["x-col", (v: string | null) => (state = { ...state, xColumn: v })],
    ["y-col", (v: string | null) => (state = { ...state, yColumn: v })],
  ] as const) {
    const select = $<HTMLSelectElement>(id);
    const previous = select.value;
    select.innerHTML = "";
    const blank = document.createElement("option");
    blank.value = "";
    blank.textContent = "—";
    select.append(blank);
    for (const col of dataset?.columns ?? []) {
      const option = document.createElement("option");
      option.value = col.name;
      option.textContent = `${col.name} (${col.kind})`;
      select.append(option);
    }
    if ([...select.options].some((o) => o.value === previous)) select.value = previous;
    setter(select.value || null);
  }
  render();
}

async function boot(): Promise<void> {
  try {
    datasets = await api.listDatasets();
  } catch {
    datasets = [];
  }
  const picker = $<HTMLSelectElement>("dataset");
  picker.innerHTML = "";
  for (const d of datasets) {
    const option = document.createElement("option");
    option.value = d.name;
    option.textContent = `${d.name} (${d.row_count} rows)`;
    picker.append(option);
  }
  if (datasets.length) {
    state = { ...state, dataset: datasets[0].name };
    picker.value = datasets[0].name;
  }
  fillColumnSelects();

  picker.addEventListener("change", () => {
    state = { ...state, dataset: picker.value || null };
    fillColumnSelects();
  });
  for (const id of ["z-col", "x-col", "y-col"] as const) {
    $<HTMLSelectElement>(id).addEventListener("change", () => {
      const value = (sel: string) => $<HTMLSelectElement>(sel).value || null;
      state = {
        ...state,
        zColumn: value("z-col"),
        xColumn: value("x-col"),
        yColumn: value("y-col"),
      };
      render();
    });
  }
  $<HTMLInputElement>("query-input").addEventListener("input", onQueryEdited);
  $<HTMLInputElement>("bin-width").addEventListener("change", (ev) => {
    const raw = (ev.target as HTMLInputElement).value;
    state = { ...state, binWidth: raw ? Number(raw) : null };
  });
  $<HTMLSelectElement>("engine").addEventListener("change", (ev) => {
    state = { ...state, engine: (ev.target as HTMLSelectElement).value };
  });
  $<HTMLInputElement>("top-k").addEventListener("change", (ev) => {
    state = { ...state, k: Math.max(1, Number((ev.target as HTMLInputElement).value) || 6) };
  });
  $<HTMLButtonElement>("run").addEventListener("click", () => void onRun());
  const canvas = $<HTMLCanvasElement>("sketch-canvas");
  canvas.addEventListener("click", (ev) => {
    const rect = canvas.getBoundingClientRect();
    const x = Math.round(ev.clientX - rect.left);
    const y = Math.round(canvas.height - (ev.clientY - rect.top));
    update(addSketchPoint(state, [x, y]));
  });
  $<HTMLButtonElement>("sketch-clear").addEventListener("click", () => update(clearSketch(state)));
  $<HTMLButtonElement>("sketch-to-query").addEventListener("click", () => {
    const text = sketchToQuery(state.sketch);
    if (text === null) return;
    $<HTMLInputElement>("query-input").value = text;
    onQueryEdited();
  });
  render();
}

void boot();
