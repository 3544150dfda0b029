/** UI state and its transitions, kept free of DOM so they are testable.
 *
 * Two monotone sequence counters defend against out-of-order async work:
 * parse responses and query responses each carry the sequence number they
 * were issued under and are dropped when a newer request has started.
 */

import type { ParseIssue, Point, QueryResponse } from "./types.js";

export type ParseStatus =
  | { kind: "idle" }
  | { kind: "checking" }
  | { kind: "ok"; canonical: string; ast: unknown }
  | { kind: "error"; issues: ParseIssue[] };

export interface UiState {
  dataset: string | null;
  zColumn: string | null;
  xColumn: string | null;
  yColumn: string | null;
  binWidth: number | null;
  queryText: string;
  parse: ParseStatus;
  parseSeq: number;
  engine: string;
  k: number;
  running: boolean;
  runSeq: number;
  response: QueryResponse | null;
  ranQueryText: string | null;
  sketch: Point[];
  error: string | null;
}

export function initialState(): UiState {
  return {
    dataset: null,
    zColumn: null,
    xColumn: null,
    yColumn: null,
    binWidth: null,
    queryText: "",
    parse: { kind: "idle" },
    parseSeq: 0,
    engine: "segtree_prune",
    k: 6,
    running: false,
    runSeq: 0,
    response: null,
    ranQueryText: null,
    sketch: [],
    error: null,
  };
}

export function setQueryText(state: UiState, text: string): UiState {
  return {
    ...state,
    queryText: text,
    parse: text.trim() ? { kind: "checking" } : { kind: "idle" },
    parseSeq: state.parseSeq + 1,
  };
}

export function applyParseResult(
  state: UiState,
  seq: number,
  status: ParseStatus,
): UiState {
  if (seq !== state.parseSeq) return state; // stale: a newer edit exists
  return { ...state, parse: status };
}

export function canRun(state: UiState): boolean {
  return (
    state.parse.kind === "ok" &&
    !state.running &&
    state.dataset !== null &&
    state.zColumn !== null &&
    state.xColumn !== null &&
    state.yColumn !== null
  );
}

export function startRun(state: UiState): UiState {
  return { ...state, running: true, runSeq: state.runSeq + 1, error: null };
}

export function applyRunResult(
  state: UiState,
  seq: number,
  response: QueryResponse,
  queryText: string,
): UiState {
  if (seq !== state.runSeq) return state; // superseded by a newer run
  return { ...state, running: false, response, ranQueryText: queryText };
}

export function applyRunError(state: UiState, seq: number, message: string): UiState {
  if (seq !== state.runSeq) return state;
  return { ...state, running: false, error: message };
}

export function addSketchPoint(state: UiState, point: Point): UiState {
  return { ...state, sketch: [...state.sketch, point] };
}

export function clearSketch(state: UiState): UiState {
  return { ...state, sketch: [] };
}

/** The rendered charts must always correspond to the displayed query's last
 * successful run. */
export function resultsAreCurrent(state: UiState): boolean {
  return state.response !== null && state.ranQueryText === state.queryText;
}
