/** Pure helpers around query text: sketch literals and error-span markup. */

import type { Point } from "./types.js";

function trimNumber(v: number): string {
  if (Number.isInteger(v)) return String(v);
  return String(Math.round(v * 1000) / 1000);
}

/**
 * Turn clicked canvas points into the sketch-literal query "[v=x:y,...]".
 * Points are sorted by x; later clicks at an already-used x win.
 * Returns null while fewer than 2 distinct x positions exist.
 */
export function sketchToQuery(points: Point[]): string | null {
  const byX = new Map<number, number>();
  for (const [x, y] of points) byX.set(x, y);
  const distinct = [...byX.entries()].sort((a, b) => a[0] - b[0]);
  if (distinct.length < 2) return null;
  const body = distinct.map(([x, y]) => `${trimNumber(x)}:${trimNumber(y)}`).join(",");
  return `[v=${body}]`;
}

export interface SpanParts {
  before: string;
  bad: string;
  after: string;
}

/** Split query text at an error span so the view can underline it. */
export function splitAtSpan(text: string, span: [number, number]): SpanParts {
  const [rawStart, rawEnd] = span;
  const start = Math.max(0, Math.min(rawStart, text.length));
  const end = Math.max(start, Math.min(rawEnd, text.length));
  if (start >= text.length) {
    // Errors at end-of-input still deserve a visible caret target.
    return { before: text, bad: "‸", after: "" };
  }
  return {
    before: text.slice(0, start),
    bad: text.slice(start, Math.max(end, start + 1)),
    after: text.slice(Math.max(end, start + 1)),
  };
}

/** Scores arriving from the API must already be in [-1, 1]; clamp anyway so
 * a misbehaving server can never push garbage into the score badges. */
export function displayScore(value: number): string {
  const clamped = Math.max(-1, Math.min(1, value));
  return (clamped >= 0 ? "+" : "") + clamped.toFixed(3);
}
