/** Chart geometry: map one ranked result into SVG-ready coordinates.
 *
 * Everything drawn comes straight from API data; the client never refits.
 * Fits live in engine space (bin position, normalized value); they are
 * mapped onto the raw series through the affine transform that relates the
 * two series' moments, so the red segments land on the grey line.
 */

import type { ResultJson } from "./types.js";

export interface ChartModel {
  seriesPath: string;
  segments: { x1: number; y1: number; x2: number; y2: number }[];
  breakpoints: number[]; // pixel x positions
  score: number;
  vizId: string;
  width: number;
  height: number;
}

function mean(values: number[]): number {
  return values.reduce((a, b) => a + b, 0) / values.length;
}

function std(values: number[]): number {
  const m = mean(values);
  return Math.sqrt(mean(values.map((v) => (v - m) * (v - m))));
}

export interface Scales {
  x: (v: number) => number;
  y: (v: number) => number;
  /** engine-space value -> raw-data value */
  denormalize: (v: number) => number;
}

export function buildScales(
  result: ResultJson,
  width: number,
  height: number,
  pad = 6,
): Scales {
  const xs = result.series.x;
  const ys = result.series.y;
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const xSpan = xMax - xMin || 1;
  const ySpan = yMax - yMin || 1;
  const x = (v: number) => pad + ((v - xMin) / xSpan) * (width - 2 * pad);
  const y = (v: number) => height - pad - ((v - yMin) / ySpan) * (height - 2 * pad);

  const rawStd = std(ys);
  const engStd = std(result.bins.y);
  const scale = engStd > 0 ? rawStd / engStd : 1;
  const shift = mean(ys) - scale * mean(result.bins.y);
  const denormalize = (v: number) => v * scale + shift;
  return { x, y, denormalize };
}

export function buildChartModel(result: ResultJson, width = 320, height = 140): ChartModel {
  const scales = buildScales(result, width, height);
  const parts: string[] = [];
  result.series.x.forEach((xv, i) => {
    const cmd = i === 0 ? "M" : "L";
    parts.push(`${cmd}${scales.x(xv).toFixed(1)},${scales.y(result.series.y[i]).toFixed(1)}`);
  });

  const segments = [];
  for (let j = 0; j < result.expr_ranges.length; j++) {
    const fit = result.fits[j];
    if (!fit) continue;
    const [lo, hi] = result.expr_ranges[j];
    const xLo = result.bins.x[lo];
    const xHi = result.bins.x[hi];
    const yLo = scales.denormalize(fit.intercept + fit.slope * lo);
    const yHi = scales.denormalize(fit.intercept + fit.slope * hi);
    segments.push({
      x1: scales.x(xLo),
      y1: scales.y(yLo),
      x2: scales.x(xHi),
      y2: scales.y(yHi),
    });
  }

  return {
    seriesPath: parts.join(" "),
    segments,
    breakpoints: result.breakpoint_x.map((v) => scales.x(v)),
    score: Math.max(-1, Math.min(1, result.total)),
    vizId: result.viz_id,
    width,
    height,
  };
}
