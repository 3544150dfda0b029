/** Shapes of the service's JSON contract (see docs/api.md). */

export interface ParseIssue {
  code: string;
  message: string;
  span?: [number, number];
  path?: string;
}

export interface ParseResponse {
  ok: boolean;
  canonical: string | null;
  ast: unknown;
  issues: ParseIssue[];
}

export interface LineFitJson {
  slope: number;
  intercept: number;
  n_points: number;
  x_range: [number, number];
}

export interface ResultJson {
  viz_id: string;
  total: number;
  breakpoint_bins: number[];
  breakpoint_x: number[];
  expr_scores: number[];
  expr_ranges: [number, number][];
  fits: (LineFitJson | null)[];
  series: { x: number[]; y: number[] };
  bins: { x: number[]; y: number[] };
}

export interface QueryResponse {
  parsed: { canonical: string; ast: unknown };
  results: ResultJson[];
  warnings: string[];
  timing_ms: Record<string, number>;
}

export interface DatasetInfo {
  name: string;
  columns: { name: string; kind: string }[];
  row_count: number;
}

export interface QueryRequestBody {
  dataset: string;
  z: string;
  x: string;
  y: string;
  bin_width?: number | null;
  query: string;
  k: number;
  engine: string;
}

export type Point = [number, number];
