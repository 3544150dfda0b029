/** Thin fetch client for the service; one in-flight query at a time. */

import type { DatasetInfo, ParseResponse, QueryRequestBody, QueryResponse } from "./types.js";

export class ApiClient {
  private queryAbort: AbortController | null = null;

  constructor(private base: string = "") {}

  async listDatasets(): Promise<DatasetInfo[]> {
    const resp = await fetch(`${this.base}/api/datasets`);
    if (!resp.ok) throw new Error(`datasets: HTTP ${resp.status}`);
    const body = await resp.json();
    return body.datasets as DatasetInfo[];
  }

  async parse(query: string): Promise<ParseResponse> {
    const resp = await fetch(`${this.base}/api/parse?q=${encodeURIComponent(query)}`);
    if (!resp.ok) throw new Error(`parse: HTTP ${resp.status}`);
    return (await resp.json()) as ParseResponse;
  }

  /** Aborts any still-pending query before issuing the next one. */
  async runQuery(body: QueryRequestBody): Promise<QueryResponse> {
    this.queryAbort?.abort();
    const abort = new AbortController();
    this.queryAbort = abort;
    const resp = await fetch(`${this.base}/api/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal: abort.signal,
    });
    if (!resp.ok) {
      let detail = `HTTP ${resp.status}`;
      try {
        const payload = await resp.json();
        if (payload.detail) detail = JSON.stringify(payload.detail);
      } catch {
        // keep the status text
      }
      throw new Error(detail);
    }
    return (await resp.json()) as QueryResponse;
  }
}
