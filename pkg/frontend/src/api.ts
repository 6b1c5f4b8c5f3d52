// Thin client for the wardplan service; one in-flight recommend at a time,
// stale responses dropped by request id.

import { RecommendRequest, RecommendResponse } from "./types.js";

const BASE = (window as any).WARDPLAN_API ?? "";

let requestCounter = 0;
let activeRequest = 0;

export async function fetchSchema(): Promise<any> {
  const resp = await fetch(`${BASE}/api/schema`);
  if (!resp.ok) throw new Error(`schema fetch failed: ${resp.status}`);
  return resp.json();
}

export interface RecommendOutcome {
  stale: boolean;
  status: number;
  body: RecommendResponse | { error: string };
}

export async function postRecommend(request: RecommendRequest): Promise<RecommendOutcome> {
  const id = ++requestCounter;
  activeRequest = id;
  const resp = await fetch(`${BASE}/api/recommend`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(request),
  });
  const body = await resp.json();
  return { stale: id !== activeRequest, status: resp.status, body };
}
