// Dashboard wiring: snapshot form -> /api/recommend -> timeline + fan charts,
// with preset weight buttons and a pinned-response what-if diff.

import { fetchSchema, postRecommend } from "./api.js";
import { diffResponses, isEmptyDiff } from "./diff.js";
import { fanGeometry } from "./fanchart.js";
import { applyPreset, buildRequest, defaultState, persist, restore, validateAgainstSchema } from "./state.js";
import { renderRoomPlan } from "./timeline.js";
import { PRESETS, RecommendResponse, UiState } from "./types.js";

let state: UiState = defaultState();
let lastResponse: RecommendResponse | null = null;
let pinned: RecommendResponse | null = null;
let schema: any = null;

const $ = (id: string) => document.getElementById(id)!;

function numberList(value: string): number[] {
  return value
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map(Number)
    .filter((v) => Number.isFinite(v));
}

function renderForm(): void {
  const host = $("hospitals");
  host.innerHTML = "";
  state.hospitals.forEach((h, idx) => {
    const div = document.createElement("div");
    div.className = "hospital";
    div.innerHTML = `
      <h3>${h.id} <small>standard ${h.standardCapacity} beds; rooms ${h.roomBeds.join("/")}</small></h3>
      <label>open rooms <input data-k="open" data-h="${idx}" value="${h.open.join(",")}" /></label>
      <label>preparing (1d) <input data-k="sched1" data-h="${idx}" value="${h.sched1.join(",")}" /></label>
      <label>preparing (2d) <input data-k="sched2" data-h="${idx}" value="${h.sched2.join(",")}" /></label>
      <label>attained LoS <input data-k="attainedLos" data-h="${idx}" value="${h.attainedLos.join(",")}"
        placeholder="e.g. 1.5, 2, 4" /></label>
      <span class="muted">occupancy ${h.attainedLos.length}</span>
    `;
    host.appendChild(div);
  });
  ($("rates") as HTMLInputElement).value = state.rates.join(",");
  ($("seed") as HTMLInputElement).value = String(state.seed);
  ($("scenarios") as HTMLInputElement).value = String(state.scenarioCount);
  ($("lookahead") as HTMLInputElement).value = String(state.lookahead);
  ($("rule") as HTMLSelectElement).value = state.rule;
  for (const key of ["alpha", "beta", "gamma", "delta", "epsilon"] as const) {
    const input = $(`w-${key}`) as HTMLInputElement;
    input.value = String(state.weights[key]);
    $(`w-${key}-val`).textContent = String(state.weights[key]);
  }
}

function collectForm(): void {
  document.querySelectorAll<HTMLInputElement>("#hospitals input").forEach((input) => {
    const h = Number(input.dataset.h);
    const key = input.dataset.k as "open" | "sched1" | "sched2" | "attainedLos";
    const values = numberList(input.value);
    if (key === "attainedLos") state.hospitals[h].attainedLos = values;
    else state.hospitals[h][key] = values.map((v) => (v ? 1 : 0));
  });
  state.rates = numberList(($("rates") as HTMLInputElement).value);
  state.seed = Number(($("seed") as HTMLInputElement).value) || 0;
  state.scenarioCount = Number(($("scenarios") as HTMLInputElement).value) || 50;
  state.lookahead = Number(($("lookahead") as HTMLInputElement).value) || 5;
  state.rule = ($("rule") as HTMLSelectElement).value as UiState["rule"];
  for (const key of ["alpha", "beta", "gamma", "delta", "epsilon"] as const) {
    state.weights[key] = Number(($(`w-${key}`) as HTMLInputElement).value);
  }
}

function renderTimeline(response: RecommendResponse): void {
  const container = $("timeline");
  container.innerHTML = "";
  const timelines = renderRoomPlan(response.decision.room_plan);
  timelines.forEach((tl, h) => {
    const table = document.createElement("table");
    const horizon = tl.rows[0]?.days.length ?? 0;
    const header = ["room", ...Array.from({ length: horizon }, (_v, u) => `t+${u}`)];
    table.innerHTML =
      `<caption>${response.fan.hospitals[h]} — capacity ${tl.capacity.join(" → ")}</caption>` +
      `<tr>${header.map((c) => `<th>${c}</th>`).join("")}</tr>` +
      tl.rows
        .map(
          (row) =>
            `<tr><td>#${row.room} (${row.beds})</td>` +
            row.days.map((d) => `<td class="${d}">${d === "preparing" ? "prep" : d}</td>`).join("") +
            "</tr>",
        )
        .join("");
    container.appendChild(table);
  });
  const dests = response.decision.assignment.destinations;
  $("assignment").textContent = dests.length
    ? dests.map((h, j) => `#${j + 1}→${response.fan.hospitals[h]}`).join("  ")
    : "no assignable arrivals expected (J = 0)";
}

function renderFan(response: RecommendResponse): void {
  const container = $("fans");
  container.innerHTML = "";
  response.fan.hospitals.forEach((id, h) => {
    const geom = fanGeometry(
      response.fan.p10[h],
      response.fan.p50[h],
      response.fan.p90[h],
      response.capacity_schedule[h],
    );
    const svg = `
      <figure>
        <figcaption>${id}</figcaption>
        <svg viewBox="0 0 320 120" width="320" height="120">
          <path d="${geom.band}" fill="#9ecae1" opacity="0.55"/>
          <path d="${geom.median}" fill="none" stroke="#1f77b4" stroke-width="2"/>
          <path d="${geom.capacity}" fill="none" stroke="#d62728" stroke-width="2" stroke-dasharray="5,3"/>
        </svg>
      </figure>`;
    container.insertAdjacentHTML("beforeend", svg);
  });
}

function renderDiff(): void {
  const target = $("diff");
  if (!pinned || !lastResponse) {
    target.textContent = pinned ? "submit a what-if to compare" : "";
    return;
  }
  const diff = diffResponses(pinned, lastResponse);
  if (isEmptyDiff(diff)) {
    target.textContent = "no differences vs pinned plan";
    return;
  }
  const cells = diff.cells
    .map((c) => `${lastResponse!.fan.hospitals[c.hospital]} room ${c.room} t+${c.day}: ${c.from} → ${c.to}`)
    .slice(0, 40);
  const assigns = diff.assignments.map(
    (a) => `arrival ${a.arrival}: ${a.from ?? "-"} → ${a.to ?? "-"}`,
  );
  target.innerHTML = [...cells, ...assigns].map((line) => `<div>${line}</div>`).join("");
}

async function submit(): Promise<void> {
  collectForm();
  const request = buildRequest(state);
  const problems = schema ? validateAgainstSchema(request, schema.recommend?.properties?.state ? schema.recommend : schema) : [];
  const status = $("status");
  if (problems.length) {
    status.textContent = `not submitted: ${problems.join("; ")}`;
    return;
  }
  status.textContent = "solving…";
  try {
    const outcome = await postRecommend(request);
    if (outcome.stale) return; // a newer request took over
    if (outcome.status !== 200 && outcome.status !== 504) {
      status.textContent = `error ${outcome.status}: ${(outcome.body as any).error ?? ""}`;
      return;
    }
    lastResponse = outcome.body as RecommendResponse;
    status.textContent = outcome.status === 504 ? "time limit — approximate plan" : "ok";
    renderTimeline(lastResponse);
    renderFan(lastResponse);
    renderDiff();
    persist(state, request, lastResponse);
    ($("export") as HTMLTextAreaElement).value = JSON.stringify(request, null, 2);
  } catch (err) {
    status.textContent = `request failed: ${err}`;
  }
}

function boot(): void {
  const stored = restore();
  if (stored?.state) {
    state = stored.state;
    lastResponse = (stored.lastResponse as RecommendResponse) ?? null;
  }
  renderForm();
  if (lastResponse) {
    renderTimeline(lastResponse);
    renderFan(lastResponse);
  }
  for (const name of Object.keys(PRESETS)) {
    $(`preset-${name}`).addEventListener("click", () => {
      collectForm();
      state = applyPreset(state, name);
      renderForm();
    });
  }
  $("submit").addEventListener("click", () => void submit());
  $("pin").addEventListener("click", () => {
    pinned = lastResponse;
    renderDiff();
  });
  fetchSchema()
    .then((s) => (schema = s))
    .catch(() => ($("status").textContent = "warning: schema unavailable, submitting unvalidated"));
}

boot();
