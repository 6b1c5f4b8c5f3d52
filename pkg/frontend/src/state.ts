// Form state <-> request body. Pure, so the round-trip is testable.

import { RecommendRequest, RuleBlock, UiState, PRESETS, Weights } from "./types.js";

export function defaultState(): UiState {
  return {
    hospitals: [
      hospital("MST", 20, [4, 12, 6, 2, 4], 3),
      hospital("ZGT", 8, [8, 5, 5, 6], 2),
      hospital("SKB", 8, [5, 7], 2),
    ],
    priors: [0.2, 0.05, 0.05],
    rates: [4, 4, 4, 4, 4],
    lookahead: 5,
    scenarioCount: 100,
    seed: 1,
    rule: "SP",
    weights: { ...PRESETS["SP-O"] },
    statistic: "median",
    quantile: 0.9,
    designated: 0,
    split: [0.61, 0.39],
  };
}

function hospital(id: string, cap: number, beds: number[], margin: number) {
  return {
    id,
    standardCapacity: cap,
    roomBeds: beds,
    open: beds.map(() => 0),
    sched1: beds.map(() => 0),
    sched2: beds.map(() => 0),
    attainedLos: [],
    margin,
  };
}

export function applyPreset(state: UiState, name: keyof typeof PRESETS): UiState {
  return { ...state, rule: "SP", weights: { ...PRESETS[name] } };
}

export function buildRule(state: UiState): RuleBlock {
  if (state.rule === "SP" || state.rule === "SP_DET") {
    const rule: RuleBlock = { type: state.rule, weights: { ...state.weights } };
    if (state.rule === "SP_DET") rule.statistic = state.statistic;
    return rule;
  }
  if (state.rule === "IH") {
    return { type: "IH", quantile: state.quantile };
  }
  return {
    type: "PU",
    quantile: state.quantile,
    designated: state.designated,
    split: [...state.split],
  };
}

export function buildRequest(state: UiState): RecommendRequest {
  return {
    state: {
      day: 0,
      hospitals: state.hospitals.map((h) => ({
        id: h.id,
        standard_capacity: h.standardCapacity,
        room_beds: [...h.roomBeds],
        open: [...h.open],
        sched1: [...h.sched1],
        sched2: [...h.sched2],
        attained_los: [...h.attainedLos],
        margin: h.margin,
      })),
      fractions: { priors: [...state.priors] },
      rates: [...state.rates],
      lookahead: state.lookahead,
      scenario_count: state.scenarioCount,
      seed: state.seed,
    },
    rule: buildRule(state),
  };
}

// Light structural validation against the published schema: require the
// schema's own `required` lists so bad forms fail before the network.
export function validateAgainstSchema(request: RecommendRequest, schema: any): string[] {
  const problems: string[] = [];
  const req = schema?.properties?.state?.required ?? [];
  for (const key of req) {
    if (!(key in request.state)) problems.push(`missing state.${key}`);
  }
  if (!request.rule?.type) problems.push("missing rule.type");
  for (const h of request.state.hospitals) {
    for (const flags of [h.open, h.sched1, h.sched2]) {
      if (flags.length !== h.room_beds.length) {
        problems.push(`${h.id}: room flag arrays must match room count`);
      }
    }
    for (let n = 1; n < h.open.length; n++) {
      if (h.open[n] > h.open[n - 1]) problems.push(`${h.id}: open rooms must form a prefix`);
    }
  }
  return problems;
}

const STORAGE_KEY = "wardplan-ui";

export function persist(state: UiState, lastRequest: unknown, lastResponse: unknown): void {
  try {
    localStorage.setItem(STORAGE_KEY, JSON.stringify({ state, lastRequest, lastResponse }));
  } catch {
    /* storage may be unavailable; the app still works */
  }
}

export function restore(): { state: UiState; lastRequest: unknown; lastResponse: unknown } | null {
  try {
    const raw = localStorage.getItem(STORAGE_KEY);
    return raw ? JSON.parse(raw) : null;
  } catch {
    return null;
  }
}
