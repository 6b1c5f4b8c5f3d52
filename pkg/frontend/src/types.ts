// Wire types mirroring the wardplan service's JSON API.

export interface HospitalForm {
  id: string;
  standardCapacity: number;
  roomBeds: number[];
  open: number[];
  sched1: number[];
  sched2: number[];
  attainedLos: number[];
  margin: number;
}

export interface Weights {
  alpha: number;
  beta: number;
  gamma: number;
  delta: number;
  epsilon: number;
}

export type RuleKind = "SP" | "SP_DET" | "IH" | "PU";

export interface UiState {
  hospitals: HospitalForm[];
  priors: number[];
  rates: number[];
  lookahead: number;
  scenarioCount: number;
  seed: number;
  rule: RuleKind;
  weights: Weights;
  statistic: number | "median";
  quantile: number;
  designated: number;
  split: number[];
}

export interface RuleBlock {
  type: RuleKind;
  weights?: Weights;
  statistic?: number | "median";
  quantile?: number;
  designated?: number;
  split?: number[];
}

export interface RecommendRequest {
  state: {
    day: number;
    hospitals: Array<{
      id: string;
      standard_capacity: number;
      room_beds: number[];
      open: number[];
      sched1: number[];
      sched2: number[];
      attained_los: number[];
      margin: number;
    }>;
    fractions: { priors: number[] };
    rates: number[];
    lookahead: number;
    scenario_count: number;
    seed: number;
  };
  rule: RuleBlock;
}

export interface RoomPlanJson {
  open_rooms: number[][][];
  sched1: number[][][];
  sched2: number[][][];
  opened: number[];
  closed: number[];
  standard_capacity: number[];
  room_beds: number[][];
}

export interface RecommendResponse {
  decision: {
    room_plan: RoomPlanJson;
    assignment: { destinations: number[] };
    forecast_costs: number[] | null;
    approximate: boolean;
  };
  capacity_schedule: number[][];
  fan: { hospitals: string[]; p10: number[][]; p50: number[][]; p90: number[][] };
  pmf: { rate: number; truncation: number };
  seed: number;
}

export const PRESETS: Record<string, Weights> = {
  "SP-O": { alpha: 15, beta: 15, gamma: 1, delta: 1.5, epsilon: 40 },
  "SP-B": { alpha: 6, beta: 6, gamma: 1, delta: 1, epsilon: 13 },
  "SP-R": { alpha: 60, beta: 60, gamma: 1, delta: 1.25, epsilon: 25 },
};
