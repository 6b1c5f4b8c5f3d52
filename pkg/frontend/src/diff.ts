// What-if support: structural diff between two recommend responses.

import { RecommendResponse } from "./types.js";
import { renderRoomPlan, CellState } from "./timeline.js";

export interface PlanDiff {
  hospital: number;
  room: number;
  day: number;
  from: CellState;
  to: CellState;
}

export interface AssignmentDiff {
  arrival: number;
  from: number | null;
  to: number | null;
}

export interface ResponseDiff {
  cells: PlanDiff[];
  assignments: AssignmentDiff[];
}

export function diffResponses(a: RecommendResponse, b: RecommendResponse): ResponseDiff {
  const cells: PlanDiff[] = [];
  const ta = renderRoomPlan(a.decision.room_plan);
  const tb = renderRoomPlan(b.decision.room_plan);
  ta.forEach((hosp, h) => {
    hosp.rows.forEach((row, n) => {
      row.days.forEach((state, u) => {
        const other = tb[h]?.rows[n]?.days[u];
        if (other !== undefined && other !== state) {
          cells.push({ hospital: h, room: n + 1, day: u, from: state, to: other });
        }
      });
    });
  });
  const assignments: AssignmentDiff[] = [];
  const da = a.decision.assignment.destinations;
  const db = b.decision.assignment.destinations;
  const len = Math.max(da.length, db.length);
  for (let j = 0; j < len; j++) {
    const from = j < da.length ? da[j] : null;
    const to = j < db.length ? db[j] : null;
    if (from !== to) assignments.push({ arrival: j + 1, from, to });
  }
  return { cells, assignments };
}

export function isEmptyDiff(diff: ResponseDiff): boolean {
  return diff.cells.length === 0 && diff.assignments.length === 0;
}
