// Room-plan timeline view model: one row per room, one cell per lookahead day.

import { RoomPlanJson } from "./types.js";

export type CellState = "open" | "preparing" | "closed";

export interface RoomRow {
  room: number;
  beds: number;
  days: CellState[];
}

export interface HospitalTimeline {
  hospital: number;
  standardCapacity: number;
  rows: RoomRow[];
  capacity: number[];
  opened: number;
  closed: number;
}

export function renderRoomPlan(plan: RoomPlanJson): HospitalTimeline[] {
  return plan.open_rooms.map((rooms, h) => {
    const beds = plan.room_beds[h];
    const horizon = rooms.length ? rooms[0].length : 0;
    const rows: RoomRow[] = rooms.map((open, n) => ({
      room: n + 1,
      beds: beds[n],
      days: open.map((flag, u) => {
        if (flag === 1) return "open";
        if (plan.sched1[h][n][u] === 1 || plan.sched2[h][n][u] === 1) return "preparing";
        return "closed";
      }),
    }));
    const capacity = Array.from({ length: horizon }, (_v, u) =>
      plan.standard_capacity[h] + rooms.reduce((acc, open, n) => acc + open[u] * beds[n], 0),
    );
    return {
      hospital: h,
      standardCapacity: plan.standard_capacity[h],
      rows,
      capacity,
      opened: plan.opened[h],
      closed: plan.closed[h],
    };
  });
}
