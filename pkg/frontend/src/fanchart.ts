// Occupancy fan (p10-p90 band, median line) against the capacity step line,
// emitted as SVG path data so rendering stays a pure computation.

export interface FanGeometry {
  band: string;
  median: string;
  capacity: string;
  yMax: number;
}

function scaler(yMax: number, width: number, height: number, days: number) {
  const pad = 4;
  const sx = (u: number) => pad + (u / Math.max(days - 1, 1)) * (width - 2 * pad);
  const sy = (v: number) => height - pad - (v / yMax) * (height - 2 * pad);
  return { sx, sy };
}

export function fanGeometry(
  p10: number[],
  p50: number[],
  p90: number[],
  capacity: number[],
  width = 320,
  height = 120,
): FanGeometry {
  const days = p50.length;
  const yMax = Math.max(1, ...p90, ...capacity) * 1.15;
  const { sx, sy } = scaler(yMax, width, height, days);
  const upper = p90.map((v, u) => `${u ? "L" : "M"}${sx(u).toFixed(1)},${sy(v).toFixed(1)}`);
  const lower = [...p10.keys()]
    .reverse()
    .map((u) => `L${sx(u).toFixed(1)},${sy(p10[u]).toFixed(1)}`);
  const band = `${upper.join("")}${lower.join("")}Z`;
  const median = p50
    .map((v, u) => `${u ? "L" : "M"}${sx(u).toFixed(1)},${sy(v).toFixed(1)}`)
    .join("");
  // capacity as a step line: the level committed for day u holds across it
  const parts: string[] = [];
  capacity.slice(0, days).forEach((v, u) => {
    const x0 = sx(Math.max(u - 0.5, 0));
    const x1 = sx(Math.min(u + 0.5, days - 1));
    parts.push(`${u ? "L" : "M"}${x0.toFixed(1)},${sy(v).toFixed(1)}L${x1.toFixed(1)},${sy(v).toFixed(1)}`);
  });
  return { band, median, capacity: parts.join(""), yMax };
}
