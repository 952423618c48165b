import { Curve } from "./aggregate";

export const WIDTH = 720;
export const HEIGHT = 480;
export const MARGIN = { left: 70, right: 20, top: 20, bottom: 55 };

export const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

export interface Pt {
  x: number;
  y: number;
}

export interface ChartSeries {
  label: string;
  color: string;
  line: Pt[];
  band: Pt[]; // closed polygon: hi edge left-to-right, lo edge back
  bandWidth: number; // max |hi - lo| in data units, 0 for single-seed input
}

export interface Tick {
  pos: number; // pixel position along the axis
  label: string;
}

export interface ChartModel {
  width: number;
  height: number;
  series: ChartSeries[];
  xTicks: Tick[];
  yTicks: Tick[];
  xLabel: string;
  yLabel: string;
}

function ticksFor(lo: number, hi: number, count: number): number[] {
  if (lo === hi) {
    hi = lo + 1;
    lo = lo - 1;
  }
  const rawStep = (hi - lo) / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (m * mag >= rawStep) {
      step = m * mag;
      break;
    }
  }
  const out: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12; t += step) {
    out.push(Math.abs(t) < 1e-12 ? 0 : t);
  }
  return out;
}

function formatTick(v: number): string {
  if (Number.isInteger(v)) return String(v);
  const s = v.toPrecision(4);
  return String(Number(s));
}

export function buildChart(curveList: Curve[], metric: "nll" | "f1"): ChartModel {
  const xs = curveList.flatMap((c) => c.budgets);
  const ys = curveList.flatMap((c) => [...c.lo, ...c.hi]);
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  let yLo = Math.min(...ys);
  let yHi = Math.max(...ys);
  if (yLo === yHi) {
    yLo -= 1;
    yHi += 1;
  }
  const pad = 0.05 * (yHi - yLo);
  yLo -= pad;
  yHi += pad;

  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const px = (x: number) =>
    MARGIN.left + (xHi === xLo ? plotW / 2 : ((x - xLo) / (xHi - xLo)) * plotW);
  const py = (y: number) => MARGIN.top + ((yHi - y) / (yHi - yLo)) * plotH;

  const series: ChartSeries[] = curveList.map((c, i) => {
    const line = c.budgets.map((b, j) => ({ x: px(b), y: py(c.mean[j]) }));
    const hiEdge = c.budgets.map((b, j) => ({ x: px(b), y: py(c.hi[j]) }));
    const loEdge = c.budgets
      .map((b, j) => ({ x: px(b), y: py(c.lo[j]) }))
      .reverse();
    const bandWidth = Math.max(...c.hi.map((h, j) => h - c.lo[j]));
    return {
      label: c.label,
      color: PALETTE[i % PALETTE.length],
      line,
      band: [...hiEdge, ...loEdge],
      bandWidth,
    };
  });

  const xTicks = ticksFor(xLo, xHi, 8)
    .filter((t) => Number.isInteger(t))
    .map((t) => ({ pos: px(t), label: formatTick(t) }));
  const yTicks = ticksFor(yLo, yHi, 6).map((t) => ({
    pos: py(t),
    label: formatTick(t),
  }));

  return {
    width: WIDTH,
    height: HEIGHT,
    series,
    xTicks,
    yTicks,
    xLabel: "budget",
    yLabel: metric,
  };
}
