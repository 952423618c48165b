import { execFileSync } from "child_process";
import fs from "fs";
import os from "os";
import path from "path";
import { beforeAll, describe, expect, it } from "vitest";
import { aggregate } from "../src/aggregate";
import { curves } from "../src/aggregate";
import { buildChart } from "../src/chart";
import { main } from "../src/cli";
import { renderPng } from "../src/png";
import { loadMetricsCsv, METRICS_HEADER } from "../src/schema";
import { renderSvg } from "../src/svg";

const HEADER = METRICS_HEADER.join(",");

function fixtureCsv(methods: string[], seeds: number[], budgets: number[]): string {
  const lines = [HEADER];
  for (const m of methods) {
    for (const s of seeds) {
      for (const b of budgets) {
        // deterministic synthetic learning curves
        const nll = (m === "sal" ? 10 : 14) - 1.5 * b + 0.3 * s;
        const f1 = Math.min(1, 0.3 + (m === "sal" ? 0.1 : 0.06) * b + 0.01 * s);
        lines.push(`${s},${b},${m},entropy,${nll},${f1},0.1,0.2,0.95,True,1.0`);
      }
    }
  }
  return lines.join("\n") + "\n";
}

let tmp: string;

beforeAll(() => {
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), "plots-"));
});

describe("svg rendering", () => {
  it("draws one line and one band per method with a legend", () => {
    const rows = [
      ...fixtureCsv(["sal", "random"], [0, 1], [0, 1, 2]).split("\n"),
    ];
    const p = path.join(tmp, "two.csv");
    fs.writeFileSync(p, rows.join("\n"));
    const svg = renderSvg(buildChart(curves(loadMetricsCsv(p), "nll"), "nll"));
    expect(svg.match(/class="mean"/g)).toHaveLength(2);
    expect(svg.match(/class="band"/g)).toHaveLength(2);
    expect(svg.match(/class="legend"/g)).toHaveLength(2);
    expect(svg).toContain("sal (entropy)");
    expect(svg).toContain("random (entropy)");
  });

  it("omits the band for single-seed input", () => {
    const p = path.join(tmp, "one.csv");
    fs.writeFileSync(p, fixtureCsv(["sal"], [0], [0, 1, 2]));
    const svg = renderSvg(buildChart(curves(loadMetricsCsv(p), "nll"), "nll"));
    expect(svg.match(/class="mean"/g)).toHaveLength(1);
    expect(svg).not.toContain('class="band"');
  });

  it("is deterministic", () => {
    const p = path.join(tmp, "det.csv");
    fs.writeFileSync(p, fixtureCsv(["sal"], [0, 1, 2], [0, 1]));
    const make = () =>
      renderSvg(buildChart(curves(loadMetricsCsv(p), "f1"), "f1"));
    expect(make()).toBe(make());
  });

  it("plots exactly the aggregate means", () => {
    const p = path.join(tmp, "agg.csv");
    fs.writeFileSync(p, fixtureCsv(["sal", "random"], [0, 1, 2], [0, 1, 2, 3]));
    const rows = loadMetricsCsv(p);
    const summary = aggregate(rows);
    for (const curve of curves(rows, "nll")) {
      for (let j = 0; j < curve.budgets.length; j++) {
        const g = summary.find(
          (g) =>
            `${g.method} (${g.acquisition})` === curve.label &&
            g.budget === curve.budgets[j]
        )!;
        expect(curve.mean[j]).toBe(g.nllMean); // bitwise, not approximate
        expect(curve.lo[j]).toBe(g.nllMean - 2 * g.nllStd);
      }
    }
  });
});

describe("png rendering", () => {
  it("emits a valid PNG signature and is deterministic", () => {
    const p = path.join(tmp, "png.csv");
    fs.writeFileSync(p, fixtureCsv(["sal", "random"], [0, 1], [0, 1, 2]));
    const chart = buildChart(curves(loadMetricsCsv(p), "nll"), "nll");
    const a = renderPng(chart);
    const b = renderPng(chart);
    expect([...a.subarray(0, 8)]).toEqual([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
    expect(a.equals(b)).toBe(true);
  });
});

describe("cli", () => {
  it("smoke: writes both formats quickly", async () => {
    const start = Date.now();
    const p = path.join(tmp, "smoke.csv");
    fs.writeFileSync(p, fixtureCsv(["sal", "random"], [0, 1, 2], [0, 1, 2, 3]));
    const png = path.join(tmp, "fig.png");
    const svg = path.join(tmp, "fig.svg");
    expect(await main(["--metric", "nll", "--inputs", p, "--out", png])).toBe(0);
    expect(await main(["--metric", "f1", "--inputs", p, "--out", svg])).toBe(0);
    expect(fs.statSync(png).size).toBeGreaterThan(1000);
    expect(fs.readFileSync(svg, "utf8")).toContain("<svg");
    expect(Date.now() - start).toBeLessThan(10_000);
  });

  it("merges multiple input files", async () => {
    const a = path.join(tmp, "a.csv");
    const b = path.join(tmp, "b.csv");
    fs.writeFileSync(a, fixtureCsv(["sal"], [0, 1], [0, 1]));
    fs.writeFileSync(b, fixtureCsv(["random"], [0, 1], [0, 1]));
    const out = path.join(tmp, "merged.svg");
    expect(
      await main(["--metric", "nll", "--inputs", a, b, "--out", out])
    ).toBe(0);
    const svg = fs.readFileSync(out, "utf8");
    expect(svg).toContain("sal (entropy)");
    expect(svg).toContain("random (entropy)");
  });

  it("exits nonzero on an empty CSV", async () => {
    const p = path.join(tmp, "empty.csv");
    fs.writeFileSync(p, "");
    const code = await main([
      "--metric", "nll", "--inputs", p, "--out", path.join(tmp, "x.svg"),
    ]);
    expect(code).toBe(2);
  });

  it("exits nonzero on a missing column", async () => {
    const p = path.join(tmp, "badcol.csv");
    fs.writeFileSync(p, "seed,budget\n0,0\n");
    const code = await main([
      "--metric", "nll", "--inputs", p, "--out", path.join(tmp, "x.svg"),
    ]);
    expect(code).toBe(2);
  });

  it("rejects an unknown metric", async () => {
    const code = await main([
      "--metric", "rmse", "--inputs", "whatever.csv", "--out", "x.svg",
    ]);
    expect(code).toBe(2);
  });

  it("runs as a compiled executable", () => {
    const dist = path.join(__dirname, "..", "dist", "cli.js");
    if (!fs.existsSync(dist)) return; // covered by the API tests above
    const p = path.join(tmp, "exe.csv");
    fs.writeFileSync(p, fixtureCsv(["sal"], [0], [0, 1]));
    const out = path.join(tmp, "exe.png");
    execFileSync("node", [dist, "--metric", "nll", "--inputs", p, "--out", out]);
    expect(fs.existsSync(out)).toBe(true);
  });
});
