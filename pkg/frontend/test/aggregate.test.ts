import { describe, expect, it } from "vitest";
import { aggregate, curves } from "../src/aggregate";
import { MetricsRow, SchemaError } from "../src/schema";

function row(
  seed: number,
  budget: number,
  nll: number,
  f1: number,
  method = "sal",
  acquisition = "entropy"
): MetricsRow {
  return { seed, budget, method, acquisition, nll, f1 };
}

describe("aggregate", () => {
  it("computes mean and sample std per group", () => {
    const out = aggregate([row(0, 0, 1.0, 1.0), row(1, 0, 3.0, 0.0)]);
    expect(out).toHaveLength(1);
    expect(out[0].nllMean).toBe(2.0);
    expect(out[0].nllStd).toBe(Math.sqrt(2.0));
    expect(out[0].f1Mean).toBe(0.5);
    expect(out[0].nSeeds).toBe(2);
  });

  it("gives zero std for a single seed", () => {
    const out = aggregate([row(0, 3, 1.25, 0.8)]);
    expect(out[0].nllStd).toBe(0.0);
    expect(out[0].f1Std).toBe(0.0);
  });

  it("is invariant to row order", () => {
    const rows = [];
    for (const s of [3, 1, 2]) for (const b of [1, 0]) rows.push(row(s, b, s + b, 0.5));
    expect(aggregate(rows)).toEqual(aggregate([...rows].reverse()));
  });

  it("sorts groups by budget within a method", () => {
    const out = aggregate([row(0, 2, 1, 1), row(0, 0, 1, 1), row(0, 1, 1, 1)]);
    expect(out.map((g) => g.budget)).toEqual([0, 1, 2]);
  });

  it("rejects duplicate seeds in a group", () => {
    expect(() => aggregate([row(0, 0, 1, 1), row(0, 0, 2, 1)])).toThrow(SchemaError);
  });

  it("uses left-to-right summation like the harness", () => {
    // values chosen so pairwise and naive summation differ in the last ulp
    const vals = [0.1, 0.2, 0.3, 1e16, -1e16];
    const rows = vals.map((v, i) => row(i, 0, v, 0.5));
    let total = 0.0;
    for (const v of vals) total += v;
    expect(aggregate(rows)[0].nllMean).toBe(total / vals.length);
  });
});

describe("curves", () => {
  it("separates methods into labelled curves with 2-std bands", () => {
    const rows = [
      row(0, 0, 2.0, 0.5, "sal"),
      row(1, 0, 4.0, 0.7, "sal"),
      row(0, 0, 5.0, 0.2, "random"),
      row(1, 0, 7.0, 0.4, "random"),
    ];
    const out = curves(rows, "nll");
    expect(out.map((c) => c.label).sort()).toEqual([
      "random (entropy)",
      "sal (entropy)",
    ]);
    const sal = out.find((c) => c.label.startsWith("sal"))!;
    expect(sal.mean).toEqual([3.0]);
    expect(sal.lo[0]).toBeCloseTo(3.0 - 2 * Math.sqrt(2.0), 12);
    expect(sal.hi[0]).toBeCloseTo(3.0 + 2 * Math.sqrt(2.0), 12);
  });

  it("switches metric columns", () => {
    const rows = [row(0, 0, 2.0, 0.5)];
    expect(curves(rows, "f1")[0].mean).toEqual([0.5]);
    expect(curves(rows, "nll")[0].mean).toEqual([2.0]);
  });
});
