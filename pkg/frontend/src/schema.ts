import fs from "fs";
import Papa from "papaparse";

// must stay bit-exact with the harness CSV writer
export const METRICS_HEADER = [
  "seed",
  "budget",
  "method",
  "acquisition",
  "nll",
  "f1",
  "theta_0",
  "theta_1",
  "xi_est",
  "truly_safe",
  "seconds",
];

export class SchemaError extends Error {}

export interface MetricsRow {
  seed: number;
  budget: number;
  method: string;
  acquisition: string;
  nll: number;
  f1: number;
}

export function parseMetricsCsv(text: string, source: string): MetricsRow[] {
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new SchemaError(`${source}: ${parsed.errors[0].message}`);
  }
  const rows = parsed.data;
  if (rows.length === 0) {
    throw new SchemaError(`${source}: empty CSV`);
  }
  const header = rows[0];
  for (const col of METRICS_HEADER) {
    if (!header.includes(col)) {
      throw new SchemaError(`${source}: missing column '${col}'`);
    }
  }
  const idx = (col: string) => header.indexOf(col);
  const out: MetricsRow[] = [];
  for (const row of rows.slice(1)) {
    if (row.length !== header.length) {
      throw new SchemaError(`${source}: row has ${row.length} fields, want ${header.length}`);
    }
    const num = (col: string): number => {
      const v = Number(row[idx(col)]);
      if (!Number.isFinite(v)) {
        throw new SchemaError(`${source}: non-numeric '${col}' value '${row[idx(col)]}'`);
      }
      return v;
    };
    out.push({
      seed: num("seed"),
      budget: num("budget"),
      method: row[idx("method")],
      acquisition: row[idx("acquisition")],
      nll: num("nll"),
      f1: num("f1"),
    });
  }
  if (out.length === 0) {
    throw new SchemaError(`${source}: no data rows`);
  }
  return out;
}

export function loadMetricsCsv(path: string): MetricsRow[] {
  return parseMetricsCsv(fs.readFileSync(path, "utf8"), path);
}
