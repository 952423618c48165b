#!/usr/bin/env node
import fs from "fs";
import path from "path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { curves } from "./aggregate";
import { buildChart } from "./chart";
import { renderPng } from "./png";
import { loadMetricsCsv, MetricsRow, SchemaError } from "./schema";
import { renderSvg } from "./svg";

export function render(metric: "nll" | "f1", inputs: string[], out: string): void {
  const rows: MetricsRow[] = [];
  for (const input of inputs) rows.push(...loadMetricsCsv(input));
  const chart = buildChart(curves(rows, metric), metric);
  if (path.extname(out).toLowerCase() === ".svg") {
    fs.writeFileSync(out, renderSvg(chart));
  } else {
    fs.writeFileSync(out, renderPng(chart));
  }
}

export async function main(argv: string[]): Promise<number> {
  const parser = yargs(argv)
    .strict()
    .exitProcess(false)
    .options({
      metric: {
        type: "string",
        choices: ["nll", "f1"] as const,
        demandOption: true,
        description: "which metric column to plot against budget",
      },
      inputs: {
        type: "string",
        array: true,
        demandOption: true,
        description: "harness metrics CSV files (one or more)",
      },
      out: {
        type: "string",
        demandOption: true,
        description: "output image path (.png or .svg)",
      },
    });
  let args;
  try {
    args = await parser.parse();
  } catch (e) {
    console.error(e instanceof Error ? e.message : String(e));
    return 2;
  }
  if (args.inputs.length === 0) {
    console.error("need at least one input CSV");
    return 2;
  }
  try {
    render(args.metric as "nll" | "f1", args.inputs, args.out);
  } catch (e) {
    if (e instanceof SchemaError) {
      console.error(`schema error: ${e.message}`);
      return 2;
    }
    throw e;
  }
  console.log(`wrote ${args.out}`);
  return 0;
}

if (require.main === module) {
  main(hideBin(process.argv)).then(
    (code) => process.exit(code),
    (e) => {
      console.error(e);
      process.exit(1);
    }
  );
}
