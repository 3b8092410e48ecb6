#!/usr/bin/env node
/**
 * convert --root <dir> --split <name> --out <dir> [--dt 0.5] [--history 4]
 *         [--future 6] [--radius 30]
 */

import { parseArgs } from "node:util";

import { AdapterError } from "./tables";
import { convert, formatSummary } from "./convert";

function usage(): string {
  return (
    "usage: predsafe-convert convert --root <dir> --split <name> --out <dir>" +
    " [--dt 0.5] [--history 4] [--future 6] [--radius 30]"
  );
}

function numberFlag(value: string | undefined, fallback: number, name: string): number {
  if (value === undefined) {
    return fallback;
  }
  const parsed = Number(value);
  if (!Number.isFinite(parsed) || parsed <= 0) {
    throw new Error(`--${name} must be a positive number, got ${value}`);
  }
  return parsed;
}

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        root: { type: "string" },
        split: { type: "string" },
        out: { type: "string" },
        dt: { type: "string" },
        history: { type: "string" },
        future: { type: "string" },
        radius: { type: "string" },
      },
    });
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    console.error(usage());
    return 1;
  }
  const { values, positionals } = parsed;
  if (positionals.length !== 1 || positionals[0] !== "convert") {
    console.error(usage());
    return 1;
  }
  if (!values.root || !values.split || !values.out) {
    console.error("usage error: --root, --split and --out are required");
    console.error(usage());
    return 1;
  }
  try {
    const summary = convert({
      root: values.root,
      split: values.split,
      out: values.out,
      dt: numberFlag(values.dt, 0.5, "dt"),
      historyLen: Math.trunc(numberFlag(values.history, 4, "history")),
      futureLen: Math.trunc(numberFlag(values.future, 6, "future")),
      radiusM: numberFlag(values.radius, 30, "radius"),
    });
    console.log(formatSummary(summary));
    return 0;
  } catch (err) {
    if (err instanceof AdapterError) {
      console.error(`error [${err.kind}]: ${err.message}`);
      return 2;
    }
    if (err instanceof Error && err.message.startsWith("--")) {
      console.error(`usage error: ${err.message}`);
      return 1;
    }
    console.error(`internal error: ${err}`);
    return 3;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
