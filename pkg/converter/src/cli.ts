#!/usr/bin/env node
/**
 * rml-convert: one shot converter from a pickled RML2016 archive to AMCD v1.
 *
 * Usage: rml-convert INPUT OUTPUT [--limit-per-key N]
 *
 * Exit codes: 0 success, 1 unreadable or malformed archive, 2 usage error.
 */

import * as fs from "node:fs";
import * as process from "node:process";
import { pathToFileURL } from "node:url";
import { loads, PickleError } from "./pickle.js";
import { parseArchive, planConversion, ArchiveError } from "./rml.js";
import { encodeAmcd } from "./amcd.js";

const USAGE = "usage: rml-convert INPUT OUTPUT [--limit-per-key N]";

export interface CliArgs {
  input: string;
  output: string;
  limitPerKey?: number;
}

class UsageError extends Error {}

export function parseArgs(argv: string[]): CliArgs | "help" {
  const positionals: string[] = [];
  let limitPerKey: number | undefined;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "-h" || arg === "--help") {
      return "help";
    }
    if (arg === "--limit-per-key" || arg.startsWith("--limit-per-key=")) {
      const raw = arg.includes("=") ? arg.split("=", 2)[1] : argv[++i];
      if (raw === undefined) {
        throw new UsageError("--limit-per-key needs a value");
      }
      const value = Number(raw);
      if (!Number.isInteger(value) || value < 1) {
        throw new UsageError(`--limit-per-key must be a positive integer, got ${raw}`);
      }
      limitPerKey = value;
      continue;
    }
    if (arg.startsWith("-") && arg !== "-") {
      throw new UsageError(`unknown option ${arg}`);
    }
    positionals.push(arg);
  }
  if (positionals.length !== 2) {
    throw new UsageError(`expected INPUT and OUTPUT, got ${positionals.length} arguments`);
  }
  return { input: positionals[0], output: positionals[1], limitPerKey };
}

type Writer = (line: string) => void;

export function runConvert(args: CliArgs, out: Writer): void {
  const raw = fs.readFileSync(args.input);
  const archive = parseArchive(loads(raw));
  const plan = planConversion(archive, args.limitPerKey);
  fs.writeFileSync(args.output, encodeAmcd(plan));

  const labelName = new Map(plan.classNames.map((name, label) => [label, name]));
  for (const slice of plan.slices) {
    out(`  ${labelName.get(slice.label)} @ ${slice.snr} dB: ${slice.count}`);
  }
  out(
    `wrote ${plan.totalExamples} examples ` +
    `(${plan.classNames.length} classes x ${plan.distinctSnrs} snrs) to ${args.output}`,
  );
}

/** Entry point shared by the binary and the tests. Returns the exit code. */
export function main(argv: string[], out: Writer = console.log, err: Writer = console.error): number {
  let args: CliArgs | "help";
  try {
    args = parseArgs(argv);
  } catch (error) {
    err(`error: ${(error as Error).message}`);
    err(USAGE);
    return 2;
  }
  if (args === "help") {
    out(USAGE);
    out("");
    out("Reads a pickled dict keyed by (modulation, snr) pairs holding");
    out("float32 arrays of shape (N, 2, 128) and writes AMCD v1 with the");
    out("class table in canonical order. --limit-per-key caps the examples");
    out("taken from each (modulation, snr) cell.");
    return 0;
  }
  try {
    runConvert(args, out);
    return 0;
  } catch (error) {
    if (
      error instanceof ArchiveError ||
      error instanceof PickleError ||
      (error as NodeJS.ErrnoException).code !== undefined
    ) {
      err(`error: ${(error as Error).message}`);
      return 1;
    }
    throw error;
  }
}

// Run only when executed as a script, also through a bin symlink.
const invokedDirectly = (() => {
  if (process.argv[1] === undefined) return false;
  try {
    return import.meta.url === pathToFileURL(fs.realpathSync(process.argv[1])).href;
  } catch {
    return false;
  }
})();

if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
