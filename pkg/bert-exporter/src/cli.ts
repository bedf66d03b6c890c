#!/usr/bin/env node
/** Command-line entry: `bert-exporter export --model M --input F --output F`. */

import { readFileSync, writeFileSync } from "node:fs";
import { exportEmbeddings, InputError } from "./exporter.js";
import { ModelLoadError } from "./model.js";
import { FormatError } from "./format.js";

const USAGE = `usage: bert-exporter export --model <name> --input <tsv> --output <path> [--layer <last|N>]

Encodes each id<TAB>text line of the input with a deterministic seeded
encoder and writes all per-token embeddings to a single binary file.`;

function fail(code: number, message: string): never {
  process.stderr.write(message + "\n");
  process.exit(code);
}

interface Parsed {
  model: string;
  input: string;
  output: string;
  layer: string;
}

function parseArgs(argv: string[]): Parsed {
  if (argv.length === 0 || argv[0] === "--help" || argv[0] === "-h") {
    fail(argv.length === 0 ? 1 : 0, USAGE);
  }
  if (argv[0] !== "export") {
    fail(1, `unknown command '${argv[0]}'\n${USAGE}`);
  }
  const values: Record<string, string> = { layer: "last" };
  for (let i = 1; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith("--")) fail(1, `unexpected argument '${flag}'\n${USAGE}`);
    const key = flag.slice(2);
    if (!["model", "input", "output", "layer"].includes(key)) {
      fail(1, `unknown flag '${flag}'\n${USAGE}`);
    }
    if (i + 1 >= argv.length) fail(1, `flag '${flag}' needs a value\n${USAGE}`);
    values[key] = argv[i + 1];
  }
  for (const required of ["model", "input", "output"]) {
    if (!(required in values)) fail(1, `missing --${required}\n${USAGE}`);
  }
  return values as unknown as Parsed;
}

export function main(argv: string[]): void {
  const args = parseArgs(argv);
  let content: string;
  try {
    content = readFileSync(args.input, "utf-8");
  } catch (err) {
    fail(2, `cannot read ${args.input}: ${(err as Error).message}`);
  }
  try {
    const result = exportEmbeddings(content, { model: args.model, layer: args.layer });
    writeFileSync(args.output, result.bytes);
    process.stdout.write(
      `wrote ${result.records} record(s), dim ${result.dim}, ` +
      `${result.bytes.length} bytes -> ${args.output}\n`,
    );
  } catch (err) {
    if (err instanceof InputError || err instanceof ModelLoadError ||
        err instanceof FormatError) {
      fail(2, err.message);
    }
    throw err;
  }
}

main(process.argv.slice(2));
