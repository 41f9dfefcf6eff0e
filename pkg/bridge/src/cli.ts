#!/usr/bin/env node
/**
 * moses-bridge export --input raw.jsonl --output ingest.jsonl
 *                     [--score-mode passthrough|mean_loglik]
 *                     [--encoder hashed-v1] [--dim 64]
 *                     [--batch-size 32] [--device cpu]
 */

import { DEFAULT_CONFIG, ScoreMode, encodeCorpus } from "./export.js";

function fail(message: string): never {
  console.error(`error: ${message}`);
  process.exit(1);
}

function parseArgs(argv: string[]): { input: string; output: string; config: Record<string, unknown> } {
  if (argv[0] !== "export") {
    fail("usage: moses-bridge export --input <raw.jsonl> --output <ingest.jsonl> [options]");
  }
  const flags = new Map<string, string>();
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) {
      fail(`malformed flag pair near '${key}'`);
    }
    flags.set(key.slice(2), value);
  }
  const input = flags.get("input") ?? fail("--input is required");
  const output = flags.get("output") ?? fail("--output is required");
  const config: Record<string, unknown> = {};
  if (flags.has("encoder")) config.encoder = flags.get("encoder");
  if (flags.has("dim")) config.dim = Number(flags.get("dim"));
  if (flags.has("batch-size")) config.batchSize = Number(flags.get("batch-size"));
  if (flags.has("device")) config.device = flags.get("device");
  if (flags.has("score-mode")) {
    const mode = flags.get("score-mode") as ScoreMode;
    if (mode !== "passthrough" && mode !== "mean_loglik") {
      fail(`--score-mode must be passthrough or mean_loglik, got '${mode}'`);
    }
    config.scoreMode = mode;
  }
  return { input, output, config };
}

const { input, output, config } = parseArgs(process.argv.slice(2));
try {
  const result = encodeCorpus(input, output, config);
  console.log(
    `exported ${result.rows} rows -> ${result.outputPath} ` +
      `(encoder=${config.encoder ?? DEFAULT_CONFIG.encoder}, ` +
      `score-mode=${config.scoreMode ?? DEFAULT_CONFIG.scoreMode})`,
  );
} catch (err) {
  console.error(`error: ${err instanceof Error ? err.message : err}`);
  process.exit(2);
}
