/**
 * Corpus export: raw {"id","text","label","style"} rows in, ingest-schema
 * rows out. Output is written to `<path>.partial` and renamed only after
 * every row succeeded, so a crash never leaves an unflagged partial file.
 */

import * as fs from "node:fs";

import { Encoder, loadEncoder } from "./encoder.js";
import { meanLoglikScore, tokenLogprobs } from "./scorer.js";

export type ScoreMode = "passthrough" | "mean_loglik";

export interface BridgeConfig {
  encoder: string;
  dim: number;
  scoreMode: ScoreMode;
  batchSize: number;
  device: string;
}

export const DEFAULT_CONFIG: BridgeConfig = {
  encoder: "hashed-v1",
  dim: 64,
  scoreMode: "mean_loglik",
  batchSize: 32,
  device: "cpu",
};

export interface RawRow {
  id: string;
  text: string;
  label: 0 | 1;
  style: string;
  score?: number;
}

export interface IngestRow {
  id: string;
  text: string;
  label: 0 | 1;
  style: string;
  embedding: number[];
  token_logprobs: number[];
  score: number;
  score_source: string;
  bridge_token_count: number;
}

export class RowError extends Error {
  constructor(line: number, message: string) {
    super(`row ${line}: ${message}`);
    this.name = "RowError";
  }
}

export function parseRawLine(line: string, lineNo: number): RawRow {
  let record: unknown;
  try {
    record = JSON.parse(line);
  } catch {
    throw new RowError(lineNo, "not valid JSON");
  }
  if (typeof record !== "object" || record === null || Array.isArray(record)) {
    throw new RowError(lineNo, "not a JSON object");
  }
  const row = record as Record<string, unknown>;
  if (typeof row.id !== "string") throw new RowError(lineNo, "missing string 'id'");
  if (typeof row.text !== "string" || row.text.trim() === "") {
    throw new RowError(lineNo, "missing nonempty string 'text'");
  }
  if (row.label !== 0 && row.label !== 1) {
    throw new RowError(lineNo, "'label' must be 0 or 1");
  }
  if (typeof row.style !== "string" || row.style === "") {
    throw new RowError(lineNo, "missing nonempty string 'style'");
  }
  if ("score" in row && typeof row.score !== "number") {
    throw new RowError(lineNo, "'score' must be a number when present");
  }
  return row as unknown as RawRow;
}

/** Round to 9 significant digits so re-exports are byte-identical. */
export function pinFloat(value: number): number {
  return Number.parseFloat(value.toPrecision(9));
}

export function encodeRow(raw: RawRow, encoder: Encoder, mode: ScoreMode, lineNo: number): IngestRow {
  const { tokens, logprobs } = tokenLogprobs(raw.text);
  if (tokens.length === 0) {
    throw new RowError(lineNo, "text has no tokens under the proxy tokenizer");
  }
  if (logprobs.length !== tokens.length) {
    throw new RowError(lineNo, "internal: logprob stream misaligned with tokens");
  }
  let score: number;
  let source: string;
  if (mode === "passthrough") {
    if (raw.score === undefined) {
      throw new RowError(lineNo, "score mode is passthrough but row has no 'score'");
    }
    score = raw.score;
    source = "external";
  } else {
    score = meanLoglikScore(logprobs);
    source = "bridge:mean_loglik";
  }
  return {
    id: raw.id,
    text: raw.text,
    label: raw.label,
    style: raw.style,
    embedding: encoder.encode([raw.text])[0].map(pinFloat),
    token_logprobs: logprobs.map(pinFloat),
    score: pinFloat(score),
    score_source: source,
    bridge_token_count: tokens.length,
  };
}

export interface ExportResult {
  rows: number;
  outputPath: string;
}

export function encodeCorpus(
  inputPath: string,
  outputPath: string,
  config: Partial<BridgeConfig> = {},
): ExportResult {
  const cfg: BridgeConfig = { ...DEFAULT_CONFIG, ...config };
  const encoder = loadEncoder(cfg.encoder, cfg.dim);
  const partial = `${outputPath}.partial`;
  const lines = fs
    .readFileSync(inputPath, "utf-8")
    .split("\n")
    .filter((line) => line.trim() !== "");

  const out = fs.openSync(partial, "w");
  let rows = 0;
  try {
    for (let i = 0; i < lines.length; i++) {
      const raw = parseRawLine(lines[i], i + 1);
      const encoded = encodeRow(raw, encoder, cfg.scoreMode, i + 1);
      fs.writeSync(out, JSON.stringify(encoded) + "\n");
      rows += 1;
    }
    fs.closeSync(out);
  } catch (err) {
    fs.closeSync(out);
    throw err; // the .partial file stays behind, clearly flagged
  }
  fs.renameSync(partial, outputPath);
  return { rows, outputPath };
}
