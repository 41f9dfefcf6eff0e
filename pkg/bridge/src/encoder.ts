/**
 * Embedding backends. The built-in "hashed" encoder is a deterministic,
 * dependency-free stand-in: signed feature hashing of character n-grams,
 * L2-normalized. Real pretrained encoders plug in behind the same
 * interface; asking for one that is not wired up is a load failure, which
 * the exporter surfaces as a hard error (no silent fallback).
 */

import { fnv1a } from "./hash.js";

export interface Encoder {
  readonly id: string;
  readonly dim: number;
  encode(texts: string[]): number[][];
}

export class EncoderUnavailable extends Error {
  constructor(id: string) {
    super(
      `encoder '${id}' is not available in this build; ` +
        `the built-in deterministic encoder is 'hashed-v1'`,
    );
    this.name = "EncoderUnavailable";
  }
}

const NGRAM_MIN = 3;
const NGRAM_MAX = 5;

export class HashedNgramEncoder implements Encoder {
  readonly id = "hashed-v1";
  readonly dim: number;

  constructor(dim = 64) {
    if (dim < 2) throw new Error(`embedding dim must be >= 2, got ${dim}`);
    this.dim = dim;
  }

  encodeOne(text: string): number[] {
    const vec = new Array<number>(this.dim).fill(0);
    const padded = `${text.toLowerCase()}`;
    for (let n = NGRAM_MIN; n <= NGRAM_MAX; n++) {
      for (let i = 0; i + n <= padded.length; i++) {
        const gram = padded.slice(i, i + n);
        const h = fnv1a(gram);
        const bucket = h % this.dim;
        const sign = (h >>> 16) & 1 ? 1 : -1;
        vec[bucket] += sign;
      }
    }
    const norm = Math.sqrt(vec.reduce((s, v) => s + v * v, 0));
    return norm > 0 ? vec.map((v) => v / norm) : vec.map((_, j) => (j === 0 ? 1 : 0));
  }

  encode(texts: string[]): number[][] {
    return texts.map((t) => this.encodeOne(t));
  }
}

export function loadEncoder(id: string, dim: number): Encoder {
  if (id === "hashed-v1") return new HashedNgramEncoder(dim);
  throw new EncoderUnavailable(id);
}
