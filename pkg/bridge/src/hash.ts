/** FNV-1a 32-bit over UTF-16 code units. Deterministic across platforms. */
export function fnv1a(text: string, seed = 0x811c9dc5): number {
  let hash = seed >>> 0;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

/** Hash mapped into [0, 1). */
export function unitHash(text: string, seed?: number): number {
  return fnv1a(text, seed) / 0x100000000;
}
