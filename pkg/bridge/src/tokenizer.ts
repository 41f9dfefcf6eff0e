/**
 * The proxy model's tokenizer. Deliberately NOT whitespace splitting: the
 * consumer recomputes count-based features with its own tokenizer and uses
 * this stream only for log-probability moments, so the two token counts are
 * allowed to differ.
 */

const PIECE = 4; // max characters per subword piece

export function proxyTokenize(text: string): string[] {
  const words = text.toLowerCase().match(/[\p{L}\p{N}]+|[^\s\p{L}\p{N}]/gu) ?? [];
  const pieces: string[] = [];
  for (const word of words) {
    if (word.length <= PIECE) {
      pieces.push(word);
      continue;
    }
    for (let i = 0; i < word.length; i += PIECE) {
      const piece = word.slice(i, i + PIECE);
      pieces.push(i === 0 ? piece : `##${piece}`);
    }
  }
  return pieces;
}
