import type { Span, Token } from "./types";

/**
 * Snap a raw character selection outward to token boundaries.
 *
 * Any token the selection touches is included whole; whitespace-only
 * selections yield null. The result is guaranteed to be a valid span
 * boundary pair for the server, which rejects unaligned offsets.
 */
export function snapToTokens(
  tokens: Token[],
  selStart: number,
  selEnd: number,
): { start: number; end: number } | null {
  if (selEnd < selStart) [selStart, selEnd] = [selEnd, selStart];
  const touched = tokens.filter(
    (t) =>
      (selStart < t.end && selEnd > t.start) ||
      (selStart === selEnd && selStart >= t.start && selStart < t.end),
  );
  if (touched.length === 0) return null;
  const first = touched[0]!;
  const last = touched[touched.length - 1]!;
  if (selStart === selEnd) return null; // zero-length selections never label
  return { start: first.start, end: last.end };
}

/** Tokens covered by a [start, end) character range, as indices. */
export function tokenIndexRange(
  tokens: Token[],
  start: number,
  end: number,
): [number, number] | null {
  let first = -1;
  let last = -1;
  tokens.forEach((t, i) => {
    if (start < t.end && end > t.start) {
      if (first < 0) first = i;
      last = i;
    }
  });
  return first < 0 ? null : [first, last];
}

export function spansOverlap(a: { start: number; end: number }, b: { start: number; end: number }): boolean {
  return a.start < b.end && b.start < a.end;
}

export function findOverlapping<T extends Span>(spans: T[], candidate: { start: number; end: number }): T | undefined {
  return spans.find((s) => spansOverlap(s, candidate));
}

export function sameSpan(a: Span, b: Span): boolean {
  return a.start === b.start && a.end === b.end && a.label === b.label;
}
