import { sameSpan } from "./selection";
import type { LabelDef, Span, UiSpan } from "./types";

export function colorTable(labels: LabelDef[]): Map<string, string> {
  return new Map(labels.map((l) => [l.label, l.color]));
}

export function hotkeyTable(labels: LabelDef[]): Map<string, string> {
  return new Map(labels.map((l) => [l.hotkey.toLowerCase(), l.label]));
}

/**
 * Merge confirmed spans and live suggestions into renderable spans.
 *
 * Suggestions that exactly match a confirmed span (i.e. already accepted) or
 * that were dismissed this session are hidden; suggestion styling stays
 * distinct from confirmed styling via the `kind` tag.
 */
export function toUiSpans(
  confirmed: Span[],
  suggestions: Span[],
  dismissed: Span[],
  colors: Map<string, string>,
): UiSpan[] {
  const out: UiSpan[] = confirmed.map((s) => ({
    ...s,
    kind: "confirmed",
    color: colors.get(s.label) ?? "#cccccc",
  }));
  for (const s of suggestions) {
    if (confirmed.some((c) => sameSpan(c, s))) continue;
    if (dismissed.some((d) => sameSpan(d, s))) continue;
    out.push({ ...s, kind: "suggestion", color: colors.get(s.label) ?? "#cccccc" });
  }
  return out.sort((a, b) => a.start - b.start || a.end - b.end);
}

export function addSpan(spans: Span[], span: Span): Span[] {
  return [...spans, span].sort((a, b) => a.start - b.start || a.end - b.end);
}

export function removeSpan(spans: Span[], span: Span): Span[] {
  return spans.filter((s) => !sameSpan(s, span));
}
