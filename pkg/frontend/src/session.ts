import type { ApiClient } from "./api";
import { ApiError } from "./api";
import { findOverlapping, sameSpan, snapToTokens } from "./selection";
import { addSpan, hotkeyTable, removeSpan } from "./spans";
import type { DocRecord, Project, Span, Token } from "./types";

export type SessionNotice =
  | { kind: "saved"; revision: number }
  | { kind: "conflict"; message: string }
  | { kind: "blocked-overlap"; span: Span }
  | { kind: "noop" }
  | { kind: "error"; message: string };

export interface SessionState {
  record: DocRecord;
  tokens: Token[];
  dismissed: Span[];
  reviewMode: boolean;
  /** token-cursor keyboard selection, inclusive token indices */
  cursor: number;
  anchor: number;
  lastNotice: SessionNotice | null;
}

type Listener = (state: SessionState) => void;

/**
 * All client-side state and transitions for annotating one document.
 *
 * Every mutation goes through the server with the revision the client last
 * saw; a 409 answer refetches the authoritative record and replays nothing,
 * so the displayed revision always equals the server's after each settled
 * operation.
 */
export class DocumentSession {
  private record: DocRecord;
  private tokens: Token[];
  private dismissed: Span[] = [];
  private reviewMode = false;
  private cursor = 0;
  private anchor = 0;
  private lastNotice: SessionNotice | null = null;
  private listeners: Listener[] = [];

  constructor(
    private readonly api: ApiClient,
    readonly project: Project,
    record: DocRecord,
    private readonly editor: string = "annotator",
  ) {
    if (!record.tokens) throw new Error("document record must carry tokens");
    this.record = record;
    this.tokens = record.tokens;
  }

  static async open(
    api: ApiClient,
    project: Project,
    docId: string,
    editor?: string,
  ): Promise<DocumentSession> {
    const record = await api.getDocument(docId);
    return new DocumentSession(api, project, record, editor);
  }

  state(): SessionState {
    return {
      record: this.record,
      tokens: this.tokens,
      dismissed: [...this.dismissed],
      reviewMode: this.reviewMode,
      cursor: this.cursor,
      anchor: this.anchor,
      lastNotice: this.lastNotice,
    };
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(notice: SessionNotice | null): void {
    this.lastNotice = notice;
    const snapshot = this.state();
    for (const listener of this.listeners) listener(snapshot);
  }

  private async adopt(record: DocRecord, notice: SessionNotice): Promise<void> {
    this.record = { ...record, tokens: record.tokens ?? this.tokens };
    this.tokens = this.record.tokens!;
    this.emit(notice);
  }

  private async refetch(message: string): Promise<void> {
    const fresh = await this.api.getDocument(this.record.id);
    await this.adopt(fresh, { kind: "conflict", message });
  }

  private async save(spans: Span[]): Promise<boolean> {
    try {
      const saved = await this.api.saveSpans(this.record.id, {
        spans,
        revision: this.record.revision,
        editor: this.editor,
      });
      await this.adopt(saved, { kind: "saved", revision: saved.revision });
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // stale revision: refetch, never replay the edit silently
        await this.refetch(err.message);
        return false;
      }
      this.emit({ kind: "error", message: err instanceof Error ? err.message : String(err) });
      return false;
    }
  }

  /** Mouse path: a raw character selection plus a pressed hotkey. */
  async selectAndLabel(selStart: number, selEnd: number, key: string): Promise<boolean> {
    const label = hotkeyTable(this.project.labels).get(key.toLowerCase());
    if (!label) return false;
    const snapped = snapToTokens(this.tokens, selStart, selEnd);
    if (!snapped) {
      this.emit({ kind: "noop" });
      return false;
    }
    const overlap = findOverlapping(this.record.spans, snapped);
    if (overlap) {
      // blocked client-side: no network call
      this.emit({ kind: "blocked-overlap", span: overlap });
      return false;
    }
    return this.save(addSpan(this.record.spans, { ...snapped, label }));
  }

  /** Keyboard path: label the current token-cursor selection. */
  async labelSelection(key: string): Promise<boolean> {
    const [first, last] = this.selectedTokenRange();
    const start = this.tokens[first]!.start;
    const end = this.tokens[last]!.end;
    return this.selectAndLabel(start, end, key);
  }

  selectedTokenRange(): [number, number] {
    return [Math.min(this.cursor, this.anchor), Math.max(this.cursor, this.anchor)];
  }

  /** Arrow-key navigation; extend=true (shift held) keeps the anchor. */
  moveCursor(delta: number, extend: boolean): void {
    if (this.tokens.length === 0) return;
    this.cursor = Math.max(0, Math.min(this.tokens.length - 1, this.cursor + delta));
    if (!extend) this.anchor = this.cursor;
    this.emit(null);
  }

  async deleteSpan(span: Span): Promise<boolean> {
    if (!this.record.spans.some((s) => sameSpan(s, span))) return false;
    return this.save(removeSpan(this.record.spans, span));
  }

  /** Promote a suggestion to a confirmed span: the one and only path in. */
  async acceptSuggestion(suggestion: Span): Promise<boolean> {
    if (findOverlapping(this.record.spans, suggestion)) {
      this.emit({ kind: "blocked-overlap", span: suggestion });
      return false;
    }
    return this.save(addSpan(this.record.spans, suggestion));
  }

  /** Dismissal is local: the server's suggestion list is left untouched. */
  rejectSuggestion(suggestion: Span): void {
    this.dismissed.push(suggestion);
    this.emit(null);
  }

  async requestSuggestions(): Promise<void> {
    try {
      const record = await this.api.suggest(this.record.id);
      await this.adopt(record, { kind: "saved", revision: record.revision });
    } catch (err) {
      this.emit({ kind: "error", message: err instanceof Error ? err.message : String(err) });
    }
  }

  setReviewMode(on: boolean): void {
    this.reviewMode = on;
    this.emit(null);
  }

  async finishReview(): Promise<boolean> {
    try {
      const record = await this.api.markReviewed(this.record.id);
      await this.adopt(record, { kind: "saved", revision: record.revision });
      this.reviewMode = false;
      return true;
    } catch (err) {
      this.emit({ kind: "error", message: err instanceof Error ? err.message : String(err) });
      return false;
    }
  }
}

/** Pick the next document to work on: fresh first, then suggested. */
export async function nextDocument(
  api: ApiClient,
  projectId: string,
  excludeId?: string,
): Promise<DocRecord | null> {
  for (const status of ["fresh", "suggested"] as const) {
    const docs = await api.listDocuments(projectId, status);
    const candidate = docs.find((d) => d.id !== excludeId);
    if (candidate) return candidate;
  }
  return null;
}
