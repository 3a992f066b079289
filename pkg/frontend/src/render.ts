import type { DocumentSession, SessionState } from "./session";
import { spansOverlap } from "./selection";
import { colorTable, toUiSpans } from "./spans";
import type { Token, UiSpan } from "./types";

/**
 * DOM view for one document session.
 *
 * Confirmed spans render as solid highlights with a cross-mark for deletion;
 * suggestions render as dashed underlines with accept/reject affordances and
 * never visually overlap a confirmed highlight (conflicting ones are
 * suppressed until the conflict is resolved). Colors come from the project's
 * label table and nowhere else.
 */
export class AnnotationView {
  private reviewChecked = new Set<string>();

  constructor(
    private readonly root: HTMLElement,
    private readonly session: DocumentSession,
    private readonly doc: Document = root.ownerDocument,
  ) {
    session.subscribe(() => this.render());
    this.root.addEventListener("mouseup", () => this.captureMouseSelection());
    this.root.addEventListener("keydown", (ev) => this.onKeyDown(ev as KeyboardEvent));
    this.render();
  }

  render(): void {
    const state = this.session.state();
    this.root.replaceChildren(
      this.header(state),
      this.textPane(state),
      this.suggestionPane(state),
      this.footer(state),
    );
  }

  private el(tag: string, className?: string, text?: string): HTMLElement {
    const node = this.doc.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
  }

  private header(state: SessionState): HTMLElement {
    const bar = this.el("header", "doc-header");
    bar.appendChild(this.el("span", "doc-name", state.record.name || state.record.id));
    bar.appendChild(this.el("span", `status status-${state.record.status}`, state.record.status));
    bar.appendChild(this.el("span", "revision", `rev ${state.record.revision}`));
    const legend = this.el("span", "legend");
    for (const def of this.session.project.labels) {
      const chip = this.el("span", "legend-chip", `${def.label} [${def.hotkey}]`);
      chip.style.background = def.color;
      legend.appendChild(chip);
    }
    bar.appendChild(legend);
    if (state.lastNotice?.kind === "conflict") {
      bar.appendChild(this.el("span", "notice conflict",
        "someone else saved first; reloaded the latest revision"));
    } else if (state.lastNotice?.kind === "blocked-overlap") {
      bar.appendChild(this.el("span", "notice blocked", "overlaps an existing span"));
    } else if (state.lastNotice?.kind === "error") {
      bar.appendChild(this.el("span", "notice error", state.lastNotice.message));
    }
    return bar;
  }

  /** Spans rendered inline; at most one per token, confirmed wins. */
  private renderableSpans(state: SessionState): UiSpan[] {
    const colors = colorTable(this.session.project.labels);
    const all = toUiSpans(state.record.spans, state.record.suggestions, state.dismissed, colors);
    const confirmed = all.filter((s) => s.kind === "confirmed");
    return all.filter(
      (s) => s.kind === "confirmed" || !confirmed.some((c) => spansOverlap(c, s)),
    );
  }

  private textPane(state: SessionState): HTMLElement {
    const pane = this.el("section", "doc-text");
    pane.tabIndex = 0;
    const text = state.record.text;
    const spans = this.renderableSpans(state);
    const [selFirst, selLast] = this.session.selectedTokenRange();

    const coveringSpan = (token: Token): UiSpan | undefined =>
      spans.find((s) => token.start >= s.start && token.end <= s.end);

    let i = 0;
    let pos = 0;
    const tokens = state.tokens;
    while (i < tokens.length) {
      const token = tokens[i]!;
      if (pos < token.start) {
        pane.appendChild(this.doc.createTextNode(text.slice(pos, token.start)));
      }
      const span = coveringSpan(token);
      if (!span) {
        pane.appendChild(this.tokenEl(token, i, i >= selFirst && i <= selLast));
        pos = token.end;
        i += 1;
        continue;
      }
      // group every token inside this span into one mark
      const mark = this.el("mark", `span ${span.kind}`);
      mark.dataset.start = String(span.start);
      mark.dataset.end = String(span.end);
      mark.dataset.label = span.label;
      if (span.kind === "confirmed") {
        mark.style.background = span.color;
      } else {
        mark.style.textDecorationColor = span.color;
      }
      let cursor = Math.max(pos, span.start);
      while (i < tokens.length && tokens[i]!.end <= span.end) {
        const inner = tokens[i]!;
        if (cursor < inner.start) {
          mark.appendChild(this.doc.createTextNode(text.slice(cursor, inner.start)));
        }
        mark.appendChild(this.tokenEl(inner, i, i >= selFirst && i <= selLast));
        cursor = inner.end;
        i += 1;
      }
      mark.appendChild(this.el("span", "tag", span.label));
      if (!state.reviewMode && span.kind === "confirmed") {
        const cross = this.el("button", "cross", "×");
        cross.title = "delete span";
        cross.addEventListener("click", () => void this.session.deleteSpan(span));
        mark.appendChild(cross);
      }
      if (state.reviewMode) {
        const check = this.doc.createElement("input");
        check.type = "checkbox";
        check.className = "review-check";
        const key = `${span.start}:${span.end}:${span.label}`;
        check.checked = this.reviewChecked.has(key);
        check.addEventListener("change", () => {
          if (check.checked) this.reviewChecked.add(key);
          else this.reviewChecked.delete(key);
        });
        mark.appendChild(check);
      }
      pane.appendChild(mark);
      pos = cursor;
    }
    if (pos < text.length) {
      pane.appendChild(this.doc.createTextNode(text.slice(pos)));
    }
    return pane;
  }

  private tokenEl(token: Token, index: number, selected: boolean): HTMLElement {
    const el = this.el("span", selected ? "tok selected" : "tok", token.text);
    el.dataset.i = String(index);
    el.dataset.start = String(token.start);
    el.dataset.end = String(token.end);
    return el;
  }

  private suggestionPane(state: SessionState): HTMLElement {
    const pane = this.el("section", "suggestions");
    const colors = colorTable(this.session.project.labels);
    const pending = toUiSpans([], state.record.suggestions, state.dismissed, colors).filter(
      (s) => !state.record.spans.some((c) => c.start === s.start && c.end === s.end && c.label === s.label),
    );
    if (pending.length === 0) return pane;
    pane.appendChild(this.el("h3", undefined, "suggestions"));
    for (const suggestion of pending) {
      const row = this.el("div", "suggestion-row");
      const textSlice = state.record.text.slice(suggestion.start, suggestion.end);
      row.appendChild(this.el("span", "snippet", `${textSlice} → ${suggestion.label}`));
      if (!state.reviewMode) {
        const accept = this.el("button", "accept", "accept");
        accept.addEventListener("click", () => void this.session.acceptSuggestion(suggestion));
        const reject = this.el("button", "reject", "reject");
        reject.addEventListener("click", () => this.session.rejectSuggestion(suggestion));
        row.append(accept, reject);
      }
      pane.appendChild(row);
    }
    return pane;
  }

  private footer(state: SessionState): HTMLElement {
    const bar = this.el("footer", "doc-footer");
    const review = this.el("button", "review-toggle",
      state.reviewMode ? "exit review" : "review");
    review.addEventListener("click", () => this.session.setReviewMode(!state.reviewMode));
    bar.appendChild(review);
    if (state.reviewMode) {
      const done = this.el("button", "finish-review", "finish review");
      done.addEventListener("click", () => void this.session.finishReview());
      bar.appendChild(done);
    }
    return bar;
  }

  private captureMouseSelection(): void {
    const selection = this.doc.defaultView?.getSelection?.() ?? null;
    if (!selection || selection.rangeCount === 0 || selection.isCollapsed) return;
    const range = selection.getRangeAt(0);
    const startChar = this.charOffset(range.startContainer, range.startOffset);
    const endChar = this.charOffset(range.endContainer, range.endOffset);
    if (startChar === null || endChar === null || startChar === endChar) return;
    this.selectCharRange(Math.min(startChar, endChar), Math.max(startChar, endChar));
  }

  /** Map a DOM position to a character offset via the nearest token element. */
  private charOffset(node: Node, offset: number): number | null {
    let el: HTMLElement | null =
      node.nodeType === Node.ELEMENT_NODE
        ? (node as HTMLElement)
        : (node.parentElement as HTMLElement | null);
    while (el && el !== this.root && el.dataset?.start === undefined) {
      el = el.parentElement;
    }
    if (!el || el === this.root || el.dataset.start === undefined) return null;
    return Number(el.dataset.start) + (node.nodeType === Node.TEXT_NODE ? offset : 0);
  }

  /** Move the token cursor to cover a character range (mouse selection). */
  selectCharRange(startChar: number, endChar: number): void {
    const tokens = this.session.state().tokens;
    let first = -1;
    let last = -1;
    tokens.forEach((t, i) => {
      if (startChar < t.end && endChar > t.start) {
        if (first < 0) first = i;
        last = i;
      }
    });
    if (first < 0) return;
    this.session.moveCursor(first - this.session.state().cursor, false);
    this.session.moveCursor(last - first, true);
  }

  private onKeyDown(ev: KeyboardEvent): void {
    const state = this.session.state();
    if (ev.key === "ArrowRight" || ev.key === "Tab") {
      ev.preventDefault();
      this.session.moveCursor(1, ev.shiftKey && ev.key !== "Tab");
      return;
    }
    if (ev.key === "ArrowLeft") {
      ev.preventDefault();
      this.session.moveCursor(-1, ev.shiftKey);
      return;
    }
    if (state.reviewMode || ev.key.length !== 1) return;
    void this.session.labelSelection(ev.key);
  }
}
