export type Status = "fresh" | "suggested" | "annotated" | "reviewed";

export interface LabelDef {
  label: string;
  hotkey: string;
  color: string;
}

export interface Project {
  id: string;
  name: string;
  labels: LabelDef[];
  model_version: number;
}

export interface Span {
  start: number;
  end: number;
  label: string;
}

export interface Token {
  text: string;
  start: number;
  end: number;
}

export interface DocRecord {
  id: string;
  project_id: string;
  name: string;
  text: string;
  spans: Span[];
  suggestions: Span[];
  status: Status;
  revision: number;
  last_editor: string;
  tokens?: Token[];
  model_version?: number;
}

export interface TrainJob {
  id: string;
  project_id: string;
  state: "queued" | "running" | "done" | "failed";
  model_version: number | null;
  error: string | null;
}

export type UiSpanKind = "confirmed" | "suggestion";

/** A span ready to render: label color resolved, provenance tagged. */
export interface UiSpan extends Span {
  kind: UiSpanKind;
  color: string;
}
