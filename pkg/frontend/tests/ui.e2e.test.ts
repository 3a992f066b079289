// @vitest-environment jsdom
//
// Scripted end-to-end flow against the real annotation service: upload a
// document, select "fever" and press the SYMPTOM hotkey, verify the span is
// persisted server-side, accept one model suggestion, and complete a review.
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { AnnotationView } from "../src/render";
import { DocumentSession } from "../src/session";
import type { Project, Span } from "../src/types";

const PORT = 8600 + Math.floor(Math.random() * 800);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let api: ApiClient;
let project: Project;

async function waitFor<T>(
  probe: () => Promise<T | null> | T | null,
  timeoutMs = 30_000,
  stepMs = 150,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = await probe();
    if (value !== null && value !== undefined && value !== false) return value as T;
    if (Date.now() > deadline) throw new Error("timed out waiting for condition");
    await new Promise((resolve) => setTimeout(resolve, stepMs));
  }
}

interface SeedDoc {
  text: string;
  spans: Span[];
}

/** Deterministic annotated seed set (~100 occurrences per entity). */
function seedDocuments(): SeedDoc[] {
  const chems = ["aspirin", "ibuprofen", "metformin", "warfarin", "insulin",
                 "codeine", "naproxen", "losartan"];
  const diseases = ["migraine", "diabetes", "asthma", "arthritis", "anemia",
                    "gastritis", "eczema", "influenza"];
  const symptoms = ["fever", "nausea", "headache", "dizziness", "cough",
                    "rash", "fatigue", "vomiting"];
  const amounts = ["5", "10", "25", "50", "100", "200", "400", "500"];
  const docs: SeedDoc[] = [];

  const spanOf = (text: string, piece: string, label: string): Span => {
    const start = text.indexOf(piece);
    return { start, end: start + piece.length, label };
  };

  for (let i = 0; i < 40; i += 1) {
    const chem = chems[i % chems.length]!;
    const disease = diseases[(i * 3) % diseases.length]!;
    const dose = `${amounts[i % amounts.length]!} mg`;
    const text = `The patient was prescribed ${chem} ${dose} for ${disease} on day ${i}.`;
    docs.push({
      text,
      spans: [
        spanOf(text, chem, "CHEMICAL"),
        spanOf(text, dose, "DOSAGE"),
        spanOf(text, disease, "DISEASE"),
      ],
    });
  }
  for (let i = 0; i < 40; i += 1) {
    const a = symptoms[i % symptoms.length]!;
    const b = symptoms[(i * 5 + 3) % symptoms.length]!;
    const text = `She reported ${a} and ${b} yesterday evening ${i}.`;
    const spans = [spanOf(text, a, "SYMPTOM")];
    if (b !== a) {
      const start = text.indexOf(b, spans[0]!.end);
      spans.push({ start, end: start + b.length, label: "SYMPTOM" });
    }
    docs.push({ text, spans });
  }
  for (let i = 0; i < 20; i += 1) {
    const disease = diseases[(i * 5 + 1) % diseases.length]!;
    const text = `He was diagnosed with ${disease} last week ${i}.`;
    docs.push({ text, spans: [spanOf(text, disease, "DISEASE")] });
  }
  return docs;
}

beforeAll(async () => {
  const store = mkdtempSync(join(tmpdir(), "annotation-ui-"));
  server = spawn(
    "python3",
    ["-m", "nerlab.cli", "serve", "--store", store, "--port", String(PORT)],
    { stdio: "ignore" },
  );
  api = new ApiClient(BASE);
  await waitFor(async () => {
    try {
      return await api.listProjects();
    } catch {
      return null;
    }
  }, 30_000);
  project = await api.createProject("e2e");

  // annotate the seed set through the same span-save API the UI uses
  const docs = seedDocuments();
  const { records } = await api.uploadDocuments(
    project.id,
    docs.map((d, i) => ({ name: `seed-${i}.txt`, text: d.text })),
  );
  const byText = new Map(docs.map((d) => [d.text, d.spans]));
  const seen = new Set<string>();
  for (const record of records) {
    if (seen.has(record.id)) continue; // duplicate texts collapse to one record
    seen.add(record.id);
    await api.saveSpans(record.id, {
      spans: byText.get(record.text)!,
      revision: record.revision,
      editor: "seeder",
    });
  }

  const job = await api.startTrain(project.id, { iterations: 60, seed: 3 });
  const finished = await waitFor(async () => {
    const current = await api.getJob(job.id);
    return current.state === "done" || current.state === "failed" ? current : null;
  }, 240_000, 500);
  expect(finished.state).toBe("done");
}, 300_000);

afterAll(() => {
  server?.kill();
});

describe("scripted annotation flow", () => {
  it("select 'fever', press 'S': SYMPTOM span persisted server-side", async () => {
    const text = "The patient reported fever this morning.";
    const { records } = await api.uploadDocuments(project.id, [
      { name: "probe.txt", text },
    ]);
    const record = records[0]!;
    const session = await DocumentSession.open(api, project, record.id);
    const host = document.createElement("div");
    document.body.appendChild(host);
    new AnnotationView(host, session);

    // keyboard-only: walk the cursor onto "fever", then hit the hotkey
    const feverIndex = session
      .state()
      .tokens.findIndex((t) => t.text === "fever");
    for (let i = 0; i < feverIndex; i += 1) {
      host.dispatchEvent(new window.KeyboardEvent("keydown", { key: "ArrowRight", bubbles: true }));
    }
    host.dispatchEvent(new window.KeyboardEvent("keydown", { key: "s", bubbles: true }));

    await waitFor(() => session.state().record.spans.length > 0);
    const serverSide = await api.getDocument(record.id);
    const start = text.indexOf("fever");
    expect(serverSide.spans).toEqual([{ start, end: start + 5, label: "SYMPTOM" }]);
    expect(serverSide.status).toBe("annotated");

    // the confirmed highlight is rendered solid, with the project's color
    const mark = host.querySelector("mark.span.confirmed") as HTMLElement;
    expect(mark).not.toBeNull();
    expect(mark.dataset.label).toBe("SYMPTOM");
  });

  it("accepts one model suggestion and completes review", async () => {
    const text = "He was prescribed aspirin 100 mg for migraine.";
    const { records } = await api.uploadDocuments(project.id, [
      { name: "suggest-me.txt", text },
    ]);
    const record = records[0]!;
    const suggested = await api.suggest(record.id);
    expect(suggested.status).toBe("suggested");
    expect(suggested.suggestions.length).toBeGreaterThan(0);

    const session = await DocumentSession.open(api, project, record.id);
    const host = document.createElement("div");
    document.body.appendChild(host);
    new AnnotationView(host, session);

    const before = session.state().record.spans.length;
    const accept = host.querySelector(".suggestions .accept") as HTMLButtonElement;
    expect(accept).not.toBeNull();
    accept.click();
    await waitFor(() => session.state().record.spans.length === before + 1);

    // suggestion list shrank by one: the accepted span now renders confirmed
    const rows = host.querySelectorAll(".suggestion-row");
    expect(rows.length).toBe(suggested.suggestions.length - 1);
    const serverSide = await api.getDocument(record.id);
    expect(serverSide.spans.length).toBe(before + 1);
    expect(serverSide.status).toBe("annotated");

    // review pass: toggle review mode, finish, status lands on reviewed
    (host.querySelector(".review-toggle") as HTMLButtonElement).click();
    await waitFor(() => session.state().reviewMode);
    (host.querySelector(".finish-review") as HTMLButtonElement).click();
    await waitFor(() => session.state().record.status === "reviewed");
    expect((await api.getDocument(record.id)).status).toBe("reviewed");
  }, 120_000);
});
