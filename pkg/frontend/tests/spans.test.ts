import { describe, expect, it } from "vitest";

import { colorTable, hotkeyTable, toUiSpans } from "../src/spans";
import type { LabelDef, Span } from "../src/types";

const labels: LabelDef[] = [
  { label: "CHEMICAL", hotkey: "C", color: "#4cc9f0" },
  { label: "DISEASE", hotkey: "D", color: "#f72585" },
  { label: "SYMPTOM", hotkey: "S", color: "#ffd166" },
  { label: "DOSAGE", hotkey: "G", color: "#80ed99" },
];

describe("label tables", () => {
  it("color mapping is exactly the project label table", () => {
    const colors = colorTable(labels);
    expect(colors.size).toBe(4);
    for (const def of labels) {
      expect(colors.get(def.label)).toBe(def.color);
    }
  });

  it("hotkeys resolve case-insensitively", () => {
    const keys = hotkeyTable(labels);
    expect(keys.get("s")).toBe("SYMPTOM");
    expect(keys.get("S".toLowerCase())).toBe("SYMPTOM");
  });
});

describe("toUiSpans", () => {
  const colors = colorTable(labels);
  const confirmed: Span[] = [{ start: 0, end: 5, label: "CHEMICAL" }];
  const suggestions: Span[] = [
    { start: 0, end: 5, label: "CHEMICAL" }, // already accepted
    { start: 10, end: 15, label: "SYMPTOM" },
  ];

  it("tags provenance and resolves colors", () => {
    const ui = toUiSpans(confirmed, suggestions, [], colors);
    expect(ui).toHaveLength(2);
    expect(ui[0]).toMatchObject({ kind: "confirmed", color: "#4cc9f0" });
    expect(ui[1]).toMatchObject({ kind: "suggestion", color: "#ffd166" });
  });

  it("hides suggestions that match a confirmed span", () => {
    const ui = toUiSpans(confirmed, suggestions, [], colors);
    expect(ui.filter((s) => s.kind === "suggestion")).toHaveLength(1);
  });

  it("hides dismissed suggestions", () => {
    const ui = toUiSpans(confirmed, suggestions, [{ start: 10, end: 15, label: "SYMPTOM" }], colors);
    expect(ui.filter((s) => s.kind === "suggestion")).toHaveLength(0);
  });

  it("sorts by position", () => {
    const ui = toUiSpans(
      [{ start: 20, end: 25, label: "DISEASE" }, ...confirmed],
      suggestions,
      [],
      colors,
    );
    expect(ui.map((s) => s.start)).toEqual([0, 10, 20]);
  });
});
