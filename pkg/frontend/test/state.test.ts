import { describe, expect, it } from "vitest";

import { layeredLayout } from "../src/layout.js";
import { SessionState } from "../src/state.js";

describe("session state", () => {
  it("blocks sending with zero ingredients or an empty question", () => {
    const state = new SessionState();
    state.questionDraft = "why late?";
    expect(state.canSend()).toBe(true);
    state.selection = { process: false, causal: false, xai: false };
    expect(state.canSend()).toBe(false);
    state.selection = { process: true, causal: false, xai: false };
    state.questionDraft = "   ";
    expect(state.canSend()).toBe(false);
  });

  it("allows one in-flight ask at a time", () => {
    const state = new SessionState();
    state.questionDraft = "why?";
    state.pending = true;
    expect(state.canSend()).toBe(false);
  });

  it("history is append-only", () => {
    const state = new SessionState();
    const entry = {
      selection: { process: true, causal: false, xai: false },
      question: "q",
      promptDigest: "d",
      explanation: "e",
    };
    state.record(entry);
    state.record({ ...entry, question: "q2" });
    expect(state.history.map((h) => h.question)).toEqual(["q", "q2"]);
    // the readonly view cannot shrink the log
    expect(state.history).toHaveLength(2);
  });
});

describe("layered layout", () => {
  it("is deterministic and respects topological order", () => {
    const nodes = ["start", "a", "b", "end"];
    const edges: Array<[string, string]> = [
      ["start", "a"],
      ["a", "b"],
      ["a", "end"],
      ["b", "end"],
    ];
    const first = layeredLayout(nodes, edges);
    const second = layeredLayout(nodes, edges);
    expect(first).toEqual(second);
    expect(first.get("start")!.x).toBeLessThan(first.get("a")!.x);
    expect(first.get("a")!.x).toBeLessThan(first.get("b")!.x);
    expect(first.get("b")!.x).toBeLessThan(first.get("end")!.x);
  });

  it("survives cycles without hanging", () => {
    const placed = layeredLayout(["a", "b"], [["a", "b"], ["b", "a"]]);
    expect(placed.size).toBe(2);
  });
});
