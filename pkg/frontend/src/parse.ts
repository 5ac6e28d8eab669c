import type { CausalRecord, ProcessEdge, XaiView } from "./types.js";

/**
 * The process view is served as a text map of ('from', 'to'): frequency
 * entries (single-quoted, Python-repr style). Quotes inside names arrive
 * backslash-escaped.
 */
export function parseProcessView(text: string): ProcessEdge[] {
  const edges: ProcessEdge[] = [];
  const entry = /\(\s*'((?:[^'\\]|\\.)*)'\s*,\s*'((?:[^'\\]|\\.)*)'\s*\)\s*:\s*(\d+)/g;
  for (const match of text.matchAll(entry)) {
    edges.push({
      from: unescapeQuoted(match[1]),
      to: unescapeQuoted(match[2]),
      frequency: parseInt(match[3], 10),
    });
  }
  return edges;
}

function unescapeQuoted(raw: string): string {
  return raw.replace(/\\(['"\\])/g, "$1");
}

export function parseCausalView(text: string): CausalRecord[] {
  const records = JSON.parse(text) as Array<Record<string, string>>;
  return records.map((r) => ({
    cause: r["Cause"],
    effect: r["Effect"],
    coefficient: r["Coefficient"],
  }));
}

export function parseXaiView(text: string): XaiView {
  const raw = JSON.parse(text) as Record<string, Record<string, number>>;
  const view: XaiView = new Map();
  for (const [activity, features] of Object.entries(raw)) {
    view.set(activity, new Map(Object.entries(features)));
  }
  return view;
}
