import { layeredLayout, layoutSize } from "./layout.js";
import type { CausalRecord, ProcessEdge, XaiView } from "./types.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function nodeBox(x: number, y: number, label: string, cls: string): string {
  const width = Math.max(110, label.length * 7 + 18);
  return (
    `<g class="node ${cls}" transform="translate(${x},${y})">` +
    `<rect x="${-width / 2}" y="-16" width="${width}" height="32" rx="8"></rect>` +
    `<text text-anchor="middle" dy="5">${esc(label)}</text></g>`
  );
}

function arrow(x1: number, y1: number, x2: number, y2: number, label: string): string {
  const mx = (x1 + x2) / 2;
  const my = (y1 + y2) / 2 - 6;
  return (
    `<g class="edge"><line x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}" marker-end="url(#arrow)"></line>` +
    `<text x="${mx}" y="${my}" text-anchor="middle">${esc(label)}</text></g>`
  );
}

const SVG_DEFS =
  `<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" ` +
  `markerWidth="7" markerHeight="7" orient="auto-start-reverse">` +
  `<path d="M 0 0 L 10 5 L 0 10 z"></path></marker></defs>`;

function diagram(
  nodes: string[],
  edges: Array<{ from: string; to: string; label: string }>,
  markers: Set<string>,
): string {
  const placed = layeredLayout(nodes, edges.map((e) => [e.from, e.to]));
  const [width, height] = layoutSize(placed);
  const parts: string[] = [];
  for (const edge of edges) {
    const a = placed.get(edge.from)!;
    const b = placed.get(edge.to)!;
    parts.push(arrow(a.x, a.y, b.x, b.y, edge.label));
  }
  for (const p of placed.values()) {
    parts.push(nodeBox(p.x, p.y, p.name, markers.has(p.name) ? "marker" : "activity"));
  }
  return (
    `<svg class="diagram" viewBox="0 0 ${width} ${height}" ` +
    `xmlns="http://www.w3.org/2000/svg">${SVG_DEFS}${parts.join("")}</svg>`
  );
}

function markerNames(edges: Array<{ from: string; to: string }>): Set<string> {
  const sources = new Set(edges.map((e) => e.from));
  const targets = new Set(edges.map((e) => e.to));
  return new Set([...sources, ...targets].filter((n) => !sources.has(n) || !targets.has(n)));
}

/** Node-link process map with frequency-labeled edges. */
export function processPanel(edges: ProcessEdge[]): string {
  if (edges.length === 0) return `<p class="absent">view absent</p>`;
  const nodes = [...new Set(edges.flatMap((e) => [e.from, e.to]))];
  return diagram(
    nodes,
    edges.map((e) => ({ from: e.from, to: e.to, label: String(e.frequency) })),
    markerNames(edges),
  );
}

/** Causal DAG with coefficient-labeled edges. */
export function causalPanel(records: CausalRecord[]): string {
  if (records.length === 0) return `<p class="absent">view absent</p>`;
  const nodes = [...new Set(records.flatMap((r) => [r.cause, r.effect]))];
  return diagram(
    nodes,
    records.map((r) => ({ from: r.cause, to: r.effect, label: r.coefficient })),
    markerNames(records.map((r) => ({ from: r.cause, to: r.effect }))),
  );
}

export interface Bar {
  activity: string;
  feature: string;
  importance: number;
}

export function xaiBars(view: XaiView): Bar[] {
  const bars: Bar[] = [];
  for (const [activity, features] of view) {
    for (const [feature, importance] of features) {
      bars.push({ activity, feature, importance });
    }
  }
  return bars;
}

/** Per-activity horizontal bar chart of feature importances. */
export function xaiPanel(view: XaiView): string {
  const bars = xaiBars(view);
  if (bars.length === 0) return `<p class="absent">view absent</p>`;
  const rowHeight = 26;
  const labelWidth = 260;
  const maxBar = 300;
  const parts: string[] = [];
  let y = 10;
  for (const [activity, features] of view) {
    parts.push(`<text class="group" x="8" y="${y + 14}">${esc(activity)}</text>`);
    y += rowHeight;
    for (const [feature, importance] of features) {
      const width = Math.max(2, Math.round(importance * maxBar));
      parts.push(
        `<g class="bar" transform="translate(0,${y})">` +
        `<text x="${labelWidth - 8}" y="14" text-anchor="end">${esc(feature)}</text>` +
        `<rect x="${labelWidth}" y="2" width="${width}" height="16"></rect>` +
        `<text class="value" x="${labelWidth + width + 6}" y="14">${importance.toFixed(3)}</text>` +
        `</g>`,
      );
      y += rowHeight;
    }
    y += 8;
  }
  const width = labelWidth + maxBar + 80;
  return (
    `<svg class="bars" viewBox="0 0 ${width} ${y}" ` +
    `xmlns="http://www.w3.org/2000/svg">${parts.join("")}</svg>`
  );
}
