/** Deterministic layered layout for (mostly) acyclic node-link diagrams. */

export interface Placed {
  name: string;
  layer: number;
  x: number;
  y: number;
}

export interface LayoutOptions {
  layerGap: number;
  nodeGap: number;
  marginX: number;
  marginY: number;
}

const DEFAULTS: LayoutOptions = { layerGap: 150, nodeGap: 96, marginX: 90, marginY: 48 };

/**
 * Longest-path layering: a node's layer is one past its deepest predecessor.
 * Nodes inside the same layer are ordered by name, so the layout is a pure
 * function of the edge list. Cycle edges are ignored for layering (the nodes
 * still place by their acyclic predecessors).
 */
export function layeredLayout(
  nodes: string[],
  edges: Array<[string, string]>,
  options: Partial<LayoutOptions> = {},
): Map<string, Placed> {
  const opts = { ...DEFAULTS, ...options };
  const ordered = [...new Set(nodes)].sort();
  const incoming = new Map<string, string[]>(ordered.map((n) => [n, []]));
  const outgoing = new Map<string, string[]>(ordered.map((n) => [n, []]));
  for (const [a, b] of edges) {
    if (incoming.has(b) && outgoing.has(a) && a !== b) {
      incoming.get(b)!.push(a);
      outgoing.get(a)!.push(b);
    }
  }

  const layer = new Map<string, number>();
  const visiting = new Set<string>();
  const depth = (node: string): number => {
    if (layer.has(node)) return layer.get(node)!;
    if (visiting.has(node)) return 0; // cycle guard
    visiting.add(node);
    const preds = incoming.get(node) ?? [];
    const value = preds.length === 0 ? 0 : Math.max(...preds.map(depth)) + 1;
    visiting.delete(node);
    layer.set(node, value);
    return value;
  };
  ordered.forEach(depth);

  const byLayer = new Map<number, string[]>();
  for (const node of ordered) {
    const l = layer.get(node)!;
    if (!byLayer.has(l)) byLayer.set(l, []);
    byLayer.get(l)!.push(node);
  }

  const placed = new Map<string, Placed>();
  const tallest = Math.max(...[...byLayer.values()].map((g) => g.length));
  for (const [l, group] of [...byLayer.entries()].sort((a, b) => a[0] - b[0])) {
    group.sort();
    const offset = ((tallest - group.length) * opts.nodeGap) / 2;
    group.forEach((name, i) => {
      placed.set(name, {
        name,
        layer: l,
        x: opts.marginX + l * opts.layerGap,
        y: opts.marginY + offset + i * opts.nodeGap,
      });
    });
  }
  return placed;
}

export function layoutSize(placed: Map<string, Placed>, options: Partial<LayoutOptions> = {}): [number, number] {
  const opts = { ...DEFAULTS, ...options };
  let maxX = 0;
  let maxY = 0;
  for (const p of placed.values()) {
    maxX = Math.max(maxX, p.x);
    maxY = Math.max(maxY, p.y);
  }
  return [maxX + opts.marginX, maxY + opts.marginY];
}
