"""Frequency-annotated directly-follows discovery with optional dependency filtering.

The discovered view is an activity-pair frequency map augmented with synthetic
start and end markers, one outgoing start edge and one incoming end edge per
case.  With thresholds at their defaults the view is a pure directly-follows
graph; a positive dependency threshold applies the heuristic-miner measure
(f_ab - f_ba) / (f_ab + f_ba + 1) as an edge filter.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

from .errors import MissingDirectlyFollows
from .graphstore import KnowledgeGraph, activity_node_id

DEFAULT_START_MARKER = "EVENT 1 START"
DEFAULT_END_MARKER = "EVENT 3 END"


@dataclass(frozen=True)
class DiscoveryConfig:
    edge_frequency_threshold: int = 0
    dependency_threshold: float = 0.0
    start_marker: str = DEFAULT_START_MARKER
    end_marker: str = DEFAULT_END_MARKER

    def __post_init__(self):
        if not 0.0 <= self.dependency_threshold <= 1.0:
            raise ValueError("dependency_threshold must lie in [0, 1]")
        if self.edge_frequency_threshold < 0:
            raise ValueError("edge_frequency_threshold must be non-negative")


@dataclass(frozen=True)
class ProcessView:
    edges: dict[tuple[str, str], int] = field(default_factory=dict)
    start_marker: str = DEFAULT_START_MARKER
    end_marker: str = DEFAULT_END_MARKER

    def activities(self) -> list[str]:
        """Non-marker activities in flow order (breadth of first appearance)."""
        seen: list[str] = []
        for a, b in self.export_order():
            for name in (a, b):
                if name not in (self.start_marker, self.end_marker) and name not in seen:
                    seen.append(name)
        return seen

    def export_order(self) -> list[tuple[str, str]]:
        """Deterministic export order for the edge map.

        Start edges first; then descending frequency; frequency ties broken by
        descending target name, then ascending source name, which lists each
        branch in flow order.
        """
        edges = sorted(self.edges)
        edges.sort(key=lambda e: e[1], reverse=True)
        edges.sort(key=lambda e: (0 if e[0] == self.start_marker else 1, -self.edges[e]))
        return edges


def dependency_measure(f_ab: int, f_ba: int) -> float:
    return (f_ab - f_ba) / (f_ab + f_ba + 1)


def discover(g: KnowledgeGraph, cfg: DiscoveryConfig = DiscoveryConfig()) -> ProcessView:
    """Aggregate event-level directly-follows into the activity-level process view.

    The view is written back to the graph as the FLOWS_TO layer (markers become
    Activity nodes) and the INDIRECTLY_FOLLOWS closure is recomputed.  Pure with
    respect to (graph content, config): rerunning on an unchanged graph yields
    an identical view and leaves layer versions untouched.
    """
    if g.layer_versions["df"] == 0:
        raise MissingDirectlyFollows("run infer_directly_follows before discovery")

    counts: dict[tuple[str, str], int] = {}

    def bump(a: str, b: str) -> None:
        counts[(a, b)] = counts.get((a, b), 0) + 1

    for case_id in g.case_ids():
        events = g.case_events(case_id)
        bump(cfg.start_marker, events[0].properties["activity"])
        for left, right in zip(events, events[1:]):
            bump(left.properties["activity"], right.properties["activity"])
        bump(events[-1].properties["activity"], cfg.end_marker)

    kept = {
        edge: freq for edge, freq in counts.items()
        if freq >= cfg.edge_frequency_threshold
        and (cfg.dependency_threshold == 0.0
             or dependency_measure(freq, counts.get((edge[1], edge[0]), 0)) >= cfg.dependency_threshold)
    }
    kept = _drop_disconnected(kept, cfg)

    view = ProcessView(edges=kept, start_marker=cfg.start_marker, end_marker=cfg.end_marker)
    write_process_layer(g, view)
    return view


def _drop_disconnected(edges: dict[tuple[str, str], int], cfg: DiscoveryConfig) -> dict:
    """Iteratively drop edges touching non-marker activities left without in- or out-flow."""
    current = dict(edges)
    while True:
        outgoing = {a for (a, _b) in current}
        incoming = {b for (_a, b) in current}
        activities = (outgoing | incoming) - {cfg.start_marker, cfg.end_marker}
        orphans = {a for a in activities if a not in outgoing or a not in incoming}
        if not orphans:
            return current
        current = {e: f for e, f in current.items() if e[0] not in orphans and e[1] not in orphans}


def write_process_layer(g: KnowledgeGraph, view: ProcessView) -> KnowledgeGraph:
    """Store FLOWS_TO edges with frequency properties and recompute the closure."""
    mentioned = {a for edge in view.edges for a in edge}
    for name in sorted(mentioned):
        node_id = activity_node_id(name)
        if node_id not in g.nodes:
            labels = {"Activity", "Marker"} if name in (view.start_marker, view.end_marker) else {"Activity"}
            g.add_node(node_id, labels, {"name": name})
    desired = {
        (activity_node_id(a), activity_node_id(b)): {"frequency": freq}
        for (a, b), freq in view.edges.items()
    }
    g.replace_layer_rels("process", "FLOWS_TO", desired)
    g.transitive_closure("FLOWS_TO")
    g.layer_meta["process"] = {
        "start_marker": view.start_marker,
        "end_marker": view.end_marker,
        "activity_order": view.activities(),
    }
    return g


def view_from_graph(g: KnowledgeGraph) -> ProcessView:
    """Rebuild the process view from the FLOWS_TO layer."""
    records = g.query_view("process")
    meta = g.layer_meta.get("process", {})
    return ProcessView(
        edges={(r["from"], r["to"]): r["frequency"] for r in records},
        start_marker=meta.get("start_marker", DEFAULT_START_MARKER),
        end_marker=meta.get("end_marker", DEFAULT_END_MARKER),
    )


def export_process_json(view: ProcessView) -> str:
    """Render the activity-pair frequency map, one edge per line."""
    if not view.edges:
        return "{}"
    entries = [f"{(a, b)!r}: {view.edges[(a, b)]}" for a, b in view.export_order()]
    return "{" + ",\n".join(entries) + "}"


def parse_process_json(text: str) -> ProcessView:
    """Inverse of :func:`export_process_json` (markers recovered from edge structure)."""
    raw = ast.literal_eval(text)
    edges = {(str(a), str(b)): int(v) for (a, b), v in raw.items()}
    sources = {a for a, _ in edges}
    targets = {b for _, b in edges}
    start_candidates = sources - targets
    end_candidates = targets - sources
    start = sorted(start_candidates)[0] if start_candidates else DEFAULT_START_MARKER
    end = sorted(end_candidates)[0] if end_candidates else DEFAULT_END_MARKER
    return ProcessView(edges=edges, start_marker=start, end_marker=end)
