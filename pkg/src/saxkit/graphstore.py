"""In-memory multi-layer labeled property graph.

Nodes carry one or more labels (Event, Case, Activity, Feature); every
relationship carries exactly one type.  View-producing operations write whole
layers at once and are idempotent: rewriting a layer with identical content
leaves its version counter untouched, so untouched layers can be asserted
stable.  Mutations are serialized by an internal lock (single writer); reads
assemble plain lists and never expose internal indexes.
"""

from __future__ import annotations

import io
import json
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping

import networkx as nx

from .errors import CyclicBase, DuplicateLog, EmptyLog, ViewAbsent
from .eventlog import EventLog, format_instant, parse_instant

NODE_LABELS = ("Event", "Case", "Activity", "Feature")

REL_TYPES = (
    "CORRELATED_TO",
    "DIRECTLY_FOLLOWS",
    "FLOWS_TO",
    "INDIRECTLY_FOLLOWS",
    "CAUSES",
    "INDIRECTLY_CAUSES",
    "HAS_FEATURE",
)

#: layer name -> relationship types it owns
LAYERS = {
    "base": ("CORRELATED_TO",),
    "df": ("DIRECTLY_FOLLOWS",),
    "process": ("FLOWS_TO", "INDIRECTLY_FOLLOWS"),
    "causal": ("CAUSES", "INDIRECTLY_CAUSES"),
    "xai": ("HAS_FEATURE",),
}

_CLOSURE_OF = {"FLOWS_TO": "INDIRECTLY_FOLLOWS", "CAUSES": "INDIRECTLY_CAUSES"}

_ENDPOINT_LABELS = {
    "CORRELATED_TO": ("Event", "Case"),
    "DIRECTLY_FOLLOWS": ("Event", "Event"),
    "FLOWS_TO": ("Activity", "Activity"),
    "INDIRECTLY_FOLLOWS": ("Activity", "Activity"),
    "CAUSES": ("Activity", "Activity"),
    "INDIRECTLY_CAUSES": ("Activity", "Activity"),
    "HAS_FEATURE": ("Activity", "Feature"),
}


@dataclass
class Node:
    node_id: str
    labels: frozenset[str]
    properties: dict = field(default_factory=dict)


@dataclass
class Relationship:
    rel_id: str
    rel_type: str
    source: str
    target: str
    properties: dict = field(default_factory=dict)


def event_node_id(event_id: str) -> str:
    return f"event:{event_id}"


def case_node_id(case_id: str) -> str:
    return f"case:{case_id}"


def activity_node_id(name: str) -> str:
    return f"activity:{name}"


def feature_node_id(activity: str, feature: str) -> str:
    return f"feature:{activity}:{feature}"


class KnowledgeGraph:
    def __init__(self):
        self.nodes: dict[str, Node] = {}
        self.rels: dict[str, Relationship] = {}
        self._out: dict[tuple[str, str], list[str]] = defaultdict(list)
        self._in: dict[tuple[str, str], list[str]] = defaultdict(list)
        self.layer_versions: dict[str, int] = {layer: 0 for layer in LAYERS}
        self.layer_meta: dict[str, dict] = {}
        self._rel_counter = 0
        self._lock = threading.RLock()

    # --- primitive mutations -------------------------------------------------

    def add_node(self, node_id: str, labels: Iterable[str], properties: dict | None = None) -> Node:
        labels = frozenset(labels)
        if not labels:
            raise ValueError("a node needs at least one label")
        with self._lock:
            node = Node(node_id=node_id, labels=labels, properties=dict(properties or {}))
            self.nodes[node_id] = node
            return node

    def add_relationship(self, rel_type: str, source: str, target: str,
                         properties: dict | None = None) -> Relationship:
        if rel_type not in REL_TYPES:
            raise ValueError(f"unknown relationship type {rel_type!r}")
        with self._lock:
            src = self.nodes.get(source)
            tgt = self.nodes.get(target)
            if src is None or tgt is None:
                raise ValueError(f"relationship endpoints must exist: {source!r} -> {target!r}")
            want_src, want_tgt = _ENDPOINT_LABELS[rel_type]
            if want_src not in src.labels or want_tgt not in tgt.labels:
                raise ValueError(
                    f"{rel_type} requires {want_src} -> {want_tgt}, "
                    f"got {sorted(src.labels)} -> {sorted(tgt.labels)}"
                )
            if rel_type == "DIRECTLY_FOLLOWS" and src.properties.get("case_id") != tgt.properties.get("case_id"):
                raise ValueError("DIRECTLY_FOLLOWS must stay within one case")
            self._rel_counter += 1
            rel = Relationship(rel_id=f"r{self._rel_counter}", rel_type=rel_type,
                               source=source, target=target, properties=dict(properties or {}))
            self.rels[rel.rel_id] = rel
            self._out[(source, rel_type)].append(rel.rel_id)
            self._in[(target, rel_type)].append(rel.rel_id)
            return rel

    def remove_relationship(self, rel_id: str) -> None:
        with self._lock:
            rel = self.rels.pop(rel_id)
            self._out[(rel.source, rel.rel_type)].remove(rel_id)
            self._in[(rel.target, rel.rel_type)].remove(rel_id)

    def remove_node(self, node_id: str) -> None:
        """Delete a node; incident relationships cascade."""
        with self._lock:
            self.nodes.pop(node_id)
            doomed = [r.rel_id for r in self.rels.values() if node_id in (r.source, r.target)]
            for rel_id in doomed:
                self.remove_relationship(rel_id)

    # --- reads -----------------------------------------------------------------

    def nodes_with_label(self, label: str) -> list[Node]:
        return [n for n in self.nodes.values() if label in n.labels]

    def relationships_of_type(self, rel_type: str) -> list[Relationship]:
        return [r for r in self.rels.values() if r.rel_type == rel_type]

    def out_edges(self, node_id: str, rel_type: str) -> list[Relationship]:
        return [self.rels[i] for i in self._out.get((node_id, rel_type), [])]

    def in_edges(self, node_id: str, rel_type: str) -> list[Relationship]:
        return [self.rels[i] for i in self._in.get((node_id, rel_type), [])]

    # --- layer plumbing -----------------------------------------------------------

    def replace_layer_rels(self, layer: str, rel_type: str,
                            desired: Mapping[tuple[str, str], dict]) -> None:
        """Write a relationship layer; no-op (version untouched) when already identical."""
        with self._lock:
            existing = {(r.source, r.target): r.properties for r in self.relationships_of_type(rel_type)}
            if existing == dict(desired):
                return
            for rel in self.relationships_of_type(rel_type):
                self.remove_relationship(rel.rel_id)
            for (source, target), props in desired.items():
                self.add_relationship(rel_type, source, target, props)
            self.layer_versions[layer] += 1

    # --- log loading -----------------------------------------------------------------

    def load_log(self, log: EventLog, log_id: str = "default") -> "KnowledgeGraph":
        """Materialize a log as the base layer: Event, Case, and Activity nodes."""
        if log.case_count == 0:
            raise EmptyLog("log contains no traces")
        with self._lock:
            if self.layer_versions["base"] > 0:
                raise DuplicateLog(f"a base layer is already loaded (log {self.layer_meta['base']['log_id']!r})")
            for trace in log.traces.values():
                self.add_node(case_node_id(trace.case_id), {"Case"},
                              {"case_id": trace.case_id, **trace.attributes})
            for name in sorted(log.activity_universe):
                self.add_node(activity_node_id(name), {"Activity"}, {"name": name})
            for trace in log.traces.values():
                for position, ev in enumerate(trace.events):
                    self.add_node(event_node_id(ev.event_id), {"Event"}, {
                        "activity": ev.activity,
                        "case_id": ev.case_id,
                        "timestamp": ev.timestamp,
                        "position": position,
                        **ev.attributes,
                    })
                    self.add_relationship("CORRELATED_TO", event_node_id(ev.event_id),
                                          case_node_id(trace.case_id))
            self.layer_versions["base"] += 1
            self.layer_meta["base"] = {"log_id": log_id}
        return self

    def case_events(self, case_id: str) -> list[Node]:
        """Event nodes of a case in trace order."""
        events = [self.nodes[r.source] for r in self.in_edges(case_node_id(case_id), "CORRELATED_TO")]
        events.sort(key=lambda n: n.properties["position"])
        return events

    def case_ids(self) -> list[str]:
        return [n.properties["case_id"] for n in self.nodes_with_label("Case")]

    # --- inference rules -----------------------------------------------------------

    def infer_directly_follows(self) -> "KnowledgeGraph":
        """Link consecutive events of every case; idempotent."""
        if self.layer_versions["base"] == 0:
            raise EmptyLog("no base layer loaded")
        desired: dict[tuple[str, str], dict] = {}
        for case_id in self.case_ids():
            events = self.case_events(case_id)
            for left, right in zip(events, events[1:]):
                desired[(left.node_id, right.node_id)] = {}
        self.replace_layer_rels("df", "DIRECTLY_FOLLOWS", desired)
        return self

    def transitive_closure(self, base: str) -> "KnowledgeGraph":
        """Derive INDIRECTLY_* from an activity-level base relation by join to fixpoint."""
        if base not in _CLOSURE_OF:
            raise ValueError(f"closure base must be one of {sorted(_CLOSURE_OF)}")
        pairs = {(r.source, r.target) for r in self.relationships_of_type(base)}
        if base == "CAUSES" and _has_cycle(pairs):
            raise CyclicBase("the causes relation contains a cycle")
        closure = closure_pairs(pairs)
        layer = "process" if base == "FLOWS_TO" else "causal"
        derived = _CLOSURE_OF[base]
        self.replace_layer_rels(layer, derived, {pair: {} for pair in closure})
        return self

    # --- views -------------------------------------------------------------------

    def query_view(self, view: str) -> list[dict]:
        """Records of a produced view, sorted by source activity name then target."""
        if view == "process":
            self._require_layer("process", view)
            records = [
                {"from": self.nodes[r.source].properties["name"],
                 "to": self.nodes[r.target].properties["name"],
                 "frequency": r.properties["frequency"]}
                for r in self.relationships_of_type("FLOWS_TO")
            ]
            return sorted(records, key=lambda rec: (rec["from"], rec["to"]))
        if view == "causal":
            self._require_layer("causal", view)
            records = [
                {"Cause": self.nodes[r.source].properties["name"],
                 "Effect": self.nodes[r.target].properties["name"],
                 "Coefficient": r.properties["coefficient"]}
                for r in self.relationships_of_type("CAUSES")
            ]
            return sorted(records, key=lambda rec: (rec["Cause"], rec["Effect"]))
        if view == "xai":
            self._require_layer("xai", view)
            records = [
                {"activity": self.nodes[r.source].properties["name"],
                 "feature": self.nodes[r.target].properties["name"],
                 "importance": r.properties["importance"]}
                for r in self.relationships_of_type("HAS_FEATURE")
            ]
            return sorted(records, key=lambda rec: (rec["activity"], rec["feature"]))
        raise ValueError(f"unknown view {view!r}")

    def _require_layer(self, layer: str, view: str) -> None:
        if self.layer_versions[layer] == 0:
            raise ViewAbsent(view)

    # --- export / import -------------------------------------------------------------

    def to_ndjson(self) -> str:
        """One node or relationship per line: id, labels/type, properties."""
        lines = []
        for node in self.nodes.values():
            lines.append(json.dumps({
                "id": node.node_id,
                "labels": sorted(node.labels),
                "properties": _encode_props(node.properties),
            }, sort_keys=True))
        for rel in self.rels.values():
            lines.append(json.dumps({
                "id": rel.rel_id,
                "type": rel.rel_type,
                "source": rel.source,
                "target": rel.target,
                "properties": _encode_props(rel.properties),
            }, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_ndjson(cls, text: str) -> "KnowledgeGraph":
        graph = cls()
        rel_lines = []
        for line in text.splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            if "labels" in record:
                graph.add_node(record["id"], record["labels"], _decode_props(record["properties"]))
            else:
                rel_lines.append(record)
        for record in rel_lines:
            graph.add_relationship(record["type"], record["source"], record["target"],
                                   _decode_props(record["properties"]))
        graph._restore_versions()
        return graph

    def to_graphml(self) -> str:
        g = nx.MultiDiGraph()
        g.graph["layer_versions"] = json.dumps(self.layer_versions)
        g.graph["layer_meta"] = json.dumps(self.layer_meta)
        for node in self.nodes.values():
            g.add_node(node.node_id, labels=";".join(sorted(node.labels)),
                       **{f"p_{k}": _graphml_value(v) for k, v in node.properties.items()})
        for rel in self.rels.values():
            g.add_edge(rel.source, rel.target, key=rel.rel_id, rel_type=rel.rel_type,
                       **{f"p_{k}": _graphml_value(v) for k, v in rel.properties.items()})
        buffer = io.BytesIO()
        nx.write_graphml(g, buffer)
        return buffer.getvalue().decode("utf-8")

    @classmethod
    def from_graphml(cls, text: str) -> "KnowledgeGraph":
        g = nx.read_graphml(io.BytesIO(text.encode("utf-8")), force_multigraph=True)
        graph = cls()
        for node_id, data in g.nodes(data=True):
            labels = data.pop("labels", "").split(";")
            graph.add_node(node_id, [l for l in labels if l],
                           {k[2:]: _decode_value(v) for k, v in data.items() if k.startswith("p_")})
        for source, target, data in g.edges(data=True):
            rel_type = data.pop("rel_type")
            graph.add_relationship(rel_type, source, target,
                                   {k[2:]: _decode_value(v) for k, v in data.items() if k.startswith("p_")})
        if "layer_versions" in g.graph:
            graph.layer_versions.update(json.loads(g.graph["layer_versions"]))
        if "layer_meta" in g.graph:
            graph.layer_meta.update(json.loads(g.graph["layer_meta"]))
        return graph

    def _restore_versions(self) -> None:
        """After a content-only import, mark layers with visible content as written."""
        if self.nodes_with_label("Event") or self.nodes_with_label("Case"):
            self.layer_versions["base"] = max(1, self.layer_versions["base"])
        for layer, rel_types in LAYERS.items():
            if layer == "base":
                continue
            if any(self.relationships_of_type(t) for t in rel_types):
                self.layer_versions[layer] = max(1, self.layer_versions[layer])


# --- helpers ------------------------------------------------------------------------


def closure_pairs(pairs: set[tuple[str, str]]) -> set[tuple[str, str]]:
    """Transitive closure by semi-naive join: (a,b),(b,c) => (a,c) until fixpoint."""
    adjacency: dict[str, set[str]] = defaultdict(set)
    for a, b in pairs:
        adjacency[a].add(b)
    closure = set(pairs)
    frontier = set(pairs)
    while frontier:
        fresh = {
            (a, c)
            for (a, b) in frontier
            for c in adjacency.get(b, ())
        } - closure
        closure |= fresh
        frontier = fresh
    return closure


def _has_cycle(pairs: set[tuple[str, str]]) -> bool:
    nodes = {a for a, _ in pairs} | {b for _, b in pairs}
    indegree = {n: 0 for n in nodes}
    adjacency = defaultdict(list)
    for a, b in pairs:
        adjacency[a].append(b)
        indegree[b] += 1
    queue = [n for n, d in indegree.items() if d == 0]
    seen = 0
    while queue:
        n = queue.pop()
        seen += 1
        for m in adjacency[n]:
            indegree[m] -= 1
            if indegree[m] == 0:
                queue.append(m)
    return seen != len(nodes)


def _encode_props(props: dict) -> dict:
    return {k: {"$instant": format_instant(v)} if isinstance(v, datetime) else v
            for k, v in props.items()}


def _decode_props(props: dict) -> dict:
    return {
        k: parse_instant(v["$instant"]) if isinstance(v, dict) and "$instant" in v else v
        for k, v in props.items()
    }


def _graphml_value(value):
    if isinstance(value, datetime):
        return "$instant:" + format_instant(value)
    if isinstance(value, (bool, int, float, str)):
        return value
    return str(value)


def _decode_value(value):
    if isinstance(value, str) and value.startswith("$instant:"):
        return parse_instant(value[len("$instant:"):])
    return value
