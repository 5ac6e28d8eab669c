"""Surrogate-model training and activity-segmented permutation importance.

A feature table holds one row per case; every logical feature owns one or more
numeric columns (categoricals are one-hot groups) and is tagged with the
activity its values were recorded at, or with case scope.  Importance is the
mean holdout-score drop over repeated perturbations, where perturbed values
are resampled only from values observed among process-conformant rows, i.e.
rows whose cases actually traverse the feature's owning activity.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor
from sklearn.metrics import accuracy_score, r2_score
from sklearn.model_selection import train_test_split

from .errors import InsufficientRows, NoRows, SchemaMismatch, UnknownTarget
from .graphstore import KnowledgeGraph, activity_node_id, feature_node_id

CASE_SCOPE = "case"
MIN_TRAINING_ROWS = 20

_TARGET_KINDS = ("case_duration", "case_attribute", "activity_duration")


@dataclass(frozen=True)
class ConditionSpec:
    """What to predict: the inquired process condition."""

    target: str  # one of _TARGET_KINDS
    key: str | None = None  # attribute name or activity name, per target kind
    direction: str = "high"  # framing only

    def __post_init__(self):
        if self.target not in _TARGET_KINDS:
            raise UnknownTarget(f"target must be one of {_TARGET_KINDS}, got {self.target!r}")
        if self.target != "case_duration" and not self.key:
            raise UnknownTarget(f"target {self.target!r} requires a key")


@dataclass(frozen=True)
class FeatureGroup:
    name: str
    activity: str  # owning activity name, or CASE_SCOPE
    columns: tuple[int, ...]  # column indices in the matrix
    kind: str  # "numeric" | "categorical" | "timing"


@dataclass(frozen=True)
class FeatureTable:
    matrix: np.ndarray  # (n_rows, n_columns)
    target: np.ndarray
    target_kind: str  # "numeric" | "categorical"
    case_ids: tuple[str, ...]
    groups: tuple[FeatureGroup, ...]
    column_names: tuple[str, ...]
    conformance: dict[str, np.ndarray]  # activity -> boolean row mask
    activity_order: tuple[str, ...]
    excluded_rows: int = 0

    def conformant_mask(self, group: FeatureGroup) -> np.ndarray:
        if group.activity == CASE_SCOPE:
            return np.ones(len(self.matrix), dtype=bool)
        return self.conformance[group.activity]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["case_id", *self.column_names, "target"])
        for i, case_id in enumerate(self.case_ids):
            writer.writerow([case_id, *(f"{v:g}" for v in self.matrix[i]), self.target[i]])
        return out.getvalue()


@dataclass(frozen=True)
class XaiView:
    per_activity: dict[str, dict[str, float]]


@dataclass(frozen=True)
class SurrogateModel:
    estimator: object
    task: str  # "regression" | "classification"
    holdout_score: float
    train_rows: np.ndarray
    test_rows: np.ndarray
    column_names: tuple[str, ...]
    seed: int
    degenerate: bool = False

    def score(self, X: np.ndarray, y: np.ndarray) -> float:
        predictions = self.estimator.predict(X)
        if self.task == "regression":
            if np.var(y) == 0:
                return 0.0  # degenerate-target convention
            return float(r2_score(y, predictions))
        return float(accuracy_score(y, predictions))


class DegenerateTarget(UserWarning):
    pass


# --- feature table ------------------------------------------------------------------


def build_feature_table(
    g: KnowledgeGraph,
    cond: ConditionSpec,
    activities: tuple[str, ...] | None = None,
    feature_names: tuple[str, ...] | None = None,
    include_timing: bool = True,
) -> FeatureTable:
    """Assemble per-case features and the target from the (enriched) log in the graph.

    ``activities`` restricts rows to cases traversing all listed activities;
    ``feature_names`` whitelists logical features; ``include_timing`` controls
    the synthesized per-activity service-time columns (the completion delta
    from the preceding event).  Rows with a missing target are excluded and
    counted.
    """
    cases = []
    for case_id in sorted(g.case_ids()):
        events = g.case_events(case_id)
        if activities and any(
            a not in {e.properties["activity"] for e in events} for a in activities
        ):
            continue
        cases.append((case_id, events))
    if not cases:
        raise NoRows("no case matches the requested activity set")

    activity_order = _first_appearance_order(g, cases)

    # discover logical features and their owning activities
    case_node_attrs = {
        n.properties["case_id"]: {k: v for k, v in n.properties.items() if k != "case_id"}
        for n in g.nodes_with_label("Case")
    }
    feature_specs: dict[tuple[str, str], str] = {}  # (activity, name) -> kind
    for case_id, events in cases:
        for key, value in case_node_attrs.get(case_id, {}).items():
            feature_specs.setdefault((CASE_SCOPE, key), _value_kind(value))
        for ev in events:
            for key, value in ev.properties.items():
                if key in ("activity", "case_id", "timestamp", "position"):
                    continue
                feature_specs.setdefault((ev.properties["activity"], key), _value_kind(value))
    if include_timing:
        for name in activity_order:
            feature_specs[(name, "service time")] = "timing"
    if feature_names is not None:
        feature_specs = {k: v for k, v in feature_specs.items() if k[1] in feature_names}

    ordered_specs = sorted(
        feature_specs,
        key=lambda k: (len(activity_order) if k[0] == CASE_SCOPE else activity_order.index(k[0]), k[1]),
    )

    # collect raw values
    raw: dict[tuple[str, str], list] = {spec: [] for spec in ordered_specs}
    targets = []
    conformance = {name: [] for name in activity_order}
    kept_cases = []
    excluded = 0
    for case_id, events in cases:
        target = _target_value(cond, case_id, events, case_node_attrs)
        if target is None:
            excluded += 1
            continue
        targets.append(target)
        kept_cases.append(case_id)
        present = {e.properties["activity"] for e in events}
        for name in activity_order:
            conformance[name].append(name in present)
        per_activity_events = {}
        for ev in events:
            per_activity_events.setdefault(ev.properties["activity"], ev)
        for activity, key in ordered_specs:
            kind = feature_specs[(activity, key)]
            if kind == "timing":
                raw[(activity, key)].append(_service_time(events, activity))
            elif activity == CASE_SCOPE:
                raw[(activity, key)].append(case_node_attrs.get(case_id, {}).get(key))
            else:
                ev = per_activity_events.get(activity)
                raw[(activity, key)].append(None if ev is None else ev.properties.get(key))
    if not kept_cases:
        raise NoRows("every case lacks the requested target")

    columns: list[np.ndarray] = []
    column_names: list[str] = []
    groups: list[FeatureGroup] = []
    for activity, key in ordered_specs:
        kind = feature_specs[(activity, key)]
        values = raw[(activity, key)]
        start = len(columns)
        if kind == "categorical":
            levels = sorted({str(v) for v in values if v is not None})
            for level in levels:
                columns.append(np.array([1.0 if v is not None and str(v) == level else 0.0
                                         for v in values]))
                column_names.append(f"{activity}::{key}={level}")
        else:
            numeric = np.array([float(v) if v is not None else np.nan for v in values])
            if np.isnan(numeric).any():
                fill = np.nanmedian(numeric) if not np.isnan(numeric).all() else 0.0
                numeric = np.where(np.isnan(numeric), fill, numeric)
            columns.append(numeric)
            column_names.append(f"{activity}::{key}")
        indices = tuple(range(start, len(columns)))
        if indices:
            groups.append(FeatureGroup(name=key, activity=activity, columns=indices,
                                       kind="categorical" if kind == "categorical" else kind))

    matrix = np.column_stack(columns) if columns else np.zeros((len(kept_cases), 0))
    target_kind = "categorical" if cond.target == "case_attribute" and any(
        isinstance(t, str) for t in targets) else "numeric"
    target_array = np.array(targets) if target_kind == "categorical" else np.array(targets, dtype=float)
    return FeatureTable(
        matrix=matrix,
        target=target_array,
        target_kind=target_kind,
        case_ids=tuple(kept_cases),
        groups=tuple(groups),
        column_names=tuple(column_names),
        conformance={k: np.array(v, dtype=bool) for k, v in conformance.items()},
        activity_order=tuple(activity_order),
        excluded_rows=excluded,
    )


def _first_appearance_order(g: KnowledgeGraph, cases) -> list[str]:
    meta = g.layer_meta.get("process", {})
    order = [a for a in meta.get("activity_order", [])]
    for _case_id, events in cases:
        for ev in events:
            name = ev.properties["activity"]
            if name not in order:
                order.append(name)
    present = {e.properties["activity"] for _c, evs in cases for e in evs}
    return [a for a in order if a in present]


def _value_kind(value) -> str:
    if isinstance(value, bool):
        return "categorical"
    if isinstance(value, (int, float)):
        return "numeric"
    return "categorical"


def _service_time(events, activity) -> float | None:
    previous = None
    for ev in events:
        if ev.properties["activity"] == activity:
            if previous is None:
                return 0.0
            return (ev.properties["timestamp"] - previous).total_seconds()
        previous = ev.properties["timestamp"]
    return None


def _target_value(cond: ConditionSpec, case_id, events, case_node_attrs):
    if cond.target == "case_duration":
        return (events[-1].properties["timestamp"] - events[0].properties["timestamp"]).total_seconds()
    if cond.target == "case_attribute":
        return case_node_attrs.get(case_id, {}).get(cond.key)
    # activity_duration
    for ev in events:
        if ev.properties["activity"] == cond.key:
            return _service_time(events, cond.key)
    return None


# --- surrogate ---------------------------------------------------------------------


def train_surrogate(table: FeatureTable, seed: int = 0) -> SurrogateModel:
    """Fit the default tree-ensemble surrogate on a fixed, seeded 80/20 split."""
    n = len(table.case_ids)
    if n < MIN_TRAINING_ROWS:
        raise InsufficientRows(n, MIN_TRAINING_ROWS)
    rows = np.arange(n)
    train_rows, test_rows = train_test_split(rows, test_size=0.2, random_state=seed)
    task = "regression" if table.target_kind == "numeric" else "classification"

    degenerate = len(np.unique(table.target[train_rows])) < 2
    if degenerate:
        warnings.warn("target is constant on the training split; holdout score set to 0",
                      DegenerateTarget, stacklevel=2)
    if task == "regression":
        estimator = RandomForestRegressor(n_estimators=200, max_depth=6,
                                          min_samples_leaf=10, random_state=seed)
    else:
        estimator = RandomForestClassifier(n_estimators=200, max_depth=6,
                                           min_samples_leaf=10, random_state=seed)
    estimator.fit(table.matrix[train_rows], table.target[train_rows])
    model = SurrogateModel(
        estimator=estimator,
        task=task,
        holdout_score=0.0,
        train_rows=train_rows,
        test_rows=test_rows,
        column_names=table.column_names,
        seed=seed,
        degenerate=degenerate,
    )
    score = 0.0 if degenerate else model.score(table.matrix[test_rows], table.target[test_rows])
    return SurrogateModel(**{**model.__dict__, "holdout_score": score})


# --- importance -----------------------------------------------------------------------


def importance(
    model: SurrogateModel,
    table: FeatureTable,
    n_repeats: int = 10,
    seed: int = 0,
) -> XaiView:
    """Permutation importance per logical feature, grouped by owning activity.

    Each repeat resamples the feature's columns (jointly, keeping one-hot rows
    consistent) from values observed among conformant rows only, and measures
    the holdout-score drop; importances are the repeat means clipped at zero,
    scaled down only when the raw maximum exceeds one.
    """
    if model.column_names != table.column_names:
        raise SchemaMismatch(
            "feature table columns differ from the columns the surrogate was trained on"
        )
    rng = np.random.default_rng(seed)
    X_test = table.matrix[model.test_rows]
    y_test = table.target[model.test_rows]
    base = model.score(X_test, y_test)

    raw_scores: dict[tuple[str, str], float] = {}
    for group in table.groups:
        pool_mask = table.conformant_mask(group)
        pool = table.matrix[pool_mask][:, list(group.columns)]
        test_conformant = table.conformant_mask(group)[model.test_rows]
        if len(pool) == 0 or not test_conformant.any() or _constant_rows(pool):
            raw_scores[(group.activity, group.name)] = 0.0
            continue
        drops = []
        for _ in range(n_repeats):
            permuted = X_test.copy()
            draw = pool[rng.integers(0, len(pool), size=int(test_conformant.sum()))]
            permuted[np.ix_(test_conformant, list(group.columns))] = draw
            drops.append(base - model.score(permuted, y_test))
        raw_scores[(group.activity, group.name)] = max(0.0, float(np.mean(drops)))

    scale = max(1.0, max(raw_scores.values(), default=1.0))
    per_activity: dict[str, dict[str, float]] = {}
    buckets = [a for a in table.activity_order if any(g.activity == a for g in table.groups)]
    if any(g.activity == CASE_SCOPE for g in table.groups):
        buckets.append(CASE_SCOPE)
    for activity in buckets:
        per_activity[activity] = {
            name: value / scale
            for (act, name), value in raw_scores.items()
            if act == activity
        }
    return XaiView(per_activity=per_activity)


def _constant_rows(pool: np.ndarray) -> bool:
    return bool(np.all(pool == pool[0]))


# --- export ------------------------------------------------------------------------


def export_xai_json(view: XaiView) -> str:
    """Activities in process order, features by descending importance (name tie-break)."""
    rendered: dict[str, dict[str, float]] = {}
    for activity, features in view.per_activity.items():
        ordered = sorted(features.items(), key=lambda kv: (-kv[1], kv[0]))
        rendered[activity] = {name: round(value, 8) for name, value in ordered}
    return json.dumps(rendered, indent=1)


def parse_xai_json(text: str) -> XaiView:
    raw = json.loads(text)
    return XaiView(per_activity={a: {f: float(v) for f, v in feats.items()}
                                 for a, feats in raw.items()})


def write_xai_layer(g: KnowledgeGraph, view: XaiView) -> KnowledgeGraph:
    """Store HAS_FEATURE edges with importance properties."""
    desired = {}
    for activity, features in view.per_activity.items():
        if activity == CASE_SCOPE:
            continue
        source = activity_node_id(activity)
        if source not in g.nodes:
            raise SchemaMismatch(f"activity {activity!r} missing from the graph")
        for name, value in features.items():
            node_id = feature_node_id(activity, name)
            if node_id not in g.nodes:
                g.add_node(node_id, {"Feature"}, {"name": name, "activity": activity})
            desired[(source, node_id)] = {"importance": value}
    g.replace_layer_rels("xai", "HAS_FEATURE", desired)
    g.layer_meta["xai"] = {
        "activity_order": [a for a in view.per_activity],
    }
    return g


def view_from_graph(g: KnowledgeGraph) -> XaiView:
    records = g.query_view("xai")
    order = g.layer_meta.get("xai", {}).get("activity_order")
    per_activity: dict[str, dict[str, float]] = {}
    if order:
        for activity in order:
            per_activity[activity] = {}
    for record in records:
        per_activity.setdefault(record["activity"], {})[record["feature"]] = record["importance"]
    return XaiView(per_activity=per_activity)
