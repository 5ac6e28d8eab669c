"""Causal execution-dependency discovery over per-case activity timings.

Activities' completion times (relative to case start) form the rows of a
timing matrix; a linear non-Gaussian acyclic estimator orders the variables by
iteratively extracting the most exogenous one and regressing it out, then
estimates edge coefficients by least squares along the discovered order.
Coefficient pruning and a temporal-precedence filter turn the dense adjacency
into the exported causal view.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array

from .discovery import DEFAULT_END_MARKER, DEFAULT_START_MARKER
from .errors import (
    ActivityRepeatsInVariant,
    DegenerateColumn,
    InsufficientSamples,
    NoCompleteCases,
    UnknownActivity,
)
from .graphstore import KnowledgeGraph, activity_node_id

# constants of the maximum-entropy negentropy approximation
_K1 = 79.047
_K2 = 7.4129
_GAMMA = 0.37457


@dataclass(frozen=True)
class CausalConfig:
    coefficient_prune_threshold: float = 0.05
    respect_temporal_precedence: bool = True
    variant_selection: str | tuple[str, ...] = "most_frequent"
    seed: int = 0

    def __post_init__(self):
        if self.coefficient_prune_threshold < 0:
            raise ValueError("coefficient_prune_threshold must be >= 0")
        if isinstance(self.variant_selection, str):
            if self.variant_selection not in ("most_frequent", "all_complete"):
                raise ValueError(
                    "variant_selection must be 'most_frequent', 'all_complete', "
                    "or an explicit tuple of activity names"
                )


@dataclass(frozen=True)
class TimingMatrix:
    variables: tuple[str, ...]
    rows: np.ndarray  # (n_cases, n_variables) seconds since case start
    case_ids: tuple[str, ...]
    variant_key: tuple[str, ...]

    def medians(self) -> dict[str, float]:
        med = np.median(self.rows, axis=0)
        return {name: float(m) for name, m in zip(self.variables, med)}

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["case_id", *self.variables])
        for case_id, row in zip(self.case_ids, self.rows):
            writer.writerow([case_id, *(f"{v:.3f}" for v in row)])
        return out.getvalue()


@dataclass(frozen=True)
class CausalEdge:
    cause: str
    effect: str
    coefficient: float


@dataclass(frozen=True)
class CausalView:
    edges: tuple[CausalEdge, ...]
    order: tuple[str, ...] = field(default_factory=tuple)


class DirectLiNGAM(BaseEstimator):
    """Direct estimation of a linear non-Gaussian acyclic model.

    The causal order is found by repeatedly selecting the variable whose
    pairwise regression residuals look most independent of it, judged by a
    log-cosh negentropy approximation of the pairwise likelihood ratio, then
    replacing the remaining variables by their residuals.  Coefficients are
    ordinary least squares of each variable on its predecessors.

    Attributes
    ----------
    causal_order_ : list of int
        Column indices from most exogenous to most endogenous.
    adjacency_ : ndarray of shape (n_features, n_features)
        ``adjacency_[i, j]`` is the direct effect of column ``j`` on column ``i``;
        zero wherever ``j`` does not precede ``i`` in the causal order.
    """

    def __init__(self, random_state: int | None = None):
        self.random_state = random_state

    def fit(self, X) -> "DirectLiNGAM":
        X = check_array(X, dtype=float)
        n_features = X.shape[1]
        remaining = list(range(n_features))
        order: list[int] = []
        residuals = X.copy()
        for _ in range(n_features):
            m = self._most_exogenous(residuals, remaining)
            for j in remaining:
                if j != m:
                    residuals[:, j] = _residual(residuals[:, j], residuals[:, m])
            order.append(m)
            remaining.remove(m)
        self.causal_order_ = order
        self.adjacency_ = self._least_squares_adjacency(X, order)
        return self

    @staticmethod
    def _most_exogenous(X: np.ndarray, candidates: list[int]) -> int:
        if len(candidates) == 1:
            return candidates[0]
        scores = []
        for i in candidates:
            xi = _standardize(X[:, i])
            total = 0.0
            for j in candidates:
                if i == j:
                    continue
                xj = _standardize(X[:, j])
                ri_j = _residual(xi, xj)
                rj_i = _residual(xj, xi)
                total += min(0.0, _pairwise_ratio(xi, xj, ri_j, rj_i)) ** 2
            scores.append(total)
        return candidates[int(np.argmin(scores))]

    @staticmethod
    def _least_squares_adjacency(X: np.ndarray, order: list[int]) -> np.ndarray:
        n_features = X.shape[1]
        B = np.zeros((n_features, n_features))
        for position in range(1, len(order)):
            target = order[position]
            predecessors = order[:position]
            design = np.column_stack([X[:, predecessors], np.ones(len(X))])
            coeffs, *_ = np.linalg.lstsq(design, X[:, target], rcond=None)
            for j, value in zip(predecessors, coeffs[:-1]):
                B[target, j] = value
        return B


def _standardize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / x.std()


def _residual(xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
    return xi - (np.cov(xi, xj, bias=True)[0, 1] / np.var(xj)) * xj


def _negentropy_proxy(u: np.ndarray) -> float:
    """Maximum-entropy approximation of differential entropy for a standardized sample."""
    return (1 + np.log(2 * np.pi)) / 2 \
        - _K1 * (np.mean(np.log(np.cosh(u))) - _GAMMA) ** 2 \
        - _K2 * np.mean(u * np.exp(-(u ** 2) / 2)) ** 2


def _pairwise_ratio(xi_std, xj_std, ri_j, rj_i) -> float:
    """Likelihood-ratio proxy for xi -> xj versus xj -> xi; negative favors the latter."""
    return (_negentropy_proxy(xj_std) + _negentropy_proxy(ri_j / ri_j.std())) \
        - (_negentropy_proxy(xi_std) + _negentropy_proxy(rj_i / rj_i.std()))


# --- timing matrix ---------------------------------------------------------------


def build_timing_matrix(g: KnowledgeGraph, cfg: CausalConfig = CausalConfig()) -> TimingMatrix:
    """Per-case relative completion times of the selected variant's activities.

    A row is included only for cases executing every selected activity exactly
    once; times are seconds since the case's first event.
    """
    cases = {}
    for case_id in g.case_ids():
        events = g.case_events(case_id)
        cases[case_id] = [(e.properties["activity"], e.properties["timestamp"]) for e in events]

    if isinstance(cfg.variant_selection, str) and cfg.variant_selection == "most_frequent":
        variants: dict[tuple[str, ...], int] = {}
        for seq in cases.values():
            key = tuple(a for a, _ in seq)
            variants[key] = variants.get(key, 0) + 1
        if not variants:
            raise NoCompleteCases("log contains no cases")
        variant = max(sorted(variants), key=lambda k: variants[k])
        selected = list(dict.fromkeys(variant))
        if len(selected) != len(variant):
            raise ActivityRepeatsInVariant(next(a for a in variant if variant.count(a) > 1))
    elif isinstance(cfg.variant_selection, str):  # all_complete
        selected = sorted({a for seq in cases.values() for a, _ in seq})
    else:
        selected = list(cfg.variant_selection)

    rows = []
    case_ids = []
    for case_id in sorted(cases):
        seq = cases[case_id]
        names = [a for a, _ in seq]
        if any(names.count(a) != 1 for a in selected):
            continue
        start = seq[0][1]
        completion = {a: (ts - start).total_seconds() for a, ts in seq}
        rows.append([completion[a] for a in selected])
        case_ids.append(case_id)
    if not rows:
        raise NoCompleteCases(
            f"no case executes all of {selected} exactly once"
        )
    return TimingMatrix(
        variables=tuple(selected),
        rows=np.asarray(rows, dtype=float),
        case_ids=tuple(case_ids),
        variant_key=tuple(selected),
    )


# --- view assembly ----------------------------------------------------------------


def direct_lingam(matrix: TimingMatrix, cfg: CausalConfig = CausalConfig()) -> CausalView:
    """Estimate the causal view from a timing matrix.

    Constant columns are removed with a warning; at least max(30, 5 * variables)
    rows are required.  Coefficients below the pruning threshold are dropped,
    and, when temporal precedence is respected, so are edges whose cause's
    median completion time exceeds the effect's.  The returned order is the
    discovered causal order, stably refined by median completion time so
    boundary markers attach to the temporally first and last activities.
    """
    X = matrix.rows
    needed = max(30, 5 * len(matrix.variables))
    if X.shape[0] < needed:
        raise InsufficientSamples(X.shape[0], needed)

    variances = X.var(axis=0)
    keep = [i for i, v in enumerate(variances) if v > 0]
    dropped = [matrix.variables[i] for i, v in enumerate(variances) if v <= 0]
    if dropped:
        warnings.warn(
            f"dropping constant timing column(s): {', '.join(dropped)}",
            UserWarning, stacklevel=2,
        )
    if len(keep) < 2:
        raise DegenerateColumn("fewer than two non-constant timing columns remain")
    names = [matrix.variables[i] for i in keep]
    X = X[:, keep]

    model = DirectLiNGAM(random_state=cfg.seed).fit(X)
    medians = matrix.medians()

    order = [names[i] for i in model.causal_order_]
    if cfg.respect_temporal_precedence:
        # stable refinement by median completion keeps cause-before-effect (the
        # temporal filter below guarantees median(cause) <= median(effect)) and
        # pins the boundary markers to the temporally first and last activities
        order.sort(key=lambda a: medians[a])

    edges = []
    for effect_idx in range(len(names)):
        for cause_idx in range(len(names)):
            b = model.adjacency_[effect_idx, cause_idx]
            if abs(b) < cfg.coefficient_prune_threshold or b == 0.0:
                continue
            cause, effect = names[cause_idx], names[effect_idx]
            if cfg.respect_temporal_precedence and medians[cause] > medians[effect]:
                continue
            edges.append(CausalEdge(cause=cause, effect=effect, coefficient=float(b)))

    position = {name: i for i, name in enumerate(order)}
    edges.sort(key=lambda e: (position[e.cause], e.effect))
    return CausalView(edges=tuple(edges), order=tuple(order))


def write_causal_layer(g: KnowledgeGraph, view: CausalView) -> KnowledgeGraph:
    """Write CAUSES edges with coefficients and recompute the INDIRECTLY_CAUSES closure."""
    for edge in view.edges:
        for name in (edge.cause, edge.effect):
            if activity_node_id(name) not in g.nodes:
                raise UnknownActivity(name)
    desired = {
        (activity_node_id(e.cause), activity_node_id(e.effect)): {"coefficient": e.coefficient}
        for e in view.edges
    }
    g.replace_layer_rels("causal", "CAUSES", desired)
    g.transitive_closure("CAUSES")
    g.layer_meta["causal"] = {"order": list(view.order)}
    return g


def view_from_graph(g: KnowledgeGraph) -> CausalView:
    records = g.query_view("causal")
    order = tuple(g.layer_meta.get("causal", {}).get("order", ()))
    edges = [CausalEdge(r["Cause"], r["Effect"], float(r["Coefficient"])) for r in records]
    position = {name: i for i, name in enumerate(order)}
    edges.sort(key=lambda e: (position.get(e.cause, len(position)), e.effect))
    return CausalView(edges=tuple(edges), order=order)


# --- export ------------------------------------------------------------------------


def format_coefficient(value: float) -> str:
    return f"{value:.8g}"


def export_causal_json(
    view: CausalView,
    start_marker: str = DEFAULT_START_MARKER,
    end_marker: str = DEFAULT_END_MARKER,
) -> str:
    """One record per edge, boundary marker records first and last at coefficient 1.00.

    Records follow the causal order of their cause, ties broken by effect name.
    """
    records = []
    if view.order:
        records.append({"Cause": start_marker, "Effect": view.order[0], "Coefficient": "1.00"})
    records.extend(
        {"Cause": e.cause, "Effect": e.effect, "Coefficient": format_coefficient(e.coefficient)}
        for e in view.edges
    )
    if view.order:
        records.append({"Cause": view.order[-1], "Effect": end_marker, "Coefficient": "1.00"})
    if not records:
        return "[]"
    return "[\n" + ",\n".join(json.dumps(r) for r in records) + "\n]"


def parse_causal_json(
    text: str,
    start_marker: str = DEFAULT_START_MARKER,
    end_marker: str = DEFAULT_END_MARKER,
) -> CausalView:
    """Inverse of :func:`export_causal_json`; marker records are stripped back off.

    The recovered order is topological with ties by name, anchored so the
    activities named by the marker records stay first and last; re-exporting a
    parsed view therefore reproduces the text.
    """
    records = json.loads(text)
    first = last = None
    edges = []
    for r in records:
        if r["Cause"] == start_marker:
            first = r["Effect"]
        elif r["Effect"] == end_marker:
            last = r["Cause"]
        else:
            edges.append(CausalEdge(r["Cause"], r["Effect"], float(r["Coefficient"])))
    names = {e.cause for e in edges} | {e.effect for e in edges}
    names |= {n for n in (first, last) if n is not None}
    order = _anchored_order(sorted(names), edges, first, last)
    return CausalView(edges=tuple(edges), order=order)


def _anchored_order(nodes: list[str], edges: list[CausalEdge],
                    first: str | None, last: str | None) -> tuple[str, ...]:
    remaining = set(nodes)
    order: list[str] = []
    if first in remaining:
        order.append(first)
        remaining.remove(first)
    hold_back = {last} if last in remaining and len(remaining) > 1 else set()
    while remaining:
        ready = sorted(
            n for n in remaining - hold_back
            if all(e.effect != n or e.cause not in remaining for e in edges)
        )
        if not ready:
            ready = sorted(remaining - hold_back) or sorted(remaining)
        order.append(ready[0])
        remaining.remove(ready[0])
        if remaining == hold_back:
            order.extend(sorted(hold_back))
            remaining.clear()
    return tuple(order)
