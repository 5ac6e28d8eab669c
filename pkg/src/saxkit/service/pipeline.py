"""Pipeline stages over a workspace: ingest, discover, enrich, causal, xai, prompt, ask.

Each stage reads its inputs from the workspace, writes its artifacts (and the
serialized knowledge graph) back, and is deterministic given the seed, so a
rerun with unchanged inputs reproduces every digest.  Stage failures surface
as :class:`StageError` carrying the machine-readable payload
``{stage, code, message, details}``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources

from .. import causal, discovery, enrichment, promptsynth, xai
from ..errors import SaxError, ViewAbsent
from ..eventlog import EventLog, export_csv, parse_csv, parse_xes, validate
from ..graphstore import KnowledgeGraph
from ..promptsynth import IngredientSelection, LlmConfig
from . import workspace as ws_paths
from .simulator import PARKING_ACTIVITIES, ScenarioSpec, parking_scenario, simulate
from .workspace import Workspace

MOCK_ENV = "SAX_MOCK_LLM"
ENDPOINT_ENV = "SAX_LLM_ENDPOINT"

PARKING_QUESTION = (
    "why does the processing of fines for cars that are parked "
    "within hazardous locations take so long"
)
PARKING_FEATURES = (
    "region in city",
    "filling out hazardous circumstances",
    "driver's credits",
    "choice of towing company",
)


class StageError(SaxError):
    def __init__(self, stage: str, cause: SaxError | Exception):
        super().__init__(str(cause))
        self.stage = stage
        self.cause = cause

    def payload(self) -> dict:
        code = getattr(self.cause, "code", "error")
        return {"stage": self.stage, "code": code, "message": str(self.cause), "details": {}}


def _stage(name: str):
    def wrap(fn):
        def runner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        runner.__name__ = fn.__name__
        runner.__doc__ = fn.__doc__
        return runner
    return wrap


# --- graph persistence ------------------------------------------------------------


def save_graph(ws: Workspace, g: KnowledgeGraph) -> None:
    ws.write(ws_paths.GRAPH, g.to_ndjson())
    ws.write(ws_paths.GRAPH_META, json.dumps(
        {"layer_versions": g.layer_versions, "layer_meta": g.layer_meta},
        indent=1, sort_keys=True))


def load_graph(ws: Workspace) -> KnowledgeGraph:
    if not ws.exists(ws_paths.GRAPH):
        raise ViewAbsent("graph")
    g = KnowledgeGraph.from_ndjson(ws.read_text(ws_paths.GRAPH))
    if ws.exists(ws_paths.GRAPH_META):
        meta = json.loads(ws.read_text(ws_paths.GRAPH_META))
        g.layer_versions.update(meta.get("layer_versions", {}))
        g.layer_meta.update(meta.get("layer_meta", {}))
    return g


def _load_log(ws: Workspace, relpath: str) -> EventLog:
    return parse_csv(ws.read_bytes(relpath))


def _current_log(ws: Workspace) -> EventLog:
    if ws.exists(ws_paths.ENRICHED_LOG):
        return _load_log(ws, ws_paths.ENRICHED_LOG)
    return _load_log(ws, ws_paths.NORMALIZED_LOG)


# --- stages ----------------------------------------------------------------------


@_stage("simulate")
def simulate_stage(ws: Workspace, spec: ScenarioSpec | None = None, seed: int = 17) -> str:
    spec = spec or parking_scenario(seed)
    log = simulate(spec)
    ws.write(ws_paths.RAW_LOG, export_csv(log))
    return ws_paths.RAW_LOG


@_stage("ingest")
def ingest_stage(ws: Workspace, source: bytes | None = None, fmt: str = "csv",
                 delimiter: str = ",") -> dict:
    """Parse, validate, and normalize a log; build the base graph and infer DF."""
    if source is None:
        fallback = ws_paths.RAW_LOG if ws.exists(ws_paths.RAW_LOG) else ws_paths.NORMALIZED_LOG
        source = ws.read_bytes(fallback)
    log = parse_xes(source) if fmt == "xes" else parse_csv(source, delimiter=delimiter)
    violations = validate(log)
    if violations:
        raise SaxError(f"log violates invariants: {violations[:3]}")
    ws.write(ws_paths.NORMALIZED_LOG, export_csv(log))
    ws.drop(ws_paths.ENRICHED_LOG)
    g = KnowledgeGraph()
    g.load_log(log)
    g.infer_directly_follows()
    save_graph(ws, g)
    return {"cases": log.case_count, "events": log.event_count,
            "activities": sorted(log.activity_universe)}


@_stage("enrich")
def enrich_stage(ws: Workspace, rules_source: str) -> dict:
    """Apply situational rules; the enriched log replaces the graph's base layer."""
    ruleset = enrichment.parse_rules(rules_source)
    log = _load_log(ws, ws_paths.NORMALIZED_LOG)
    enriched = enrichment.apply_rules(log, ruleset)
    ws.write(ws_paths.ENRICHED_LOG, export_csv(enriched))
    old = load_graph(ws) if ws.exists(ws_paths.GRAPH) else None
    g = KnowledgeGraph()
    g.load_log(enriched)
    g.infer_directly_follows()
    if old is not None and old.layer_versions["process"] > 0:
        discovery.write_process_layer(g, discovery.view_from_graph(old))
    save_graph(ws, g)
    return {"rules": len(ruleset.rules), "attributes": sorted(enriched.attribute_schema)}


@_stage("discover")
def discover_stage(ws: Workspace, cfg: discovery.DiscoveryConfig | None = None) -> str:
    g = load_graph(ws)
    view = discovery.discover(g, cfg or discovery.DiscoveryConfig())
    ws.write(ws_paths.PROCESS_VIEW, discovery.export_process_json(view))
    save_graph(ws, g)
    return ws_paths.PROCESS_VIEW


@_stage("causal")
def causal_stage(ws: Workspace, cfg: causal.CausalConfig | None = None) -> str:
    cfg = cfg or causal.CausalConfig()
    g = load_graph(ws)
    matrix = causal.build_timing_matrix(g, cfg)
    ws.write(ws_paths.TIMING_MATRIX, matrix.to_csv())
    view = causal.direct_lingam(matrix, cfg)
    causal.write_causal_layer(g, view)
    meta = g.layer_meta.get("process", {})
    ws.write(ws_paths.CAUSAL_VIEW, causal.export_causal_json(
        view,
        start_marker=meta.get("start_marker", discovery.DEFAULT_START_MARKER),
        end_marker=meta.get("end_marker", discovery.DEFAULT_END_MARKER),
    ))
    save_graph(ws, g)
    return ws_paths.CAUSAL_VIEW


@_stage("xai")
def xai_stage(
    ws: Workspace,
    cond: xai.ConditionSpec,
    activities: tuple[str, ...] | None = None,
    feature_names: tuple[str, ...] | None = None,
    include_timing: bool = True,
    seed: int = 17,
    n_repeats: int = 10,
) -> str:
    g = load_graph(ws)
    table = xai.build_feature_table(g, cond, activities=activities,
                                    feature_names=feature_names,
                                    include_timing=include_timing)
    ws.write(ws_paths.FEATURE_TABLE, table.to_csv())
    model = xai.train_surrogate(table, seed=seed)
    view = xai.importance(model, table, n_repeats=n_repeats, seed=seed)
    xai.write_xai_layer(g, view)
    ws.write(ws_paths.XAI_VIEW, xai.export_xai_json(view))
    save_graph(ws, g)
    return ws_paths.XAI_VIEW


@_stage("prompt")
def prompt_stage(ws: Workspace, sel: IngredientSelection, question: str,
                 brevity: bool = False) -> promptsynth.PromptBundle:
    g = load_graph(ws)
    bundle = promptsynth.render_prompt(g, sel, question, brevity=brevity)
    ws.write(ws_paths.PROMPT, bundle.rendered)
    ws.write(ws_paths.PROMPT_BUNDLE, json.dumps({
        "selection": {v: getattr(sel, v) for v in promptsynth.VIEW_ORDER},
        "question": bundle.question,
        "ingredient_digests": bundle.ingredient_digests,
    }, indent=1, sort_keys=True))
    return bundle


def default_client(cfg: LlmConfig) -> promptsynth.LlmClient:
    """Mock client when SAX_MOCK_LLM=1, HTTP client against the configured endpoint otherwise."""
    if os.environ.get(MOCK_ENV) == "1":
        canned = resources.files("saxkit.fixtures").joinpath("mock_explanation.txt") \
            .read_text(encoding="utf-8").strip()
        return promptsynth.mock_client([canned] * 16)
    endpoint = cfg.endpoint_url or os.environ.get(ENDPOINT_ENV, "")
    if not endpoint:
        raise SaxError(f"no LLM endpoint configured; set {ENDPOINT_ENV} or {MOCK_ENV}=1")
    return promptsynth.HttpLlmClient(endpoint)


@_stage("ask")
def ask_stage(
    ws: Workspace,
    sel: IngredientSelection,
    question: str,
    cfg: LlmConfig | None = None,
    client: promptsynth.LlmClient | None = None,
    brevity: bool = False,
) -> promptsynth.Explanation:
    cfg = cfg or LlmConfig()
    bundle = prompt_stage(ws, sel, question, brevity=brevity)
    client = client or default_client(cfg)
    explanation = promptsynth.ask(bundle, cfg, client)
    ws.write(ws_paths.ANSWER, json.dumps({
        "model": cfg.model_name,
        "question": bundle.question,
        "explanation": explanation.text,
        "usage": explanation.usage,
    }, indent=1, sort_keys=True))
    return explanation


# --- whole-pipeline driver -----------------------------------------------------------


@dataclass(frozen=True)
class PipelineFlags:
    log: bytes | None = None  # raw log bytes; None = use the workspace's raw log
    log_format: str = "csv"
    rules: str | None = None
    condition: xai.ConditionSpec | None = None
    select: IngredientSelection = field(
        default_factory=lambda: IngredientSelection(process=True))
    question: str | None = None
    seed: int = 17
    discovery_cfg: discovery.DiscoveryConfig = field(default_factory=discovery.DiscoveryConfig)
    causal_activities: tuple[str, ...] | None = None
    xai_activities: tuple[str, ...] | None = None
    xai_features: tuple[str, ...] | None = None
    include_timing: bool = True
    ask: bool = False
    llm: LlmConfig = field(default_factory=LlmConfig)


def parking_flags(seed: int = 17, ask: bool = False) -> PipelineFlags:
    """Flags reproducing the worked parking-fines analysis end to end."""
    a = PARKING_ACTIVITIES
    hazardous = (a["verify"], a["check"], a["extended"], a["tow"])
    rules = resources.files("saxkit.fixtures").joinpath("parking_rules.json") \
        .read_text(encoding="utf-8")
    return PipelineFlags(
        rules=rules,
        condition=xai.ConditionSpec(target="case_duration"),
        select=IngredientSelection(process=True, causal=True, xai=True),
        question=PARKING_QUESTION,
        seed=seed,
        causal_activities=hazardous,
        xai_activities=hazardous,
        xai_features=PARKING_FEATURES,
        include_timing=False,
        ask=ask,
    )


def run_pipeline(ws: Workspace, flags: PipelineFlags,
                 client: promptsynth.LlmClient | None = None) -> dict:
    """Execute ingest through prompt (and optionally ask) per the flags.

    Returns the workspace manifest; raises :class:`StageError` on the first
    failing stage.
    """
    ws.init()
    ingest_stage(ws, source=flags.log, fmt=flags.log_format)
    discover_stage(ws, flags.discovery_cfg)
    if flags.rules is not None:
        enrich_stage(ws, flags.rules)
    if flags.select.causal:
        variant = flags.causal_activities if flags.causal_activities else "most_frequent"
        causal_stage(ws, causal.CausalConfig(variant_selection=variant, seed=flags.seed))
    if flags.select.xai:
        if flags.condition is None:
            raise StageError("xai", SaxError("an XAI run needs a condition"))
        xai_stage(ws, flags.condition, activities=flags.xai_activities,
                  feature_names=flags.xai_features,
                  include_timing=flags.include_timing, seed=flags.seed)
    if flags.question is not None:
        if flags.ask:
            ask_stage(ws, flags.select, flags.question, cfg=flags.llm, client=client)
        else:
            prompt_stage(ws, flags.select, flags.question)
    return ws.manifest()
