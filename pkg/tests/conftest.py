import warnings
from importlib import resources

import pytest

from saxkit import causal, discovery, enrichment
from saxkit.graphstore import KnowledgeGraph
from saxkit.service.simulator import PARKING_ACTIVITIES, parking_scenario, simulate

HAZARDOUS_VARIANT = (
    PARKING_ACTIVITIES["verify"],
    PARKING_ACTIVITIES["check"],
    PARKING_ACTIVITIES["extended"],
    PARKING_ACTIVITIES["tow"],
)

PARKING_FEATURE_NAMES = (
    "region in city",
    "filling out hazardous circumstances",
    "driver's credits",
    "choice of towing company",
)

PARKING_EDGES = {
    ("EVENT 1 START", "verify disabled parking permit"): 1000,
    ("verify disabled parking permit", "check if hazardous parking"): 893,
    ("check if hazardous parking", "submit fine"): 644,
    ("submit fine", "EVENT 3 END"): 644,
    ("check if hazardous parking", "submit extended fine"): 249,
    ("submit extended fine", "call a tow truck"): 249,
    ("call a tow truck", "EVENT 3 END"): 249,
    ("verify disabled parking permit", "EVENT 3 END"): 107,
}


def parking_rules_text() -> str:
    return resources.files("saxkit.fixtures").joinpath("parking_rules.json") \
        .read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def parking_log():
    return simulate(parking_scenario(17))


@pytest.fixture(scope="session")
def parking_graph(parking_log):
    g = KnowledgeGraph().load_log(parking_log)
    g.infer_directly_follows()
    discovery.discover(g)
    return g


@pytest.fixture(scope="session")
def enriched_parking_graph(parking_log):
    ruleset = enrichment.parse_rules(parking_rules_text())
    enriched = enrichment.apply_rules(parking_log, ruleset)
    g = KnowledgeGraph().load_log(enriched)
    g.infer_directly_follows()
    discovery.discover(g)
    return g


def hazardous_causal_view(graph, seed=17):
    cfg = causal.CausalConfig(variant_selection=HAZARDOUS_VARIANT, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        matrix = causal.build_timing_matrix(graph, cfg)
        return causal.direct_lingam(matrix, cfg)
