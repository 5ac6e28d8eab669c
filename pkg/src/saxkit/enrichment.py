"""Situational rules that enrich or filter an event log before analysis.

A rule file is a JSON array of documents ``{id, scope, when, then}``.  The
``when`` predicate is a small expression tree of ``{"op": ..., "args": [...]}``
nodes over ``{"const": v}``, ``{"attr": key}``, ``{"field": name}``, and
``{"completion": activity}`` leaves; ``then`` either sets an attribute or
drops the matching event.  Rules apply in file order; application is a pure
transformation producing a fresh, re-validated log.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Mapping

from .errors import DuplicateRuleId, RuleSyntaxError, TypeMismatch, UnknownAttribute
from .eventlog import Event, EventLog, Scalar, from_events

logger = logging.getLogger(__name__)

_COMPARISONS = ("eq", "ne", "lt", "le", "gt", "ge")
_BOOLEAN_OPS = ("and", "or", "not")
_ARITHMETIC = ("add", "sub")
_CORE_FIELDS = ("activity", "case_id")
_PROTECTED_KEYS = ("case_id", "activity", "timestamp", "event_id")


@dataclass(frozen=True)
class EnrichmentRule:
    rule_id: str
    scope: str  # "event" | "case"
    predicate: dict
    action: dict  # {"set_attribute": {"key", "value"}} | {"drop_event": True}


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[EnrichmentRule, ...]


def parse_rules(source: str) -> RuleSet:
    """Parse and structurally validate a rule file."""
    try:
        documents = json.loads(source)
    except json.JSONDecodeError as exc:
        raise RuleSyntaxError(exc.msg, line=exc.lineno) from exc
    if not isinstance(documents, list):
        raise RuleSyntaxError("rule file must be a JSON array of rule documents")
    rules = []
    seen: set[str] = set()
    for doc in documents:
        rule = _parse_rule(doc)
        if rule.rule_id in seen:
            raise DuplicateRuleId(rule.rule_id)
        seen.add(rule.rule_id)
        rules.append(rule)
    return RuleSet(rules=tuple(rules))


def render_rules(ruleset: RuleSet) -> str:
    documents = [
        {"id": r.rule_id, "scope": r.scope, "when": r.predicate, "then": r.action}
        for r in ruleset.rules
    ]
    return json.dumps(documents, indent=1, sort_keys=True)


def _parse_rule(doc) -> EnrichmentRule:
    if not isinstance(doc, dict):
        raise RuleSyntaxError("each rule must be a JSON object")
    for key in ("id", "scope", "when", "then"):
        if key not in doc:
            raise RuleSyntaxError(f"rule missing required key {key!r}")
    if doc["scope"] not in ("event", "case"):
        raise RuleSyntaxError(f"rule {doc['id']!r}: scope must be 'event' or 'case'")
    _check_expr(doc["when"], doc["id"])
    then = doc["then"]
    if not isinstance(then, dict) or len(then) != 1:
        raise RuleSyntaxError(f"rule {doc['id']!r}: 'then' must hold exactly one action")
    if "set_attribute" in then:
        action = then["set_attribute"]
        if not isinstance(action, dict) or "key" not in action or "value" not in action:
            raise RuleSyntaxError(f"rule {doc['id']!r}: set_attribute needs 'key' and 'value'")
        if action["key"] in _PROTECTED_KEYS:
            raise RuleSyntaxError(f"rule {doc['id']!r}: cannot overwrite {action['key']!r}")
        _check_expr(action["value"], doc["id"])
    elif "drop_event" in then:
        if doc["scope"] != "event":
            raise RuleSyntaxError(f"rule {doc['id']!r}: drop_event requires event scope")
    else:
        raise RuleSyntaxError(f"rule {doc['id']!r}: unknown action {sorted(then)}")
    return EnrichmentRule(rule_id=str(doc["id"]), scope=doc["scope"],
                          predicate=doc["when"], action=then)


def _check_expr(node, rule_id: str) -> None:
    if not isinstance(node, dict):
        raise RuleSyntaxError(f"rule {rule_id!r}: expression node must be an object, got {node!r}")
    if "const" in node:
        return
    if "attr" in node or "field" in node or "completion" in node:
        return
    op = node.get("op")
    args = node.get("args")
    if op is None or not isinstance(args, list):
        raise RuleSyntaxError(f"rule {rule_id!r}: expression needs 'op' and 'args'")
    if op in _COMPARISONS and len(args) != 2:
        raise RuleSyntaxError(f"rule {rule_id!r}: {op} takes two arguments")
    if op == "not" and len(args) != 1:
        raise RuleSyntaxError(f"rule {rule_id!r}: not takes one argument")
    if op in ("and", "or") and len(args) < 2:
        raise RuleSyntaxError(f"rule {rule_id!r}: {op} takes at least two arguments")
    if op in _ARITHMETIC and len(args) != 2:
        raise RuleSyntaxError(f"rule {rule_id!r}: {op} takes two arguments")
    if op == "within" and len(args) != 3:
        raise RuleSyntaxError(f"rule {rule_id!r}: within takes (activity, activity, seconds)")
    if op not in _COMPARISONS + _BOOLEAN_OPS + _ARITHMETIC + ("within",):
        raise RuleSyntaxError(f"rule {rule_id!r}: unknown op {op!r}")
    if op == "within":
        return  # within takes literal activity names and a number
    for arg in args:
        _check_expr(arg, rule_id)


def _referenced_attrs(node: dict) -> set[str]:
    if "attr" in node:
        return {node["attr"]}
    out: set[str] = set()
    for arg in node.get("args", []):
        if isinstance(arg, dict):
            out |= _referenced_attrs(arg)
    return out


def _within_activities(node: dict) -> set[str]:
    if node.get("op") == "within":
        return {node["args"][0], node["args"][1]}
    out: set[str] = set()
    for arg in node.get("args", []):
        if isinstance(arg, dict):
            out |= _within_activities(arg)
    return out


class _EvalContext:
    """Attribute and timing lookups for one event (event scope) or one case."""

    def __init__(self, rule: EnrichmentRule, event: Event | None,
                 case_attrs: Mapping[str, Scalar], completions: Mapping[str, datetime],
                 case_start: datetime):
        self.rule = rule
        self.event = event
        self.case_attrs = case_attrs
        self.completions = completions
        self.case_start = case_start

    def leaf(self, node: dict):
        if "const" in node:
            return node["const"]
        if "attr" in node:
            key = node["attr"]
            if self.event is not None and key in self.event.attributes:
                return self.event.attributes[key]
            if key in self.case_attrs:
                return self.case_attrs[key]
            return None
        if "field" in node:
            if self.event is None:
                raise TypeMismatch(self.rule.rule_id, "field reference in case scope")
            if node["field"] == "activity":
                return self.event.activity
            if node["field"] == "case_id":
                return self.event.case_id
            raise TypeMismatch(self.rule.rule_id, f"unknown field {node['field']!r}")
        if "completion" in node:
            ts = self.completions.get(node["completion"])
            return None if ts is None else (ts - self.case_start).total_seconds()
        return None

    def evaluate(self, node: dict):
        if "op" not in node:
            return self.leaf(node)
        op = node["op"]
        if op == "within":
            a, b, limit = node["args"]
            ta, tb = self.completions.get(a), self.completions.get(b)
            if ta is None or tb is None:
                return False
            return (tb - ta).total_seconds() <= float(limit)
        args = [self.evaluate(arg) for arg in node["args"]]
        if op == "and":
            return all(bool(a) for a in args)
        if op == "or":
            return any(bool(a) for a in args)
        if op == "not":
            return not bool(args[0])
        left, right = args
        if op in _ARITHMETIC:
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (left, right)):
                raise TypeMismatch(self.rule.rule_id, f"{op} needs numbers, got {left!r}, {right!r}")
            return left + right if op == "add" else left - right
        if op == "eq":
            return left == right
        if op == "ne":
            return left != right
        if left is None or right is None:
            return False
        try:
            if op == "lt":
                return left < right
            if op == "le":
                return left <= right
            if op == "gt":
                return left > right
            if op == "ge":
                return left >= right
        except TypeError as exc:
            raise TypeMismatch(self.rule.rule_id, str(exc)) from exc
        raise TypeMismatch(self.rule.rule_id, f"unknown op {op!r}")


def apply_rules(log: EventLog, ruleset: RuleSet) -> EventLog:
    """Apply rules in order and return the enriched, re-validated log.

    Cases left without events by drop rules are removed (and logged); applying
    ``[r1, r2]`` equals applying r1 then r2 to the intermediate log.
    """
    current = log
    for rule in ruleset.rules:
        _validate_rule_against(current, rule)
        current = _apply_one(current, rule)
    return current


def _validate_rule_against(log: EventLog, rule: EnrichmentRule) -> None:
    known = set(log.attribute_schema)
    exprs = [rule.predicate]
    if "set_attribute" in rule.action:
        exprs.append(rule.action["set_attribute"]["value"])
    for expr in exprs:
        for key in _referenced_attrs(expr):
            if key not in known:
                raise UnknownAttribute(rule.rule_id, key)
        for name in _within_activities(expr):
            if name not in log.activity_universe:
                raise UnknownAttribute(rule.rule_id, name)


def _apply_one(log: EventLog, rule: EnrichmentRule) -> EventLog:
    events: list[Event] = []
    case_attributes: dict[str, dict[str, Scalar]] = {}
    dropped_cases: list[str] = []
    for trace in log.traces.values():
        completions = {}
        for ev in trace.events:  # last completion wins for repeated activities
            completions[ev.activity] = ev.timestamp
        case_start = trace.events[0].timestamp
        case_attrs = dict(trace.attributes)

        if rule.scope == "case":
            ctx = _EvalContext(rule, None, case_attrs, completions, case_start)
            if ctx.evaluate(rule.predicate):
                spec = rule.action["set_attribute"]
                value = ctx.evaluate(spec["value"])
                if value is not None:  # absent source attribute leaves the target absent
                    case_attrs[spec["key"]] = value
            kept = list(trace.events)
        else:
            kept = []
            for ev in trace.events:
                ctx = _EvalContext(rule, ev, case_attrs, completions, case_start)
                if not ctx.evaluate(rule.predicate):
                    kept.append(ev)
                    continue
                if "drop_event" in rule.action:
                    continue
                spec = rule.action["set_attribute"]
                value = ctx.evaluate(spec["value"])
                if value is None:
                    kept.append(ev)
                else:
                    kept.append(replace(ev, attributes={**ev.attributes, spec["key"]: value}))

        if not kept:
            dropped_cases.append(trace.case_id)
            continue
        events.extend(kept)
        case_attributes[trace.case_id] = case_attrs
    if dropped_cases:
        logger.warning("rule %r removed all events of %d case(s): %s",
                       rule.rule_id, len(dropped_cases), ", ".join(dropped_cases))
    return from_events(events, case_attributes)
