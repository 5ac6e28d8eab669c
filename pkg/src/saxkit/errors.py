"""Exception types shared across the toolkit."""

from __future__ import annotations


class SaxError(Exception):
    """Base class for all toolkit errors."""

    code = "error"

    def payload(self) -> dict:
        return {"code": self.code, "message": str(self)}


# --- event log ingestion ---------------------------------------------------

class MissingColumn(SaxError):
    code = "missing-column"

    def __init__(self, name: str):
        super().__init__(f"required column {name!r} not found in header")
        self.name = name


class UnparseableTimestamp(SaxError):
    code = "unparseable-timestamp"

    def __init__(self, row: int, value: str = ""):
        super().__init__(f"row {row}: cannot parse timestamp {value!r}")
        self.row = row
        self.value = value


class EmptyLog(SaxError):
    code = "empty-log"


class MalformedXml(SaxError):
    code = "malformed-xml"


class MissingExtension(SaxError):
    code = "missing-extension"


class DuplicateEventId(SaxError):
    code = "duplicate-event-id"


# --- graph store ------------------------------------------------------------

class DuplicateLog(SaxError):
    code = "duplicate-log"


class CyclicBase(SaxError):
    code = "cyclic-base"


class ViewAbsent(SaxError):
    code = "view-absent"

    def __init__(self, view: str):
        super().__init__(f"view {view!r} has not been produced yet")
        self.view = view


class MissingDirectlyFollows(SaxError):
    code = "missing-directly-follows"


class UnknownActivity(SaxError):
    code = "unknown-activity"

    def __init__(self, activity: str):
        super().__init__(f"activity {activity!r} is not present in the graph")
        self.activity = activity


# --- causal discovery -------------------------------------------------------

class NoCompleteCases(SaxError):
    code = "no-complete-cases"


class ActivityRepeatsInVariant(SaxError):
    code = "activity-repeats-in-variant"

    def __init__(self, activity: str):
        super().__init__(f"activity {activity!r} occurs more than once in the selected variant")
        self.activity = activity


class InsufficientSamples(SaxError):
    code = "insufficient-samples"

    def __init__(self, have: int, need: int):
        super().__init__(f"{have} rows available, at least {need} required")
        self.have = have
        self.need = need


class DegenerateColumn(SaxError):
    code = "degenerate-column"


# --- enrichment -------------------------------------------------------------

class RuleSyntaxError(SaxError):
    code = "rule-syntax-error"

    def __init__(self, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


class DuplicateRuleId(SaxError):
    code = "duplicate-rule-id"

    def __init__(self, rule_id: str):
        super().__init__(f"rule id {rule_id!r} appears more than once")
        self.rule_id = rule_id


class UnknownAttribute(SaxError):
    code = "unknown-attribute"

    def __init__(self, rule_id: str, key: str):
        super().__init__(f"rule {rule_id!r} references undeclared attribute {key!r}")
        self.rule_id = rule_id
        self.key = key


class TypeMismatch(SaxError):
    code = "type-mismatch"

    def __init__(self, rule_id: str, detail: str = ""):
        super().__init__(f"rule {rule_id!r}: incompatible operand types{': ' + detail if detail else ''}")
        self.rule_id = rule_id


# --- XAI ----------------------------------------------------------------------

class UnknownTarget(SaxError):
    code = "unknown-target"


class NoRows(SaxError):
    code = "no-rows"


class InsufficientRows(SaxError):
    code = "insufficient-rows"

    def __init__(self, have: int, need: int):
        super().__init__(f"{have} rows available, at least {need} required")
        self.have = have
        self.need = need


class SchemaMismatch(SaxError):
    code = "schema-mismatch"


# --- prompt synthesis / LLM ---------------------------------------------------

class EmptyQuestion(SaxError):
    code = "empty-question"


class TransportError(SaxError):
    code = "transport"


class AuthFailure(SaxError):
    code = "auth-failure"


class RateLimited(SaxError):
    code = "rate-limited"

    def __init__(self, retry_after: float | None = None):
        super().__init__(
            "rate limited" + (f", retry after {retry_after}s" if retry_after is not None else "")
        )
        self.retry_after = retry_after


class ModelRefusal(SaxError):
    code = "model-refusal"


class ScriptExhausted(SaxError):
    code = "script-exhausted"


# --- simulator / workspace ------------------------------------------------------

class InconsistentSpec(SaxError):
    code = "inconsistent-spec"
