"""Event log parsing, validation, and normalization.

Canonical in-memory representation: an :class:`EventLog` is an immutable
collection of traces, each an ordered sequence of events.  All timestamps are
timezone-aware UTC instants truncated to millisecond precision.  Parsing is a
pure function of its inputs; identical bytes and mapping yield structurally
identical logs.
"""

from __future__ import annotations

import csv
import io
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import IO, Iterable, Mapping, Union

from .errors import (
    DuplicateEventId,
    EmptyLog,
    MalformedXml,
    MissingColumn,
    MissingExtension,
    UnparseableTimestamp,
)

logger = logging.getLogger(__name__)

Scalar = Union[str, int, float, bool, datetime]

#: attribute schema type names, in inference priority order
TYPE_BOOLEAN = "boolean"
TYPE_INTEGER = "integer"
TYPE_FLOAT = "float"
TYPE_INSTANT = "instant"
TYPE_STRING = "string"

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")

CORE_COLUMNS = ("case_id", "activity", "timestamp", "event_id")


@dataclass(frozen=True)
class Event:
    event_id: str
    case_id: str
    activity: str
    timestamp: datetime
    attributes: Mapping[str, Scalar] = field(default_factory=dict)


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]
    attributes: Mapping[str, Scalar] = field(default_factory=dict)


@dataclass(frozen=True)
class EventLog:
    """Traces keyed by case id, plus the inferred per-key attribute schema."""

    traces: Mapping[str, Trace]
    activity_universe: frozenset[str]
    attribute_schema: Mapping[str, str]

    def __iter__(self):
        return iter(self.traces.values())

    @property
    def case_count(self) -> int:
        return len(self.traces)

    @property
    def event_count(self) -> int:
        return sum(len(t.events) for t in self.traces.values())

    def events(self) -> Iterable[Event]:
        for trace in self.traces.values():
            yield from trace.events


@dataclass(frozen=True)
class Violation:
    invariant: str
    entity: str
    detail: str = ""


@dataclass(frozen=True)
class ColumnMapping:
    """Names of the CSV columns holding the core event fields.

    ``event_id`` is optional: when the named column is absent, stable ids of
    the form ``e000000`` are synthesized in file order.
    """

    case_id: str = "case_id"
    activity: str = "activity"
    timestamp: str = "timestamp"
    event_id: str = "event_id"


def parse_instant(raw: str) -> datetime:
    """Parse an ISO-8601 string (offset or 'Z') into a UTC instant at ms precision."""
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def format_instant(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat(timespec="milliseconds")


def _parse_timestamp_cell(raw: str, row: int) -> datetime:
    text = raw.strip()
    if not text:
        raise UnparseableTimestamp(row, raw)
    if _INT_RE.match(text):
        millis = int(text)
        return datetime.fromtimestamp(millis / 1000.0, tz=timezone.utc)
    try:
        return parse_instant(text)
    except ValueError:
        raise UnparseableTimestamp(row, raw) from None


def _try_parse(text: str, type_name: str) -> Scalar | None:
    if type_name == TYPE_BOOLEAN:
        lowered = text.lower()
        if lowered == "true":
            return True
        if lowered == "false":
            return False
        return None
    if type_name == TYPE_INTEGER:
        return int(text) if _INT_RE.match(text) else None
    if type_name == TYPE_FLOAT:
        return float(text) if _FLOAT_RE.match(text) else None
    if type_name == TYPE_INSTANT:
        try:
            return parse_instant(text)
        except ValueError:
            return None
    return text


def _infer_candidate(text: str) -> str:
    for type_name in (TYPE_BOOLEAN, TYPE_INTEGER, TYPE_FLOAT, TYPE_INSTANT):
        if _try_parse(text, type_name) is not None:
            return type_name
    return TYPE_STRING


def infer_column_types(columns: Mapping[str, list[str]]) -> dict[str, str]:
    """Per-column scalar type: first non-empty cell proposes, mismatches coerce to string."""
    schema: dict[str, str] = {}
    for key, cells in columns.items():
        present = [c for c in cells if c != ""]
        if not present:
            schema[key] = TYPE_STRING
            continue
        candidate = _infer_candidate(present[0])
        if candidate != TYPE_STRING:
            for cell in present[1:]:
                if _try_parse(cell, candidate) is None:
                    candidate = TYPE_STRING
                    break
        schema[key] = candidate
    return schema


def from_events(
    events: Iterable[Event],
    case_attributes: Mapping[str, Mapping[str, Scalar]] | None = None,
) -> EventLog:
    """Build a normalized log: group by case, sort by (timestamp, event_id), infer schema."""
    by_case: dict[str, list[Event]] = {}
    seen_ids: set[str] = set()
    for ev in events:
        if ev.event_id in seen_ids:
            raise DuplicateEventId(f"event id {ev.event_id!r} occurs more than once")
        seen_ids.add(ev.event_id)
        by_case.setdefault(ev.case_id, []).append(ev)
    if not by_case:
        raise EmptyLog("log contains no events")

    case_attributes = case_attributes or {}
    traces: dict[str, Trace] = {}
    universe: set[str] = set()
    schema: dict[str, str] = {}
    for case_id, evs in by_case.items():
        evs.sort(key=lambda e: (e.timestamp, e.event_id))
        traces[case_id] = Trace(
            case_id=case_id,
            events=tuple(evs),
            attributes=dict(case_attributes.get(case_id, {})),
        )
        for ev in evs:
            universe.add(ev.activity)
            for key, value in ev.attributes.items():
                schema[key] = _merge_type(schema.get(key), _scalar_type(value))
    for attrs in (t.attributes for t in traces.values()):
        for key, value in attrs.items():
            schema[key] = _merge_type(schema.get(key), _scalar_type(value))
    return EventLog(traces=traces, activity_universe=frozenset(universe), attribute_schema=schema)


def _scalar_type(value: Scalar) -> str:
    if isinstance(value, bool):
        return TYPE_BOOLEAN
    if isinstance(value, int):
        return TYPE_INTEGER
    if isinstance(value, float):
        return TYPE_FLOAT
    if isinstance(value, datetime):
        return TYPE_INSTANT
    return TYPE_STRING


def _merge_type(existing: str | None, incoming: str) -> str:
    if existing is None or existing == incoming:
        return incoming
    return TYPE_STRING


def _as_text(source: Union[bytes, str, IO[bytes]]) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    return source.read().decode("utf-8")


def parse_csv(
    source: Union[bytes, str, IO[bytes]],
    mapping: ColumnMapping = ColumnMapping(),
    delimiter: str = ",",
) -> EventLog:
    """Parse a delimited event log with a header row into an :class:`EventLog`.

    Unmapped columns become attributes with inferred scalar types; columns
    constant within every case become case-level attributes.
    """
    text = _as_text(source)
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    rows = list(reader)
    if not rows:
        raise EmptyLog("no header row")
    header = [h.strip() for h in rows[0]]
    data_rows = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not data_rows:
        raise EmptyLog("no data rows")

    for required in (mapping.case_id, mapping.activity, mapping.timestamp):
        if required not in header:
            raise MissingColumn(required)
    idx = {name: header.index(name) for name in header}
    has_event_id = mapping.event_id in header
    attr_columns = [
        h for h in header
        if h not in (mapping.case_id, mapping.activity, mapping.timestamp)
        and not (has_event_id and h == mapping.event_id)
    ]

    def cell(row: list[str], name: str) -> str:
        i = idx[name]
        return row[i].strip() if i < len(row) else ""

    # first pass: column type inference over attribute columns
    columns = {name: [cell(r, name) for r in data_rows] for name in attr_columns}
    schema = infer_column_types(columns)

    events: list[Event] = []
    raw_attrs: list[dict[str, Scalar]] = []
    for file_row, row in enumerate(data_rows, start=2):
        case_id = cell(row, mapping.case_id)
        activity = cell(row, mapping.activity)
        timestamp = _parse_timestamp_cell(cell(row, mapping.timestamp), file_row)
        event_id = cell(row, mapping.event_id) if has_event_id else f"e{len(events):06d}"
        attrs: dict[str, Scalar] = {}
        for name in attr_columns:
            raw = cell(row, name)
            if raw == "":
                continue
            parsed = _try_parse(raw, schema[name])
            attrs[name] = raw if parsed is None else parsed
        raw_attrs.append(attrs)
        events.append(Event(event_id=event_id, case_id=case_id, activity=activity,
                            timestamp=timestamp, attributes=attrs))

    case_level = _split_case_columns(events, attr_columns)
    case_attributes: dict[str, dict[str, Scalar]] = {}
    if case_level:
        stripped: list[Event] = []
        for ev in events:
            case_attrs = case_attributes.setdefault(ev.case_id, {})
            kept = {}
            for key, value in ev.attributes.items():
                if key in case_level:
                    case_attrs[key] = value
                else:
                    kept[key] = value
            stripped.append(replace(ev, attributes=kept))
        events = stripped
    return from_events(events, case_attributes)


def _split_case_columns(events: list[Event], attr_columns: list[str]) -> set[str]:
    """Columns constant within every case are case-level.

    Constant means one value, present on every event of each case that carries
    the column at all; a column filled on only some of a case's rows is an
    event attribute that merely repeats a value.
    """
    case_sizes: dict[str, int] = {}
    for ev in events:
        case_sizes[ev.case_id] = case_sizes.get(ev.case_id, 0) + 1
    candidates = set(attr_columns)
    seen: dict[tuple[str, str], Scalar] = {}
    counts: dict[tuple[str, str], int] = {}
    for ev in events:
        for key in list(candidates):
            if key not in ev.attributes:
                continue
            mark = (ev.case_id, key)
            counts[mark] = counts.get(mark, 0) + 1
            if mark in seen:
                if seen[mark] != ev.attributes[key]:
                    candidates.discard(key)
            else:
                seen[mark] = ev.attributes[key]
    for (case_id, key), count in counts.items():
        if key in candidates and count != case_sizes[case_id]:
            candidates.discard(key)
    filled = {key for ev in events for key in ev.attributes}
    return candidates & filled


# --- XES -----------------------------------------------------------------------

_XES_VALUE_TAGS = {"string", "date", "int", "float", "boolean", "id"}


def _localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _xes_value(elem: ET.Element) -> Scalar:
    tag = _localname(elem.tag)
    raw = elem.get("value", "")
    if tag == "date":
        return parse_instant(raw)
    if tag == "int":
        return int(raw)
    if tag == "float":
        return float(raw)
    if tag == "boolean":
        return raw.lower() == "true"
    return raw


def parse_xes(source: Union[bytes, str, IO[bytes]]) -> EventLog:
    """Parse an XES log (concept and time extensions) into an :class:`EventLog`."""
    text = _as_text(source)
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc
    if _localname(root.tag) != "log":
        raise MalformedXml(f"root element is <{_localname(root.tag)}>, expected <log>")

    events: list[Event] = []
    case_attributes: dict[str, dict[str, Scalar]] = {}
    counter = 0
    for trace_el in (el for el in root if _localname(el.tag) == "trace"):
        trace_attrs: dict[str, Scalar] = {}
        event_els = []
        for child in trace_el:
            name = _localname(child.tag)
            if name == "event":
                event_els.append(child)
            elif name in _XES_VALUE_TAGS:
                trace_attrs[child.get("key", "")] = _xes_value(child)
        case_id = trace_attrs.pop("concept:name", None)
        if case_id is None:
            raise MissingExtension("trace without concept:name")
        case_attributes[str(case_id)] = trace_attrs

        for event_el in event_els:
            attrs: dict[str, Scalar] = {}
            for child in event_el:
                if _localname(child.tag) in _XES_VALUE_TAGS:
                    attrs[child.get("key", "")] = _xes_value(child)
            activity = attrs.pop("concept:name", None)
            if activity is None:
                raise MissingExtension("event without concept:name")
            raw_ts = attrs.pop("time:timestamp", None)
            if raw_ts is None or not isinstance(raw_ts, datetime):
                raise UnparseableTimestamp(counter + 1, str(raw_ts))
            event_id = str(attrs.pop("identity:id", f"e{counter:06d}"))
            counter += 1
            events.append(Event(event_id=event_id, case_id=str(case_id),
                                activity=str(activity), timestamp=raw_ts, attributes=attrs))
    if not events:
        raise EmptyLog("XES log contains no events")
    return from_events(events, case_attributes)


# --- validation -------------------------------------------------------------------

def validate(log: EventLog) -> list[Violation]:
    """Check every structural invariant; violations are data, not errors."""
    violations: list[Violation] = []
    seen_ids: set[str] = set()
    universe: set[str] = set()
    for key, trace in log.traces.items():
        if key != trace.case_id:
            violations.append(Violation("case-key-mismatch", key, f"trace says {trace.case_id!r}"))
        if not trace.events:
            violations.append(Violation("empty-trace", trace.case_id))
            continue
        previous = None
        for ev in trace.events:
            if ev.event_id in seen_ids:
                violations.append(Violation("duplicate-event-id", ev.event_id))
            seen_ids.add(ev.event_id)
            if not ev.activity.strip():
                violations.append(Violation("empty-activity", ev.event_id))
            universe.add(ev.activity)
            if previous is not None and ev.timestamp < previous.timestamp:
                violations.append(Violation("unsorted-trace", trace.case_id,
                                            f"{ev.event_id} precedes {previous.event_id}"))
            previous = ev
            if ev.case_id != trace.case_id:
                violations.append(Violation("foreign-event", ev.event_id,
                                            f"event case {ev.case_id!r} in trace {trace.case_id!r}"))
    if universe != set(log.activity_universe):
        violations.append(Violation("activity-universe-mismatch", "<log>",
                                    f"stored {sorted(log.activity_universe)}, actual {sorted(universe)}"))
    return violations


# --- export -------------------------------------------------------------------------

def _format_scalar(value: Scalar) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, datetime):
        return format_instant(value)
    return str(value)


def export_csv(log: EventLog, delimiter: str = ",") -> str:
    """Serialize to the canonical CSV form; ``parse_csv(export_csv(log))`` reproduces ``log``."""
    attr_keys = sorted(log.attribute_schema)
    header = ["event_id", "case_id", "activity", "timestamp", *attr_keys]
    out = io.StringIO()
    writer = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    writer.writerow(header)
    for trace in log.traces.values():
        for ev in trace.events:
            row = [ev.event_id, ev.case_id, ev.activity, format_instant(ev.timestamp)]
            for key in attr_keys:
                if key in ev.attributes:
                    row.append(_format_scalar(ev.attributes[key]))
                elif key in trace.attributes:
                    row.append(_format_scalar(trace.attributes[key]))
                else:
                    row.append("")
            writer.writerow(row)
    return out.getvalue()
