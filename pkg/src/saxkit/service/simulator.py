"""Deterministic scenario simulator producing event logs with exact branch counts.

A scenario lists trace variants with exact case counts (so branch frequencies
are reproducible, not merely expected), per-activity duration samplers, and
attribute generators whose values may shift downstream durations.  Steps are
sequential by default; a step may anchor ``after`` an earlier activity instead,
which models tasks running concurrently after a shared predecessor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from ..errors import InconsistentSpec
from ..eventlog import Event, EventLog, Scalar, from_events

PARKING_ACTIVITIES = {
    "verify": "verify disabled parking permit",
    "check": "check if hazardous parking",
    "fine": "submit fine",
    "extended": "submit extended fine",
    "tow": "call a tow truck",
}

#: raw context attributes emitted by the parking scenario (enrichment renames them)
PARKING_RAW_ATTRIBUTES = {
    "region": "region code",
    "hazard": "hazard severity",
    "credit": "credit score",
    "company": "tow company",
}


@dataclass(frozen=True)
class Step:
    activity: str
    after: str | None = None  # anchor activity; None chains after the previous step


@dataclass(frozen=True)
class VariantSpec:
    name: str
    count: int
    steps: tuple[Step, ...]


@dataclass(frozen=True)
class DurationSpec:
    """Uniform duration in seconds, optionally shifted by attribute effects."""

    low: float
    high: float

    def mean(self) -> float:
        return (self.low + self.high) / 2.0


@dataclass(frozen=True)
class AttributeSpec:
    """A per-case sampler attached to one activity's events.

    ``values`` enumerates the levels; each ``(activity, scale)`` effect adds
    ``scale * level_index`` seconds to that activity's duration.
    """

    name: str
    activity: str
    values: tuple[Scalar, ...]
    effects: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    variants: tuple[VariantSpec, ...]
    durations: dict[str, DurationSpec]
    attributes: tuple[AttributeSpec, ...] = field(default_factory=tuple)
    start_time: datetime = datetime(2023, 5, 1, 8, 0, tzinfo=timezone.utc)
    arrival_spacing_s: float = 1020.0
    seed: int = 17

    @property
    def case_count(self) -> int:
        return sum(v.count for v in self.variants)

    def validate(self) -> None:
        if not self.variants:
            raise InconsistentSpec("a scenario needs at least one variant")
        for variant in self.variants:
            if variant.count <= 0:
                raise InconsistentSpec(f"variant {variant.name!r} has non-positive count")
            if not variant.steps:
                raise InconsistentSpec(f"variant {variant.name!r} has no steps")
            seen: set[str] = set()
            for i, step in enumerate(variant.steps):
                if step.activity not in self.durations:
                    raise InconsistentSpec(f"no duration for activity {step.activity!r}")
                if step.after is not None and step.after not in seen:
                    raise InconsistentSpec(
                        f"step {step.activity!r} anchors after unknown {step.after!r}"
                    )
                if i == 0 and step.after is not None:
                    raise InconsistentSpec("the first step cannot anchor after another")
                seen.add(step.activity)
        all_activities = {s.activity for v in self.variants for s in v.steps}
        for attr in self.attributes:
            if attr.activity not in all_activities:
                raise InconsistentSpec(f"attribute {attr.name!r} owned by unknown activity")
            for target, _scale in attr.effects:
                if target not in all_activities:
                    raise InconsistentSpec(f"attribute {attr.name!r} affects unknown activity")


def simulate(spec: ScenarioSpec) -> EventLog:
    """Generate a log with exactly the specified variant counts; pure given the seed."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    assignments = np.repeat(
        np.arange(len(spec.variants)),
        [v.count for v in spec.variants],
    )
    rng.shuffle(assignments)

    events: list[Event] = []
    width = len(str(spec.case_count))
    counter = 0
    for case_index, variant_index in enumerate(assignments):
        variant = spec.variants[variant_index]
        case_id = f"c{case_index + 1:0{width}d}"
        arrival = spec.start_time + timedelta(seconds=case_index * spec.arrival_spacing_s)

        attr_values: dict[str, tuple[Scalar, int]] = {}
        variant_activities = {s.activity for s in variant.steps}
        for attr in spec.attributes:
            if attr.activity in variant_activities:
                index = int(rng.integers(0, len(attr.values)))
                attr_values[attr.name] = (attr.values[index], index)

        completions: dict[str, datetime] = {}
        previous: str | None = None
        for step in variant.steps:
            duration_spec = spec.durations[step.activity]
            duration = rng.uniform(duration_spec.low, duration_spec.high)
            for attr in spec.attributes:
                if attr.name not in attr_values:
                    continue
                for target, scale in attr.effects:
                    if target == step.activity:
                        duration += scale * attr_values[attr.name][1]
            anchor = arrival if previous is None else completions[step.after or previous]
            completion = anchor + timedelta(seconds=duration)
            completions[step.activity] = completion
            previous = step.activity

            attributes = {
                attr.name: attr_values[attr.name][0]
                for attr in spec.attributes
                if attr.activity == step.activity and attr.name in attr_values
            }
            events.append(Event(
                event_id=f"e{counter:06d}",
                case_id=case_id,
                activity=step.activity,
                timestamp=completion,
                attributes=attributes,
            ))
            counter += 1
    return from_events(events)


def parking_scenario(seed: int = 17) -> ScenarioSpec:
    """The built-in parking-fines scenario: 1000 cases split 107/644/249.

    107 permit holders end after verification; 644 ordinary fines; 249
    hazardous cases where the extended fine and the tow truck both follow the
    hazard check, and the tow truck always completes after the extended fine
    (its duration support starts above the fine's).  Hazard severity, recorded
    while the extended fine is written up, dominates the tow wait and thereby
    the case duration.
    """
    a = PARKING_ACTIVITIES
    raw = PARKING_RAW_ATTRIBUTES
    return ScenarioSpec(
        name="parking-fines",
        seed=seed,
        variants=(
            VariantSpec("permit-holder", 107, (Step(a["verify"]),)),
            VariantSpec("ordinary-fine", 644, (
                Step(a["verify"]), Step(a["check"]), Step(a["fine"]),
            )),
            VariantSpec("hazardous", 249, (
                Step(a["verify"]),
                Step(a["check"]),
                Step(a["extended"]),
                Step(a["tow"], after=a["check"]),
            )),
        ),
        durations={
            a["verify"]: DurationSpec(120.0, 600.0),
            a["check"]: DurationSpec(300.0, 2100.0),
            a["fine"]: DurationSpec(600.0, 1800.0),
            a["extended"]: DurationSpec(600.0, 4800.0),
            a["tow"]: DurationSpec(4920.0, 5100.0),
        },
        attributes=(
            AttributeSpec(raw["region"], a["check"],
                          ("north", "east", "south", "west"),
                          effects=((a["check"], 48.0),)),
            AttributeSpec(raw["hazard"], a["extended"], (0, 1, 2, 3),
                          effects=((a["tow"], 210.0),)),
            AttributeSpec(raw["credit"], a["extended"], (580, 650, 720, 790),
                          effects=((a["tow"], 24.0),)),
            AttributeSpec(raw["company"], a["tow"],
                          ("AAA Towing", "Bay Towing", "CityHaul"),
                          effects=((a["tow"], 60.0),)),
        ),
    )


def expected_delta_mean(spec: ScenarioSpec, activity: str) -> float:
    """Mean completion delta implied by the samplers, including attribute effects."""
    total = spec.durations[activity].mean()
    for attr in spec.attributes:
        for target, scale in attr.effects:
            if target == activity:
                total += scale * (len(attr.values) - 1) / 2.0
    return total
