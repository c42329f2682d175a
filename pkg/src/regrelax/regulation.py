"""The relaxation ruleset and extraction of per-vehicle next-step decisions."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .dsl import parse_rules
from .engine import DEFAULT_DERIVED_FACT_CAP, RuleSet, SaturationResult, saturate
from .kb import KnowledgeBase, PropertyAssertion
from .ontology import traffic_schema

DEFAULT_RULESET_VERSION = "relax-1"


def default_rules_text() -> str:
    return resources.files("regrelax").joinpath("data/default.rules").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def default_ruleset() -> RuleSet:
    """Rules R1-R6, parsed from the bundled ``default.rules``."""
    return parse_rules(default_rules_text(), traffic_schema(), version=DEFAULT_RULESET_VERSION)


@dataclass(frozen=True)
class Decision:
    vehicle: str
    next_motion: str | None = None
    next_location: str | None = None

    @property
    def empty(self) -> bool:
        return self.next_motion is None and self.next_location is None


@dataclass(frozen=True)
class DecisionSet:
    decisions: dict = field(default_factory=dict)
    trace: SaturationResult | None = None

    def __getitem__(self, vehicle: str) -> Decision:
        return self.decisions[vehicle]

    def as_dict(self) -> dict:
        return {v: {"next_motion": d.next_motion, "next_location": d.next_location}
                for v, d in sorted(self.decisions.items())}


class ConflictError(RuntimeError):
    """A vehicle ended up with two next motions or two next locations."""

    def __init__(self, vehicle: str, facts):
        self.vehicle = vehicle
        self.facts = tuple(sorted(facts, key=str))
        super().__init__(f"conflicting decisions for {vehicle}: {', '.join(map(str, self.facts))}")

    @property
    def values(self) -> frozenset:
        return frozenset(f.object for f in self.facts)


def extract_decisions(kb: KnowledgeBase) -> dict:
    """Read the next motion/location of every car off a saturated KB."""
    decisions = {}
    for car in sorted(kb.members("Car")):
        motions = sorted(kb.objects("hasNextMotion", car))
        places = sorted(kb.objects("isNextOn", car))
        if len(motions) > 1:
            raise ConflictError(car, [PropertyAssertion("hasNextMotion", car, m) for m in motions])
        if len(places) > 1:
            raise ConflictError(car, [PropertyAssertion("isNextOn", car, p) for p in places])
        decisions[car] = Decision(car, motions[0] if motions else None, places[0] if places else None)
    return decisions


def decide_next(kb: KnowledgeBase, rules: RuleSet | None = None, *,
                derived_fact_cap: int = DEFAULT_DERIVED_FACT_CAP) -> DecisionSet:
    """Saturate one scene and return what each car does at the next step.

    Cars without any conclusion get an empty Decision; the simulator keeps
    their current state.
    """
    rules = default_ruleset() if rules is None else rules
    result = saturate(kb, rules.rules, derived_fact_cap=derived_fact_cap)
    return DecisionSet(extract_decisions(result.kb), result)
