"""The fixed traffic schema, designated individuals and structural scene checks."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache

from .kb import ClassAssertion, KnowledgeBase, PropertyAssertion, Schema, build_schema

CLASSES = (
    "Car", "DriverEmotion", "Motion", "CurrentMotion", "NextMotion",
    "TrafficRegulation", "Infrastructure", "RoadNetwork", "RoadNode",
    "RoadConnection", "Lane", "ZoneOnTheSide", "DrivableZone", "CrossableZone",
    "Sidewalk", "ZebraZone", "ContinuousLine", "DashedLine", "SignAtCrossing",
    "isClear",
)

SUBCLASS_AXIOMS = (
    ("CurrentMotion", "Motion"),
    ("NextMotion", "Motion"),
    ("RoadNode", "RoadNetwork"),
    ("RoadConnection", "RoadNetwork"),
    ("Lane", "RoadConnection"),
    ("ZoneOnTheSide", "Infrastructure"),
    ("RoadNetwork", "Infrastructure"),
    ("SignAtCrossing", "Infrastructure"),
    ("DrivableZone", "ZoneOnTheSide"),
    ("CrossableZone", "ZoneOnTheSide"),
    ("Sidewalk", "DrivableZone"),
    ("ZebraZone", "DrivableZone"),
    ("ContinuousLine", "CrossableZone"),
    ("DashedLine", "CrossableZone"),
)

PROPERTIES = (
    "isOn", "isNextOn", "hasMotion", "hasNextMotion", "hasBesides",
    "isAfter", "isBefore", "isIllegal", "hasEmotion", "connects",
)

INVERSE_AXIOMS = (("isAfter", "isBefore"),)

MOTIONS = ("Forward", "Stopped", "Backward")
EMOTIONS = ("Nervous", "Relaxed")

DESIGNATED_FACTS = frozenset(
    [ClassAssertion("Motion", m) for m in MOTIONS]
    + [ClassAssertion("DriverEmotion", e) for e in EMOTIONS]
)


@lru_cache(maxsize=None)
def traffic_schema() -> Schema:
    return build_schema(CLASSES, SUBCLASS_AXIOMS, PROPERTIES, INVERSE_AXIOMS)


def new_scene() -> KnowledgeBase:
    """An empty scene holding only the motion and emotion individuals."""
    return KnowledgeBase(traffic_schema()).assert_facts(sorted(DESIGNATED_FACTS, key=str))


@dataclass(frozen=True)
class Issue:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} {self.message}"


@dataclass
class ValidationReport:
    errors: list[Issue] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_scene(kb: KnowledgeBase) -> ValidationReport:
    report = ValidationReport()

    def error(code, subject, message):
        report.errors.append(Issue(code, subject, message))

    def warn(code, subject, message):
        report.warnings.append(Issue(code, subject, message))

    def is_a(cls, ind):
        return kb.holds(ClassAssertion(cls, ind))

    by_prop = defaultdict(list)
    for fact in kb.facts:
        if isinstance(fact, PropertyAssertion):
            by_prop[fact.prop].append(fact)
    for facts in by_prop.values():
        facts.sort(key=lambda f: (f.subject, f.object))

    cars = sorted(kb.members("Car"))
    for car in cars:
        places = sorted(kb.objects("isOn", car))
        if not places:
            error("CarNotPlaced", car, f"car {car} has no isOn location")
        elif len(places) > 1:
            error("CarMultiplyPlaced", car, f"car {car} is on several places: {', '.join(places)}")
        if not kb.objects("hasEmotion", car):
            warn("NoEmotion", car, f"car {car} has no hasEmotion")

    for fact in by_prop["hasMotion"]:
        if fact.object not in MOTIONS:
            error("BadMotion", fact.subject,
                  f"{fact}: object is not one of {', '.join(MOTIONS)}")
    for fact in by_prop["hasEmotion"]:
        if fact.object not in EMOTIONS:
            error("BadEmotion", fact.subject,
                  f"{fact}: object is not one of {', '.join(EMOTIONS)}")
    for fact in by_prop["hasBesides"]:
        if not is_a("RoadConnection", fact.subject):
            error("BadBesides", fact.subject, f"{fact}: subject is not a RoadConnection")
    for fact in by_prop["isIllegal"]:
        for end in (fact.subject, fact.object):
            if not (is_a("RoadConnection", end) or is_a("ZoneOnTheSide", end)):
                error("BadIllegal", end,
                      f"{fact}: {end} is neither a RoadConnection nor a ZoneOnTheSide")
    endpoints = defaultdict(list)
    for fact in by_prop["connects"]:
        if not is_a("RoadConnection", fact.subject):
            error("BadConnects", fact.subject, f"{fact}: subject is not a RoadConnection")
        if not is_a("RoadNode", fact.object):
            error("BadConnects", fact.object, f"{fact}: object is not a RoadNode")
        endpoints[fact.subject].append(fact.object)
    for conn, nodes in sorted(endpoints.items()):
        if len(nodes) > 2:
            error("BadConnects", conn, f"{conn} connects more than two nodes")

    for lane in sorted(kb.members("Lane")):
        if not kb.objects("hasBesides", lane):
            warn("NoBesides", lane, f"lane {lane} has no hasBesides delimiter")
    return report
