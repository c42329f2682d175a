"""Discrete-time simulation: saturate, decide, update, repeat.

The engine is monotone, so everything that must change or disappear between
two time steps happens here, in the update phase: next-step facts are
promoted to current facts, derived facts are dropped, lane clearness is
recomputed under the closed-world reading, and waiting counters drive the
driver emotion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .engine import DEFAULT_DERIVED_FACT_CAP, RuleSet
from .kb import ClassAssertion, KnowledgeBase, PropertyAssertion
from .ontology import new_scene
from .regulation import DecisionSet, decide_next

log = logging.getLogger(__name__)

NEXT_STEP_PROPERTIES = frozenset({"hasNextMotion", "isNextOn"})
QUEUE_PROPERTIES = frozenset({"isBefore", "isAfter"})


@dataclass(frozen=True)
class SimulationConfig:
    max_steps: int = 10
    nervous_after: int = 3
    derived_fact_cap: int = DEFAULT_DERIVED_FACT_CAP

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.nervous_after < 0:
            raise ValueError("nervous_after must be non-negative")
        if self.derived_fact_cap < 1:
            raise ValueError("derived_fact_cap must be positive")


@dataclass(frozen=True)
class StepTrace:
    step_index: int
    decisions: DecisionSet
    waiting_counters: dict = field(default_factory=dict)
    post_update_scene: KnowledgeBase | None = None


def _is_blocked(kb: KnowledgeBase, car: str) -> bool:
    """Stopped, and behind some other stopped vehicle."""
    stopped = "Stopped" in kb.objects("hasMotion", car)
    return stopped and any("Stopped" in kb.objects("hasMotion", front)
                           for front in kb.objects("isAfter", car))


def update_phase(kb: KnowledgeBase, decisions: DecisionSet, counters: dict,
                 config: SimulationConfig) -> tuple[KnowledgeBase, dict]:
    """Build the scene of the next time step.

    Starts from the asserted facts of ``kb``; anything the engine derived is
    discarded. A vehicle that changes location also leaves its queue, so its
    isBefore/isAfter links are dropped.
    """
    facts = {f for f in kb.asserted
             if not (isinstance(f, PropertyAssertion) and f.prop in NEXT_STEP_PROPERTIES)
             and not (isinstance(f, ClassAssertion) and f.cls == "isClear")}

    def replace(prop, subject, value):
        facts.difference_update([f for f in facts if isinstance(f, PropertyAssertion)
                                 and f.prop == prop and f.subject == subject])
        facts.add(PropertyAssertion(prop, subject, value))

    for vehicle, decision in sorted(decisions.decisions.items()):
        if decision.next_location is not None:
            replace("isOn", vehicle, decision.next_location)
            facts.difference_update([f for f in facts if isinstance(f, PropertyAssertion)
                                     and f.prop in QUEUE_PROPERTIES
                                     and vehicle in (f.subject, f.object)])
        if decision.next_motion is not None:
            replace("hasMotion", vehicle, decision.next_motion)

    occupied = {f.object for f in facts if isinstance(f, PropertyAssertion) and f.prop == "isOn"}
    draft = new_scene().assert_facts(facts)
    for conn in sorted(draft.members("RoadConnection")):
        if conn not in occupied:
            facts.add(ClassAssertion("isClear", conn))
    draft = new_scene().assert_facts(facts)

    new_counters = {}
    for car in sorted(draft.members("Car")):
        if _is_blocked(draft, car):
            new_counters[car] = counters.get(car, 0) + 1
        else:
            new_counters[car] = 0
        # One-way: the simulator only ever makes drivers Nervous.
        if new_counters[car] >= config.nervous_after and new_counters[car] > 0:
            if set(draft.objects("hasEmotion", car)) != {"Nervous"}:
                replace("hasEmotion", car, "Nervous")

    return new_scene().assert_facts(facts), new_counters


def run_simulation(scene: KnowledgeBase, rules: RuleSet | None = None,
                   config: SimulationConfig | None = None) -> list[StepTrace]:
    """Alternate decide_next and update_phase.

    Stops after ``config.max_steps`` steps, or earlier once a step leaves
    both the scene and the waiting counters unchanged. ConflictError and
    ResourceLimitError propagate with a ``step_index`` attribute set.
    """
    config = config or SimulationConfig()
    counters = {car: 0 for car in sorted(scene.members("Car"))}
    traces = []
    current = scene
    for step in range(config.max_steps):
        try:
            decisions = decide_next(current, rules, derived_fact_cap=config.derived_fact_cap)
        except Exception as exc:
            exc.step_index = step
            raise
        nxt, new_counters = update_phase(current, decisions, counters, config)
        traces.append(StepTrace(step, decisions, new_counters, nxt))
        log.debug("step %d: %s", step, decisions.as_dict())
        if nxt.facts == current.facts and new_counters == counters:
            break
        current, counters = nxt, new_counters
    return traces
