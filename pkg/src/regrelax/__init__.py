"""Knowledge base and forward-chaining rules for relaxing traffic regulation."""

from .dsl import (
    ParseError,
    ParseFailure,
    SourcePosition,
    parse_fact,
    parse_rules,
    parse_scene,
    serialize_rules,
    serialize_scene,
)
from .engine import (
    ClassAtom,
    DerivationRecord,
    DifferentFrom,
    PropertyAtom,
    ResourceLimitError,
    Rule,
    RuleError,
    RuleSet,
    SaturationResult,
    Var,
    check_safety,
    explain,
    match_body,
    saturate,
)
from .kb import (
    ClassAssertion,
    FactError,
    KnowledgeBase,
    PropertyAssertion,
    Schema,
    SchemaError,
    build_schema,
)
from .ontology import new_scene, traffic_schema, validate_scene
from .regulation import ConflictError, Decision, DecisionSet, decide_next, default_ruleset
from .sim import SimulationConfig, StepTrace, run_simulation, update_phase

__version__ = "0.1.0"
