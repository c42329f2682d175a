"""Fact store: schema (TBox), assertions (ABox), subsumption and inverse closure."""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping

IDENTIFIER_RE = re.compile(r"[A-Za-z0-9_]+")


def is_identifier(name) -> bool:
    return isinstance(name, str) and IDENTIFIER_RE.fullmatch(name) is not None


class SchemaError(ValueError):
    """Raised by build_schema. ``code`` is one of Cycle, Undeclared, DoubleInverse, BadIdentifier."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class FactError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class UnknownClassError(FactError, KeyError):
    def __init__(self, name: str):
        super().__init__("UnknownClass", f"class {name!r} is not declared in the schema")
        self.name = name

    __str__ = ValueError.__str__


class UnknownPropertyError(FactError, KeyError):
    def __init__(self, name: str):
        super().__init__("UnknownProperty", f"property {name!r} is not declared in the schema")
        self.name = name

    __str__ = ValueError.__str__


@dataclass(frozen=True)
class ClassAssertion:
    cls: str
    individual: str

    def __str__(self) -> str:
        return f"{self.cls}({self.individual})"


@dataclass(frozen=True)
class PropertyAssertion:
    prop: str
    subject: str
    object: str

    def __str__(self) -> str:
        return f"{self.prop}({self.subject}, {self.object})"


Fact = ClassAssertion | PropertyAssertion


def fact_sort_key(fact: Fact) -> tuple:
    if isinstance(fact, ClassAssertion):
        return (0, fact.cls, fact.individual, "")
    return (1, fact.prop, fact.subject, fact.object)


@dataclass(frozen=True)
class Schema:
    classes: frozenset[str]
    subclass_axioms: frozenset[tuple[str, str]]
    properties: frozenset[str]
    inverse_axioms: frozenset[frozenset[str]]

    @cached_property
    def _ancestors(self) -> Mapping[str, frozenset[str]]:
        parents = defaultdict(set)
        for sub, sup in self.subclass_axioms:
            parents[sub].add(sup)
        closure = {}
        for cls in self.classes:
            seen = {cls}
            stack = [cls]
            while stack:
                for sup in parents[stack.pop()]:
                    if sup not in seen:
                        seen.add(sup)
                        stack.append(sup)
            closure[cls] = frozenset(seen)
        return MappingProxyType(closure)

    @cached_property
    def _descendants(self) -> Mapping[str, frozenset[str]]:
        down = defaultdict(set)
        for cls, ups in self._ancestors.items():
            for sup in ups:
                down[sup].add(cls)
        return MappingProxyType({c: frozenset(down[c]) for c in self.classes})

    @cached_property
    def inverse_of(self) -> Mapping[str, str]:
        table = {}
        for pair in self.inverse_axioms:
            p, q = sorted(pair) if len(pair) == 2 else (next(iter(pair)),) * 2
            table[p] = q
            table[q] = p
        return MappingProxyType(table)

    def superclasses_of(self, cls: str) -> frozenset[str]:
        """Reflexive-transitive closure of the subclass axioms upward from ``cls``."""
        try:
            return self._ancestors[cls]
        except KeyError:
            raise UnknownClassError(cls) from None

    def subclasses_of(self, cls: str) -> frozenset[str]:
        try:
            return self._descendants[cls]
        except KeyError:
            raise UnknownClassError(cls) from None


def build_schema(classes: Iterable[str], subclass_axioms: Iterable[tuple[str, str]] = (),
                 properties: Iterable[str] = (),
                 inverse_axioms: Iterable[tuple[str, str]] = ()) -> Schema:
    """Validate the inputs and return a Schema.

    Raises SchemaError when an axiom names an undeclared class or property,
    when the subclass relation has a cycle, or when a property appears in
    more than one inverse axiom.
    """
    classes = frozenset(classes)
    properties = frozenset(properties)
    subs = frozenset((a, b) for a, b in subclass_axioms)
    inverses = [tuple(pair) for pair in inverse_axioms]

    for name in sorted(classes | properties):
        if not is_identifier(name):
            raise SchemaError("BadIdentifier", f"{name!r} is not a valid identifier")
    for sub, sup in sorted(subs):
        for name in (sub, sup):
            if name not in classes:
                raise SchemaError("Undeclared", f"subclass axiom {sub} < {sup} uses undeclared class {name!r}")

    seen_props: dict[str, frozenset[str]] = {}
    inverse_set = set()
    for p, q in inverses:
        for name in (p, q):
            if name not in properties:
                raise SchemaError("Undeclared", f"inverse axiom ({p}, {q}) uses undeclared property {name!r}")
        pair = frozenset((p, q))
        for name in pair:
            if name in seen_props and seen_props[name] != pair:
                raise SchemaError("DoubleInverse", f"property {name!r} appears in more than one inverse axiom")
            seen_props[name] = pair
        inverse_set.add(pair)

    # Kahn's algorithm; anything left over sits on a cycle (self-loops included).
    indegree = {c: 0 for c in classes}
    children = defaultdict(list)
    for sub, sup in subs:
        children[sup].append(sub)
        indegree[sub] += 1
    queue = [c for c, d in indegree.items() if d == 0]
    visited = 0
    while queue:
        node = queue.pop()
        visited += 1
        for child in children[node]:
            indegree[child] -= 1
            if indegree[child] == 0:
                queue.append(child)
    if visited != len(classes):
        stuck = sorted(c for c, d in indegree.items() if d > 0)
        raise SchemaError("Cycle", f"subclass cycle through {', '.join(stuck)}")

    return Schema(classes, subs, properties, frozenset(inverse_set))


@dataclass(frozen=True)
class KnowledgeBase:
    """One situation: a schema plus a closed-under-inverses set of facts.

    ``asserted`` holds the facts that were stated directly. ``facts`` is the
    full fact set: asserted facts, their inverse mirrors, and whatever the
    rule engine has added. ``provenance`` maps engine-derived facts to their
    derivation records.
    """

    schema: Schema
    facts: frozenset = frozenset()
    asserted: frozenset = frozenset()
    provenance: Mapping = field(default_factory=lambda: MappingProxyType({}), compare=False)

    def check_fact(self, fact: Fact) -> None:
        if isinstance(fact, ClassAssertion):
            if fact.cls not in self.schema.classes:
                raise UnknownClassError(fact.cls)
            names = (fact.individual,)
        elif isinstance(fact, PropertyAssertion):
            if fact.prop not in self.schema.properties:
                raise UnknownPropertyError(fact.prop)
            names = (fact.subject, fact.object)
        else:
            raise TypeError(f"not a fact: {fact!r}")
        for name in names:
            if not is_identifier(name):
                raise FactError("BadIdentifier", f"{name!r} is not a valid individual name")

    def closure_of(self, fact: Fact) -> tuple[Fact, ...]:
        """The fact and, for properties with a declared inverse, its mirror."""
        if isinstance(fact, PropertyAssertion):
            inverse = self.schema.inverse_of.get(fact.prop)
            if inverse is not None:
                mirror = PropertyAssertion(inverse, fact.object, fact.subject)
                if mirror != fact:
                    return fact, mirror
        return (fact,)

    def assert_fact(self, fact: Fact) -> KnowledgeBase:
        return self.assert_facts((fact,))

    def assert_facts(self, facts: Iterable[Fact]) -> KnowledgeBase:
        new_facts = set(self.facts)
        new_asserted = set(self.asserted)
        for fact in facts:
            self.check_fact(fact)
            new_asserted.add(fact)
            new_facts.update(self.closure_of(fact))
        return KnowledgeBase(self.schema, frozenset(new_facts), frozenset(new_asserted), self.provenance)

    def holds(self, fact: Fact) -> bool:
        if isinstance(fact, ClassAssertion):
            if fact.cls not in self.schema.classes:
                return False
            return fact.individual in self.members(fact.cls)
        return fact in self.facts

    @property
    def inferred(self) -> frozenset:
        """Facts present in the KB but not stated directly."""
        return self.facts - self.asserted

    # Query-time indexes. Built once per (immutable) value.

    @cached_property
    def _class_index(self) -> Mapping[str, frozenset[str]]:
        members = defaultdict(set)
        for fact in self.facts:
            if isinstance(fact, ClassAssertion):
                for sup in self.schema.superclasses_of(fact.cls):
                    members[sup].add(fact.individual)
        return {c: frozenset(m) for c, m in members.items()}

    @cached_property
    def _property_index(self):
        pairs = defaultdict(set)
        by_subject = defaultdict(set)
        by_object = defaultdict(set)
        for fact in self.facts:
            if isinstance(fact, PropertyAssertion):
                pairs[fact.prop].add((fact.subject, fact.object))
                by_subject[fact.prop, fact.subject].add(fact.object)
                by_object[fact.prop, fact.object].add(fact.subject)
        return pairs, by_subject, by_object

    def members(self, cls: str) -> frozenset[str]:
        return self._class_index.get(cls, frozenset())

    def pairs(self, prop: str) -> frozenset[tuple[str, str]] | set:
        return self._property_index[0].get(prop, ())

    def objects(self, prop: str, subject: str):
        return self._property_index[1].get((prop, subject), ())

    def subjects(self, prop: str, obj: str):
        return self._property_index[2].get((prop, obj), ())

    @cached_property
    def individuals(self) -> frozenset[str]:
        names = set()
        for fact in self.facts:
            if isinstance(fact, ClassAssertion):
                names.add(fact.individual)
            else:
                names.add(fact.subject)
                names.add(fact.object)
        return frozenset(names)

    def asserted_classes(self, individual: str) -> frozenset[str]:
        return frozenset(f.cls for f in self.facts
                         if isinstance(f, ClassAssertion) and f.individual == individual)


def empty_kb(schema: Schema) -> KnowledgeBase:
    return KnowledgeBase(schema)


def superclasses_of(schema: Schema, cls: str) -> frozenset[str]:
    return schema.superclasses_of(cls)


def assert_fact(kb: KnowledgeBase, fact: Fact) -> KnowledgeBase:
    return kb.assert_fact(fact)


def holds(kb: KnowledgeBase, fact: Fact) -> bool:
    return kb.holds(fact)
