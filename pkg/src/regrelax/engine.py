"""Conjunctive rules and forward-chaining saturation with provenance.

Rules are positive and safe, so saturation is monotone and always reaches a
least fixpoint: rule heads only ever mention individuals bound in the body,
so no new individuals appear and the Herbrand base is finite.

Evaluation is semi-naive. Round 0 matches every rule against the whole KB;
later rounds only consider instantiations that use at least one fact added
in the previous round. New facts are applied at the end of each round.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

from .kb import (
    ClassAssertion,
    Fact,
    KnowledgeBase,
    PropertyAssertion,
    Schema,
    fact_sort_key,
    is_identifier,
)

log = logging.getLogger(__name__)

DEFAULT_DERIVED_FACT_CAP = 100_000


@dataclass(frozen=True)
class Var:
    name: str  # includes the leading "?"

    def __post_init__(self):
        if not (self.name.startswith("?") and is_identifier(self.name[1:])):
            raise ValueError(f"bad variable name {self.name!r}")

    def __str__(self) -> str:
        return self.name


Term = Var | str


@dataclass(frozen=True)
class ClassAtom:
    cls: str
    arg: Term

    @property
    def terms(self) -> tuple[Term, ...]:
        return (self.arg,)

    def __str__(self) -> str:
        return f"{self.cls}({self.arg})"


@dataclass(frozen=True)
class PropertyAtom:
    prop: str
    subject: Term
    object: Term

    @property
    def terms(self) -> tuple[Term, ...]:
        return (self.subject, self.object)

    def __str__(self) -> str:
        return f"{self.prop}({self.subject}, {self.object})"


@dataclass(frozen=True)
class DifferentFrom:
    left: Term
    right: Term

    @property
    def terms(self) -> tuple[Term, ...]:
        return (self.left, self.right)

    def __str__(self) -> str:
        return f"DifferentFrom({self.left}, {self.right})"


Atom = ClassAtom | PropertyAtom | DifferentFrom


def atom_variables(atom: Atom) -> list[str]:
    return [t.name for t in atom.terms if isinstance(t, Var)]


@dataclass(frozen=True)
class Rule:
    name: str
    body: tuple
    head: tuple

    def __str__(self) -> str:
        return f"{', '.join(map(str, self.body))} -> {', '.join(map(str, self.head))}"

    @property
    def variables(self) -> list[str]:
        names = []
        for atom in (*self.body, *self.head):
            for v in atom_variables(atom):
                if v not in names:
                    names.append(v)
        return names


@dataclass(frozen=True)
class RuleSet:
    rules: tuple
    version: str = "custom"

    def __iter__(self):
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def __getitem__(self, name: str) -> Rule:
        for rule in self.rules:
            if rule.name == name:
                return rule
        raise KeyError(name)


class RuleError(ValueError):
    """``code`` is one of UnsafeVariable, Undeclared, BuiltinInHead."""

    def __init__(self, code: str, message: str, name: str | None = None):
        super().__init__(message)
        self.code = code
        self.name = name


class ResourceLimitError(RuntimeError):
    def __init__(self, cap: int, count: int):
        super().__init__(f"saturation derived {count} facts, over the cap of {cap}")
        self.cap = cap
        self.count = count


def check_safety(rule: Rule, schema: Schema) -> None:
    """Raise RuleError unless the rule is safe and well-formed against ``schema``."""
    if not is_identifier(rule.name):
        raise RuleError("Undeclared", f"bad rule name {rule.name!r}", rule.name)
    if not rule.head:
        raise RuleError("Undeclared", f"rule {rule.name} has an empty head", rule.name)
    for atom in (*rule.body, *rule.head):
        if isinstance(atom, ClassAtom):
            if atom.cls not in schema.classes:
                raise RuleError("Undeclared", f"rule {rule.name}: unknown class {atom.cls!r}", atom.cls)
        elif isinstance(atom, PropertyAtom):
            if atom.prop not in schema.properties:
                raise RuleError("Undeclared", f"rule {rule.name}: unknown property {atom.prop!r}", atom.prop)
        elif not isinstance(atom, DifferentFrom):
            raise TypeError(f"not an atom: {atom!r}")
        for term in atom.terms:
            if not isinstance(term, Var) and not is_identifier(term):
                raise RuleError("Undeclared", f"rule {rule.name}: bad individual {term!r}", str(term))
    for atom in rule.head:
        if isinstance(atom, DifferentFrom):
            raise RuleError("BuiltinInHead", f"rule {rule.name}: DifferentFrom cannot appear in a head")

    bound = {v for atom in rule.body if not isinstance(atom, DifferentFrom) for v in atom_variables(atom)}
    checked = [a for a in rule.body if isinstance(a, DifferentFrom)] + list(rule.head)
    for atom in checked:
        for v in atom_variables(atom):
            if v not in bound:
                raise RuleError("UnsafeVariable", f"rule {rule.name}: variable {v} is not bound by a body atom", v)


# -- matching -----------------------------------------------------------------

class _Index:
    """Mutable lookup tables over a growing fact set (one per saturation)."""

    def __init__(self, schema: Schema, facts: Iterable[Fact] = ()):
        self.schema = schema
        self.facts: set = set()
        self.members = defaultdict(set)
        self.pairs = defaultdict(set)
        self.by_subject = defaultdict(set)
        self.by_object = defaultdict(set)
        for fact in facts:
            self.add(fact)

    def add(self, fact: Fact) -> bool:
        if fact in self.facts:
            return False
        self.facts.add(fact)
        if isinstance(fact, ClassAssertion):
            for sup in self.schema.superclasses_of(fact.cls):
                self.members[sup].add(fact.individual)
        else:
            self.pairs[fact.prop].add((fact.subject, fact.object))
            self.by_subject[fact.prop, fact.subject].add(fact.object)
            self.by_object[fact.prop, fact.object].add(fact.subject)
        return True

    def candidates(self, atom: Atom, binding: Mapping[str, str]) -> Iterator[dict]:
        """Yield the extensions of ``binding`` under which ``atom`` holds."""
        def value(term):
            if isinstance(term, Var):
                return binding.get(term.name)
            return term

        if isinstance(atom, DifferentFrom):
            left, right = value(atom.left), value(atom.right)
            if left is None or right is None:
                raise RuntimeError(f"{atom} evaluated before its variables were bound")
            if left != right:
                yield {}
            return

        if isinstance(atom, ClassAtom):
            arg = value(atom.arg)
            members = self.members.get(atom.cls, ())
            if arg is not None:
                if arg in members:
                    yield {}
            else:
                for ind in members:
                    yield {atom.arg.name: ind}
            return

        s, o = value(atom.subject), value(atom.object)
        if s is not None and o is not None:
            if o in self.by_subject.get((atom.prop, s), ()):
                yield {}
        elif s is not None:
            for obj in self.by_subject.get((atom.prop, s), ()):
                yield {atom.object.name: obj}
        elif o is not None:
            for sub in self.by_object.get((atom.prop, o), ()):
                yield {atom.subject.name: sub}
        else:
            same = atom.subject == atom.object
            for sub, obj in self.pairs.get(atom.prop, ()):
                if same:
                    if sub == obj:
                        yield {atom.subject.name: sub}
                else:
                    yield {atom.subject.name: sub, atom.object.name: obj}


def _plan(body: Sequence[Atom], first: int | None = None) -> list[Atom]:
    """Order body atoms for a left-to-right join.

    Greedy: at each step take the positive atom with the most already-bound
    terms, preferring property atoms (more selective). DifferentFrom atoms are
    placed as soon as both sides are bound. ``first`` pins one atom to the
    front (the semi-naive seed).
    """
    bound: set = set()
    remaining = list(range(len(body)))
    order: list[Atom] = []

    def flush_builtins():
        for i in list(remaining):
            atom = body[i]
            if isinstance(atom, DifferentFrom) and all(v in bound for v in atom_variables(atom)):
                order.append(atom)
                remaining.remove(i)

    def take(i):
        order.append(body[i])
        remaining.remove(i)
        bound.update(atom_variables(body[i]))
        flush_builtins()

    if first is not None:
        take(first)
    flush_builtins()
    while remaining:
        positives = [i for i in remaining if not isinstance(body[i], DifferentFrom)]
        if not positives:
            raise RuntimeError("DifferentFrom atom with a variable no positive atom binds")

        def score(i):
            atom = body[i]
            free = sum(1 for t in atom.terms if isinstance(t, Var) and t.name not in bound)
            return (free == len(atom.terms) and bool(bound), free, isinstance(atom, ClassAtom), i)

        take(min(positives, key=score))
    return order


def _join(index: _Index, plan: Sequence[Atom], binding: dict) -> Iterator[dict]:
    if not plan:
        yield dict(binding)
        return
    atom, rest = plan[0], plan[1:]
    for ext in index.candidates(atom, binding):
        if ext:
            binding.update(ext)
            yield from _join(index, rest, binding)
            for k in ext:
                del binding[k]
        else:
            yield from _join(index, rest, binding)


def _check_body_vars(body: Sequence[Atom]) -> None:
    bound = {v for a in body if not isinstance(a, DifferentFrom) for v in atom_variables(a)}
    for a in body:
        if isinstance(a, DifferentFrom):
            for v in atom_variables(a):
                if v not in bound:
                    raise RuleError("UnsafeVariable", f"variable {v} in {a} is not bound by a positive atom", v)


def match_body(kb: KnowledgeBase, body: Sequence[Atom]) -> list[dict]:
    """All total bindings of the body's variables under which every atom holds.

    Class atoms match through subsumption. The result is sorted so that it
    does not depend on the order of ``body``.
    """
    _check_body_vars(body)
    index = _Index(kb.schema, kb.facts)
    seen = set()
    for b in _join(index, _plan(body), {}):
        seen.add(tuple(sorted(b.items())))
    return [dict(b) for b in sorted(seen)]


# -- saturation ----------------------------------------------------------------

@dataclass(frozen=True)
class DerivationRecord:
    rule: str
    binding: tuple[tuple[str, str], ...]  # sorted (variable, individual) pairs
    round: int
    inverse_of: Fact | None = None  # set when the fact is the inverse mirror of a rule head

    @property
    def binding_dict(self) -> dict[str, str]:
        return dict(self.binding)

    def __str__(self) -> str:
        b = ", ".join(f"{k}={v}" for k, v in self.binding)
        return f"{self.rule}[{b}] round {self.round}"


@dataclass(frozen=True)
class SaturationResult:
    kb: KnowledgeBase
    derived: frozenset
    rounds: int
    provenance: Mapping = field(default_factory=dict)

    @property
    def inferred(self) -> frozenset:
        """Every fact of the fixpoint that was not stated directly.

        Unlike ``derived`` this includes inverse mirrors of asserted facts,
        which the KB already held before saturation.
        """
        return self.kb.inferred


def instantiate(atom: Atom, binding: Mapping[str, str]):
    def value(term):
        return binding[term.name] if isinstance(term, Var) else term

    if isinstance(atom, ClassAtom):
        return ClassAssertion(atom.cls, value(atom.arg))
    if isinstance(atom, PropertyAtom):
        return PropertyAssertion(atom.prop, value(atom.subject), value(atom.object))
    return DifferentFrom(value(atom.left), value(atom.right))


def saturate(kb: KnowledgeBase, rules: Sequence[Rule], *,
             derived_fact_cap: int = DEFAULT_DERIVED_FACT_CAP) -> SaturationResult:
    """Fire ``rules`` over ``kb`` until nothing new can be derived."""
    for rule in rules:
        check_safety(rule, kb.schema)
    schema = kb.schema
    index = _Index(schema, kb.facts)
    provenance: dict = {f: recs for f, recs in kb.provenance.items()}
    derived: set = set()
    full_plans = {rule.name: _plan(rule.body) for rule in rules}
    delta_plans: dict = {}
    delta: _Index | None = None
    rnd = 0

    while True:
        found: dict[Fact, set] = defaultdict(set)
        for rule in rules:
            for binding in _rule_bindings(rule, index, delta, full_plans, delta_plans):
                key = tuple(sorted(binding.items()))
                for atom in rule.head:
                    fact = instantiate(atom, binding)
                    if fact not in index.facts:
                        found[fact].add(DerivationRecord(rule.name, key, rnd))
                    for mirror in kb.closure_of(fact)[1:]:
                        if mirror not in index.facts:
                            found[mirror].add(DerivationRecord(rule.name, key, rnd, inverse_of=fact))
        if not found:
            break
        delta = _Index(schema)
        for fact in sorted(found, key=fact_sort_key):
            index.add(fact)
            delta.add(fact)
            derived.add(fact)
            provenance[fact] = tuple(sorted(found[fact], key=_record_key))
        log.debug("round %d: %d new facts", rnd, len(found))
        if len(derived) > derived_fact_cap:
            raise ResourceLimitError(derived_fact_cap, len(derived))
        rnd += 1

    result_kb = KnowledgeBase(schema, frozenset(index.facts), kb.asserted, MappingProxyType(provenance))
    return SaturationResult(result_kb, frozenset(derived), rnd, MappingProxyType(provenance))


def _record_key(rec: DerivationRecord):
    return (rec.rule, rec.binding, rec.inverse_of is not None, str(rec.inverse_of))


def _rule_bindings(rule: Rule, index: _Index, delta: _Index | None, full_plans, delta_plans):
    if delta is None:
        yield from _join(index, full_plans[rule.name], {})
        return
    for i, atom in enumerate(rule.body):
        if isinstance(atom, DifferentFrom):
            continue
        if isinstance(atom, ClassAtom) and not delta.members.get(atom.cls):
            continue
        if isinstance(atom, PropertyAtom) and not delta.pairs.get(atom.prop):
            continue
        key = (rule.name, i)
        if key not in delta_plans:
            delta_plans[key] = _plan(rule.body, first=i)
        plan = delta_plans[key]
        for seed in delta.candidates(plan[0], {}):
            yield from _join(index, plan[1:], dict(seed))


# -- explanation ---------------------------------------------------------------

@dataclass
class Explanation:
    """A node of a derivation tree.

    ``kind`` is ``asserted``, ``inverse`` (mirror of an asserted fact),
    ``rule`` (rule firing) or ``builtin`` (a satisfied DifferentFrom test).
    """

    fact: object
    kind: str
    rule: str | None = None
    binding: dict = field(default_factory=dict)
    children: list = field(default_factory=list)

    def render(self, indent: int = 0) -> list[str]:
        pad = "  " * indent
        if self.kind == "rule":
            b = ", ".join(f"{k}={v}" for k, v in self.binding.items())
            lines = [f"{pad}{self.fact}  <= rule {self.rule} [{b}]"]
        elif self.kind == "inverse":
            lines = [f"{pad}{self.fact}  <= inverse of"]
        else:
            lines = [f"{pad}{self.fact}  ({self.kind})"]
        for child in self.children:
            lines.extend(child.render(indent + 1))
        return lines


class NotDerivedError(LookupError):
    pass


def _fact_round(kb: KnowledgeBase, fact: Fact) -> int:
    recs = kb.provenance.get(fact)
    return min(r.round for r in recs) if recs else -1


def explain(kb: KnowledgeBase, fact: Fact, rules: Sequence[Rule] | None = None) -> Explanation:
    """Build the derivation tree of ``fact`` in a saturated KB.

    Raises NotDerivedError if the fact does not hold. Each rule node uses the
    earliest-round derivation record, so supporting facts always come from
    strictly earlier rounds and the tree is finite.
    """
    if isinstance(fact, ClassAssertion) and fact not in kb.facts:
        if not kb.holds(fact):
            raise NotDerivedError(str(fact))
        # Holds only by subsumption: explain the most specific supporting assertion.
        support = _class_support(kb, fact)
        return explain(kb, support, rules)
    if fact not in kb.facts:
        raise NotDerivedError(str(fact))
    if fact in kb.asserted:
        return Explanation(fact, "asserted")
    records = kb.provenance.get(fact)
    if not records:
        mirror = kb.closure_of(fact)[1:]
        if mirror and mirror[0] in kb.facts:
            return Explanation(fact, "inverse", children=[explain(kb, mirror[0], rules)])
        raise NotDerivedError(str(fact))

    rec = min(records, key=lambda r: (r.round, _record_key(r)))
    if rec.inverse_of is not None:
        return Explanation(fact, "inverse", children=[explain(kb, rec.inverse_of, rules)])
    binding = rec.binding_dict
    node = Explanation(fact, "rule", rule=rec.rule, binding=binding)
    rule = _find_rule(rules, rec.rule) if rules is not None else None
    if rule is None:
        return node
    for atom in rule.body:
        inst = instantiate(atom, binding)
        if isinstance(inst, DifferentFrom):
            node.children.append(Explanation(inst, "builtin"))
        else:
            node.children.append(explain(kb, inst, rules))
    return node


def _class_support(kb: KnowledgeBase, fact: ClassAssertion) -> ClassAssertion:
    candidates = [ClassAssertion(c, fact.individual) for c in kb.schema.subclasses_of(fact.cls)]
    candidates = [c for c in candidates if c in kb.facts]
    return min(candidates, key=lambda c: (_fact_round(kb, c), c.cls))


def _find_rule(rules: Sequence[Rule], name: str) -> Rule | None:
    for rule in rules:
        if rule.name == name:
            return rule
    return None
