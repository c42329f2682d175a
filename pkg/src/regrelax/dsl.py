"""Line-oriented text formats for scenes and rules.

Scene files::

    # comment
    individual Lane AvenueDeLaLiberteUp
    assert isOn CyberCar1 AvenueDeLaLiberteUp

Rule files::

    rule R4:
    Car(?a), Car(?b),
    hasMotion(?a, Stopped),
    isBefore(?a, ?b)
    ->
    hasMotion(?b, Stopped)

A rule runs until the first blank line after its head atoms (or the next
``rule`` line, or end of file). Blank lines inside the body are ignored.
Parsers collect every error they can find and raise ParseFailure with the
whole list; no partial result is returned.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .engine import (
    ClassAtom,
    DifferentFrom,
    PropertyAtom,
    Rule,
    RuleError,
    RuleSet,
    Var,
    atom_variables,
    check_safety,
)
from .kb import ClassAssertion, KnowledgeBase, PropertyAssertion, Schema, is_identifier
from .ontology import DESIGNATED_FACTS, new_scene, traffic_schema

ERROR_CODES = (
    "UnknownDirective", "UnknownClass", "UnknownProperty", "ArityMismatch",
    "BadIdentifier", "UnsafeRule", "DuplicateRuleName",
)

_TOKEN = re.compile(r"\S+")
_RULE_HEADER = re.compile(r"\s*rule(?=\s|$)")
_ATOM = re.compile(r"\s*([^\s(]*)\s*\((.*)\)\s*\Z", re.S)


@dataclass(frozen=True, order=True)
class SourcePosition:
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class ParseError:
    position: SourcePosition
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.position} {self.code} {self.message}"


class ParseFailure(ValueError):
    def __init__(self, errors: Sequence[ParseError]):
        self.errors = sorted(errors, key=lambda e: e.position)
        super().__init__("\n".join(map(str, self.errors)))


def _decode(text) -> str | ParseError:
    if isinstance(text, (bytes, bytearray)):
        try:
            return bytes(text).decode("utf-8")
        except UnicodeDecodeError:
            return ParseError(SourcePosition(1, 1), "BadIdentifier", "input is not valid UTF-8")
    return text


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0]


# -- scenes ----------------------------------------------------------------------

def parse_scene_with_positions(text, schema: Schema | None = None):
    """Parse a scene; also return where each individual is first mentioned."""
    schema = schema or traffic_schema()
    text = _decode(text)
    if isinstance(text, ParseError):
        raise ParseFailure([text])
    errors: list[ParseError] = []
    facts = []
    positions: dict[str, SourcePosition] = {}

    for lineno, raw in enumerate(text.split("\n"), start=1):
        tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(_strip_comment(raw))]
        if not tokens:
            continue

        def err(col, code, message):
            errors.append(ParseError(SourcePosition(lineno, col), code, message))

        directive, dcol = tokens[0]
        if directive == "individual":
            arity, kind = 3, "class"
        elif directive == "assert":
            arity, kind = 4, "property"
        else:
            err(dcol, "UnknownDirective", f"unknown directive {directive!r}")
            continue
        if len(tokens) != arity:
            col = tokens[arity][1] if len(tokens) > arity else dcol
            err(col, "ArityMismatch",
                f"{directive} takes {arity - 1} arguments, got {len(tokens) - 1}")
            continue

        name, ncol = tokens[1]
        ok = True
        if not is_identifier(name):
            err(ncol, "BadIdentifier", f"{name!r} is not a valid {kind} name")
            ok = False
        elif kind == "class" and name not in schema.classes:
            hint = " (it is a property; use 'assert')" if name in schema.properties else ""
            err(ncol, "UnknownClass", f"unknown class {name!r}{hint}")
            ok = False
        elif kind == "property" and name not in schema.properties:
            hint = " (it is a class; use 'individual')" if name in schema.classes else ""
            err(ncol, "UnknownProperty", f"unknown property {name!r}{hint}")
            ok = False
        for ind, icol in tokens[2:]:
            if not is_identifier(ind):
                err(icol, "BadIdentifier", f"{ind!r} is not a valid individual name")
                ok = False
        if not ok:
            continue
        for ind, _ in tokens[2:]:
            positions.setdefault(ind, SourcePosition(lineno, dcol))
        if kind == "class":
            facts.append(ClassAssertion(name, tokens[2][0]))
        else:
            facts.append(PropertyAssertion(name, tokens[2][0], tokens[3][0]))

    if errors:
        raise ParseFailure(errors)
    kb = new_scene() if schema is traffic_schema() else KnowledgeBase(schema)
    return kb.assert_facts(facts), positions


def parse_scene(text, schema: Schema | None = None) -> KnowledgeBase:
    return parse_scene_with_positions(text, schema)[0]


def serialize_scene(kb: KnowledgeBase) -> str:
    """Canonical text of a scene: sorted, one directive per line.

    Designated individuals and inverse mirrors are left out; parsing puts
    them back. Of an inverse pair, the lexicographically smaller property
    name is the one written.
    """
    inverse_of = kb.schema.inverse_of
    individuals = set()
    asserts = set()
    for fact in kb.facts:
        if isinstance(fact, ClassAssertion):
            if fact not in DESIGNATED_FACTS:
                individuals.add(f"individual {fact.cls} {fact.individual}")
            continue
        prop, s, o = fact.prop, fact.subject, fact.object
        inverse = inverse_of.get(prop)
        if inverse is not None:
            if inverse < prop or (inverse == prop and o < s):
                prop, s, o = inverse, o, s
        asserts.add(f"assert {prop} {s} {o}")
    lines = sorted(individuals) + sorted(asserts)
    return "".join(line + "\n" for line in lines)


# -- rules -------------------------------------------------------------------------

class _Text:
    """Characters of a rule with the source position of each one."""

    def __init__(self):
        self.chars: list[str] = []
        self.pos: list[SourcePosition] = []

    def extend(self, s: str, line: int, col: int):
        for i, ch in enumerate(s):
            self.chars.append(ch)
            self.pos.append(SourcePosition(line, col + i))
        self.chars.append("\n")
        self.pos.append(SourcePosition(line, col + len(s)))

    @property
    def text(self) -> str:
        return "".join(self.chars)

    def position(self, offset: int) -> SourcePosition:
        if not self.pos:
            return SourcePosition(1, 1)
        return self.pos[min(offset, len(self.pos) - 1)]


def _split_top(text: str, start: int, end: int) -> list[tuple[int, int]]:
    """Comma-separated spans of text[start:end], ignoring commas inside parens."""
    spans = []
    depth = 0
    begin = start
    for i in range(start, end):
        ch = text[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            spans.append((begin, i))
            begin = i + 1
    spans.append((begin, end))
    return spans


def _first_nonspace(text: str, start: int, end: int) -> int:
    i = start
    while i < end and text[i].isspace():
        i += 1
    return i


def parse_atom(source: str, schema: Schema, *, allow_variables: bool = True):
    """Parse one atom such as ``isOn(?a, AvenueDeLaLiberteUp)``.

    Returns the atom, or raises ValueError with ``.code`` set to a ParseError code.
    """
    m = _ATOM.match(source)
    if not m:
        raise _AtomError("BadIdentifier", f"cannot read atom {source.strip()!r}")
    name = m.group(1)
    if not is_identifier(name):
        raise _AtomError("BadIdentifier", f"{name!r} is not a valid predicate name")
    args = [a.strip() for a in m.group(2).split(",")]
    terms = []
    for arg in args:
        if arg.startswith("?"):
            if not allow_variables:
                raise _AtomError("BadIdentifier", f"variable {arg} not allowed here")
            if not is_identifier(arg[1:]):
                raise _AtomError("BadIdentifier", f"{arg!r} is not a valid variable")
            terms.append(Var(arg))
        elif is_identifier(arg):
            terms.append(arg)
        else:
            raise _AtomError("BadIdentifier", f"{arg!r} is not a valid term")

    if name == "DifferentFrom":
        if len(terms) != 2:
            raise _AtomError("ArityMismatch", f"DifferentFrom takes 2 arguments, got {len(terms)}")
        return DifferentFrom(*terms)
    if name in schema.classes:
        if len(terms) != 1:
            raise _AtomError("ArityMismatch", f"class {name} takes 1 argument, got {len(terms)}")
        return ClassAtom(name, terms[0])
    if name in schema.properties:
        if len(terms) != 2:
            raise _AtomError("ArityMismatch", f"property {name} takes 2 arguments, got {len(terms)}")
        return PropertyAtom(name, *terms)
    if len(terms) == 1:
        raise _AtomError("UnknownClass", f"unknown class {name!r}")
    raise _AtomError("UnknownProperty", f"unknown property {name!r}")


class _AtomError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def parse_fact(source: str, schema: Schema | None = None):
    """Parse a ground atom like ``isNextOn(CyberCar1, AvenueDeLaLiberteDown)`` into a Fact."""
    schema = schema or traffic_schema()
    try:
        atom = parse_atom(source, schema, allow_variables=False)
    except _AtomError as exc:
        raise ParseFailure([ParseError(SourcePosition(1, 1), exc.code, str(exc))]) from None
    if isinstance(atom, ClassAtom):
        return ClassAssertion(atom.cls, atom.arg)
    if isinstance(atom, PropertyAtom):
        return PropertyAssertion(atom.prop, atom.subject, atom.object)
    raise ParseFailure([ParseError(SourcePosition(1, 1), "UnknownClass", "DifferentFrom is not a fact")])


@dataclass
class _PendingRule:
    name: str
    position: SourcePosition
    text: _Text


def _build_rule(pending: _PendingRule, schema: Schema, errors: list[ParseError]) -> Rule | None:
    text = pending.text.text
    arrow = text.find("->")
    if arrow < 0:
        errors.append(ParseError(pending.position, "ArityMismatch", f"rule {pending.name} has no '->'"))
        return None

    failed = False
    sides = []
    atom_pos = {}
    for start, end in ((0, arrow), (arrow + 2, len(text))):
        atoms = []
        spans = _split_top(text, start, end)
        for k, (a, b) in enumerate(spans):
            at = _first_nonspace(text, a, b)
            piece = text[a:b]
            if not piece.strip():
                # tolerate a trailing comma before '->' or at the end
                if k == len(spans) - 1 and len(spans) > 1:
                    continue
                errors.append(ParseError(pending.text.position(at), "ArityMismatch",
                                         f"rule {pending.name}: missing atom"))
                failed = True
                continue
            try:
                atom = parse_atom(piece, schema)
            except _AtomError as exc:
                errors.append(ParseError(pending.text.position(at), exc.code, f"rule {pending.name}: {exc}"))
                failed = True
                continue
            atoms.append(atom)
            atom_pos.setdefault(atom, pending.text.position(at))
        sides.append(tuple(atoms))
    if failed:
        return None

    rule = Rule(pending.name, sides[0], sides[1])
    try:
        check_safety(rule, schema)
    except RuleError as exc:
        pos = pending.position
        if exc.code == "BuiltinInHead":
            builtin = next(a for a in rule.head if isinstance(a, DifferentFrom))
            pos = atom_pos.get(builtin, pos)
        elif exc.name:
            for atom in (*[a for a in rule.body if isinstance(a, DifferentFrom)], *rule.head):
                if exc.name in atom_variables(atom):
                    pos = atom_pos.get(atom, pos)
                    break
        message = f"rule {pending.name}: {exc}"
        errors.append(ParseError(pos, "UnsafeRule", message))
        return None
    return rule


def parse_rules(text, schema: Schema | None = None, version: str = "custom") -> RuleSet:
    schema = schema or traffic_schema()
    text = _decode(text)
    if isinstance(text, ParseError):
        raise ParseFailure([text])
    errors: list[ParseError] = []
    rules: list[Rule] = []
    names: dict[str, SourcePosition] = {}
    pending: _PendingRule | None = None

    def finish():
        nonlocal pending
        if pending is None:
            return
        rule = _build_rule(pending, schema, errors)
        if rule is not None:
            rules.append(rule)
        pending = None

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            if pending is not None:
                t = pending.text.text
                arrow = t.find("->")
                if arrow >= 0 and t[arrow + 2:].strip():
                    finish()
            continue
        header = _RULE_HEADER.match(line)
        if header:
            finish()
            rest = line[header.end():]
            m = re.match(r"\s*([^\s:]*)\s*:", rest)
            if not m:
                errors.append(ParseError(SourcePosition(lineno, header.end() + 1), "BadIdentifier",
                                         "expected 'rule <Name>:'"))
                pending = None
                continue
            name = m.group(1)
            name_col = header.end() + m.start(1) + 1
            if not is_identifier(name):
                errors.append(ParseError(SourcePosition(lineno, name_col), "BadIdentifier",
                                         f"{name!r} is not a valid rule name"))
            elif name in names:
                errors.append(ParseError(SourcePosition(lineno, name_col), "DuplicateRuleName",
                                         f"rule {name} already defined at line {names[name].line}"))
            else:
                names[name] = SourcePosition(lineno, name_col)
            pending = _PendingRule(name, SourcePosition(lineno, name_col), _Text())
            tail = header.end() + m.end()
            pending.text.extend(line[tail:], lineno, tail + 1)
            continue
        if pending is None:
            tok = _TOKEN.search(line)
            errors.append(ParseError(SourcePosition(lineno, tok.start() + 1), "UnknownDirective",
                                     f"expected 'rule <Name>:', got {tok.group()!r}"))
            continue
        pending.text.extend(line, lineno, 1)
    finish()

    if errors:
        raise ParseFailure(errors)
    return RuleSet(tuple(rules), version)


def serialize_rules(rules) -> str:
    blocks = []
    for rule in rules:
        blocks.append(
            f"rule {rule.name}:\n"
            + ",\n".join(map(str, rule.body)) + "\n->\n"
            + ",\n".join(map(str, rule.head)) + "\n"
        )
    return "\n".join(blocks)
