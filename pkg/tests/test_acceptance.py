"""End-to-end acceptance checks, one test per criterion.

Each test reports through the ``criterion`` fixture, which prints a PASS/FAIL
line per criterion in the terminal summary.
"""

import json
import random
import statistics
import subprocess
import sys
import time

from conftest import SCENARIO1, SCENARIO1_RELAXED, SCENARIO2
from generators import random_scene_lines
from oracle import naive_fixpoint
from regrelax.dsl import ParseFailure, parse_fact, parse_scene, serialize_scene
from regrelax.engine import ClassAtom, DifferentFrom, PropertyAtom, Rule, RuleSet, instantiate, saturate
from regrelax.kb import PropertyAssertion
from regrelax.ontology import validate_scene
from regrelax.regulation import default_ruleset

WATCHED = {"hasMotion", "isAfter", "hasNextMotion", "isNextOn"}
GOLDEN_NERVOUS = {
    "hasMotion(CyberCar1, Stopped)",
    "isAfter(CyberCar1, UnloadingTruck1)",
    "hasNextMotion(CyberCar1, Forward)",
    "isNextOn(CyberCar1, AvenueDeLaLiberteDown)",
}


def cli(*args):
    return subprocess.run([sys.executable, "-m", "regrelax", *args], capture_output=True, text=True)


def scene_file(tmp_path, text, name="scene.scene"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def about(facts, subject, props=WATCHED):
    return {f for f in facts if f.split("(")[0] in props and f.split("(")[1].split(",")[0] == subject}


def test_ac1_golden_nervous(tmp_path, criterion):
    path = scene_file(tmp_path, SCENARIO1)
    start = time.perf_counter()
    proc = cli("infer", "--scene", path)
    elapsed = time.perf_counter() - start
    got = about(proc.stdout.splitlines(), "CyberCar1")
    criterion("AC1 golden example 1, Nervous driver",
              proc.returncode == 0 and got == GOLDEN_NERVOUS and elapsed < 1.0,
              f"exit {proc.returncode}, {len(got)} watched facts, {elapsed * 1000:.0f} ms")


def test_ac2_golden_relaxed(tmp_path, criterion):
    proc = cli("infer", "--scene", scene_file(tmp_path, SCENARIO1_RELAXED))
    derived = proc.stdout.splitlines()
    criterion("AC2 golden example 1, Relaxed driver",
              proc.returncode == 0
              and "hasNextMotion(CyberCar1, Stopped)" in derived
              and not any(f.startswith("isNextOn(") for f in derived),
              f"exit {proc.returncode}, derived {sorted(about(derived, 'CyberCar1'))}")


def test_ac3_sidewalk(tmp_path, criterion):
    proc = cli("explain", "--scene", scene_file(tmp_path, SCENARIO2), "--format", "json",
               "--fact", "isNextOn(CyberCar2, SwRueDu22Septembre)")
    motion = cli("explain", "--scene", scene_file(tmp_path, SCENARIO2), "--format", "json",
                 "--fact", "hasNextMotion(CyberCar2, Forward)")
    infer = cli("infer", "--scene", scene_file(tmp_path, SCENARIO2))
    ok = proc.returncode == motion.returncode == infer.returncode == 0
    rules = (json.loads(proc.stdout).get("rule"), json.loads(motion.stdout).get("rule")) if ok else None
    derived = set(infer.stdout.splitlines())
    criterion("AC3 golden example 2, sidewalk relaxation",
              ok and rules == ("R2", "R6")
              and {"isNextOn(CyberCar2, SwRueDu22Septembre)", "hasNextMotion(CyberCar2, Forward)"} <= derived,
              f"rules {rules}")


def test_ac4_performance(criterion):
    scenes = [parse_scene(SCENARIO1), parse_scene(SCENARIO2)]
    rules = default_ruleset()
    times = []
    for _ in range(5):
        start = time.perf_counter()
        for kb in scenes:
            saturate(kb, rules.rules)
        times.append((time.perf_counter() - start) * 1000)
    worst = max(times)
    criterion("AC4 saturating both golden scenes <= 50 ms", worst <= 50,
              f"worst of 5 runs {worst:.2f} ms, median {statistics.median(times):.2f} ms")


def test_ac5_oracle_equivalence(criterion):
    rng = random.Random(2024)
    rules = default_ruleset().rules
    mismatches = checked = 0
    while checked < 60:
        lines = random_scene_lines(rng, max_individuals=30, max_facts=60)
        kb = parse_scene("\n".join(lines))
        if validate_scene(kb).errors:
            continue
        checked += 1
        if saturate(kb, rules).kb.facts != naive_fixpoint(kb.schema, kb.facts, rules):
            mismatches += 1
    criterion("AC5 engine equals brute-force oracle on random scenes", mismatches == 0,
              f"{checked} scenes, {mismatches} mismatches")


def test_ac6_confluence(criterion):
    kb = parse_scene(SCENARIO1)
    rules = default_ruleset().rules
    reference = serialize_scene(saturate(kb, rules).kb)
    rng = random.Random(6)
    distinct = set()
    for _ in range(100):
        shuffled = [Rule(r.name, tuple(rng.sample(r.body, len(r.body))), r.head)
                    for r in rng.sample(rules, len(rules))]
        distinct.add(serialize_scene(saturate(kb, RuleSet(tuple(shuffled))).kb))
    criterion("AC6 rule and body-atom order do not change the fixpoint",
              distinct == {reference}, f"{len(distinct)} distinct serializations over 100 permutations")


def _inverse_closed(kb):
    props = {f for f in kb.facts if isinstance(f, PropertyAssertion) and f.prop in ("isAfter", "isBefore")}
    mirror = {PropertyAssertion("isBefore" if f.prop == "isAfter" else "isAfter", f.object, f.subject)
              for f in props}
    return mirror == props


def test_ac7_closure_properties(criterion):
    rng = random.Random(77)
    rules = default_ruleset().rules
    scenes = [parse_scene(t) for t in (SCENARIO1, SCENARIO1_RELAXED, SCENARIO2)]
    while len(scenes) < 53:
        kb = parse_scene("\n".join(random_scene_lines(rng)))
        if not validate_scene(kb).errors:
            scenes.append(kb)
    failures = []
    for i, kb in enumerate(scenes):
        first = saturate(kb, rules)
        second = saturate(first.kb, rules)
        if second.derived:
            failures.append((i, "idempotence"))
        if not kb.facts <= first.kb.facts:
            failures.append((i, "monotonicity"))
        if not _inverse_closed(first.kb):
            failures.append((i, "inverse closure"))
    criterion("AC7 idempotence, monotonicity, inverse closure", not failures,
              f"{len(scenes)} scenes, failures {failures[:3]}")


BAD_LINES = [
    # (template, code, token that the error must point at)
    ("individual{s}NotAClass{s}X", "UnknownClass", "NotAClass"),
    ("frobnicate{s}Car{s}X", "UnknownDirective", "frobnicate"),
    ("assert{s}drives{s}Car0{s}Lane0", "UnknownProperty", "drives"),
    ("individual{s}Car{s}bad-name", "BadIdentifier", "bad-name"),
    ("assert{s}isOn{s}Car0{s}La!ne", "BadIdentifier", "La!ne"),
    ("assert{s}hasEmotion{s}Nervous", "ArityMismatch", "assert"),
]


def test_ac8_parser_round_trip(criterion):
    rng = random.Random(88)
    failures = []
    docs = [SCENARIO1, SCENARIO2] + ["\n".join(random_scene_lines(rng)) for _ in range(100)]
    for i, doc in enumerate(docs):
        kb = parse_scene(doc)
        if parse_scene(serialize_scene(kb)).facts != kb.facts:
            failures.append(("round trip", i))
    for i in range(100):
        lines = random_scene_lines(rng)
        template, code, token = rng.choice(BAD_LINES)
        bad = rng.choice(["", " ", "\t"]) + template.format(s=rng.choice([" ", "  ", "\t"]))
        at = rng.randrange(len(lines) + 1)
        lines.insert(at, bad)
        expected = (at + 1, bad.index(token) + 1, code)
        try:
            parse_scene("\n".join(lines))
            failures.append(("accepted", i))
        except ParseFailure as exc:
            got = [(e.position.line, e.position.column, e.code) for e in exc.errors]
            if got != [expected]:
                failures.append(("position", i, got, expected))
    criterion("AC8 parser round trip and error positions", not failures,
              f"{len(docs)} valid + 100 invalid documents, failures {failures[:2]}")


def test_ac9_multi_step_trace(tmp_path, criterion):
    proc = cli("run", "--scene", scene_file(tmp_path, SCENARIO1_RELAXED),
               "--steps", "4", "--nervous-after", "2", "--format", "json")
    steps = json.loads(proc.stdout)["steps"] if proc.returncode == 0 else []
    decision = [s["decisions"]["CyberCar1"] for s in steps]
    scene_before = [SCENARIO1_RELAXED.splitlines()] + [s["scene"] for s in steps]
    ok = (
        len(steps) == 4
        and decision[0] == {"next_motion": "Stopped", "next_location": None}
        and decision[1] == {"next_motion": "Stopped", "next_location": None}
        and "assert hasEmotion CyberCar1 Relaxed" in scene_before[1]
        and "assert hasEmotion CyberCar1 Nervous" in scene_before[2]
        and decision[2] == {"next_motion": "Forward", "next_location": "AvenueDeLaLiberteDown"}
        and "assert isOn CyberCar1 AvenueDeLaLiberteDown" in scene_before[3]
        and "assert isOn CyberCar1 AvenueDeLaLiberteDown" in steps[3]["scene"]
    )
    criterion("AC9 four-step trace: stopped, stopped, flip + relocate, relocated", ok,
              f"decisions {[(d['next_motion'], d['next_location']) for d in decision]}")


def _unsound_nodes(node, kb, rules):
    if node["kind"] == "builtin":
        left, right = node["fact"][node["fact"].index("(") + 1:-1].split(",")
        return [] if left.strip() != right.strip() else [node["fact"]]
    bad = []
    fact = parse_fact(node["fact"], kb.schema)
    if not kb.holds(fact):
        bad.append(node["fact"])
    if node["kind"] == "asserted" and fact not in kb.asserted:
        bad.append(node["fact"])
    if node["kind"] == "rule":
        rule = rules[node["rule"]]
        binding = node["binding"]
        for atom in rule.body:
            if isinstance(atom, DifferentFrom):
                ground = instantiate(atom, binding)
                if ground.left == ground.right:
                    bad.append(f"{rule.name}: {atom}")
            elif isinstance(atom, (ClassAtom, PropertyAtom)) and not kb.holds(instantiate(atom, binding)):
                bad.append(f"{rule.name}: {atom}")
        if fact not in {instantiate(h, binding) for h in rule.head}:
            bad.append(f"{rule.name} head")
    for child in node.get("children", []):
        bad.extend(_unsound_nodes(child, kb, rules))
    return bad


def test_ac10_explain_soundness(tmp_path, criterion):
    path = scene_file(tmp_path, SCENARIO1)
    final = saturate(parse_scene(SCENARIO1), default_ruleset().rules).kb
    problems, nodes = [], 0
    for fact in sorted(GOLDEN_NERVOUS):
        proc = cli("explain", "--scene", path, "--fact", fact, "--format", "json")
        if proc.returncode != 0:
            problems.append((fact, proc.returncode))
            continue
        tree = json.loads(proc.stdout)
        stack = [tree]
        while stack:
            n = stack.pop()
            nodes += 1
            stack.extend(n.get("children", []))
        problems.extend(_unsound_nodes(tree, final, default_ruleset()))
    criterion("AC10 explanation trees are sound", not problems,
              f"{len(GOLDEN_NERVOUS)} facts, {nodes} nodes, problems {problems[:3]}")
