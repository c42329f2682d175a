"""``regrelax`` command line: validate, infer, run, explain."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import dsl
from .engine import NotDerivedError, ResourceLimitError, explain
from .ontology import validate_scene
from .regulation import ConflictError, decide_next, default_ruleset
from .sim import SimulationConfig, run_simulation

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_DERIVED = 2
EXIT_CONFLICT = 3
EXIT_RESOURCE = 4

RULES_ENV = "REGRELAX_RULES"

log = logging.getLogger("regrelax")


class _Exit(Exception):
    def __init__(self, code: int):
        self.code = code


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        print(f"{path}: {exc.strerror}", file=sys.stderr)
        raise _Exit(EXIT_INVALID) from None


def _load_rules(args):
    path = args.rules or os.environ.get(RULES_ENV)
    if not path:
        return default_ruleset()
    try:
        return dsl.parse_rules(_read(path), version=f"file:{Path(path).name}")
    except dsl.ParseFailure as exc:
        for err in exc.errors:
            print(f"{path}:{err}", file=sys.stderr)
        raise _Exit(EXIT_INVALID) from None


def _load_scene(path: str, *, check: bool = True):
    try:
        kb, positions = dsl.parse_scene_with_positions(_read(path))
    except dsl.ParseFailure as exc:
        for err in exc.errors:
            print(f"{path}:{err}", file=sys.stderr)
        raise _Exit(EXIT_INVALID) from None
    if check:
        report = validate_scene(kb)
        if report.errors:
            for issue in _in_source_order(report.errors, positions):
                print(f"{path}:{_located(issue, positions)}", file=sys.stderr)
            raise _Exit(EXIT_INVALID)
    return kb, positions


def _position(issue, positions):
    return positions.get(issue.subject, dsl.SourcePosition(1, 1))


def _located(issue, positions) -> str:
    return f"{_position(issue, positions)} {issue.code} {issue.message}"


def _in_source_order(issues, positions):
    return sorted(issues, key=lambda i: (_position(i, positions), i.code, i.subject))


def cmd_validate(args) -> int:
    try:
        kb, positions = dsl.parse_scene_with_positions(_read(args.scene))
    except dsl.ParseFailure as exc:
        for err in exc.errors:
            print(err)
        return EXIT_INVALID
    report = validate_scene(kb)
    for issue in _in_source_order(report.warnings, positions):
        print(f"warning: {_located(issue, positions)}", file=sys.stderr)
    if report.errors:
        for issue in _in_source_order(report.errors, positions):
            print(_located(issue, positions))
        return EXIT_INVALID
    print("OK")
    return EXIT_OK


def cmd_infer(args) -> int:
    kb, _ = _load_scene(args.scene)
    rules = _load_rules(args)
    start = time.perf_counter()
    decisions = decide_next(kb, rules, derived_fact_cap=args.derived_fact_cap)
    elapsed = (time.perf_counter() - start) * 1000
    derived = [str(f) for f in sorted(decisions.trace.inferred, key=str)]
    if args.format == "json":
        print(json.dumps({"derived": derived, "decisions": decisions.as_dict(),
                          "timing_ms": round(elapsed, 3)}, indent=2))
    else:
        for line in derived:
            print(line)
    log.info("inference took %.2f ms", elapsed)
    return EXIT_OK


def cmd_run(args) -> int:
    kb, _ = _load_scene(args.scene)
    rules = _load_rules(args)
    config = SimulationConfig(max_steps=args.steps, nervous_after=args.nervous_after,
                              derived_fact_cap=args.derived_fact_cap)
    traces = run_simulation(kb, rules, config)
    if args.format == "json":
        steps = [{
            "step": t.step_index,
            "decisions": t.decisions.as_dict(),
            "waiting_counters": dict(sorted(t.waiting_counters.items())),
            "scene": dsl.serialize_scene(t.post_update_scene).splitlines(),
        } for t in traces]
        print(json.dumps({"steps": steps}, indent=2))
        return EXIT_OK
    for t in traces:
        print(f"step {t.step_index}")
        for vehicle, d in sorted(t.decisions.decisions.items()):
            print(f"  decision {vehicle} next_motion={d.next_motion or '-'} "
                  f"next_location={d.next_location or '-'}")
        counters = " ".join(f"{k}={v}" for k, v in sorted(t.waiting_counters.items()))
        print(f"  waiting {counters}")
        print("  scene")
        for line in dsl.serialize_scene(t.post_update_scene).splitlines():
            print(f"    {line}")
    return EXIT_OK


def cmd_explain(args) -> int:
    kb, _ = _load_scene(args.scene)
    rules = _load_rules(args)
    try:
        fact = dsl.parse_fact(args.fact, kb.schema)
    except dsl.ParseFailure as exc:
        for err in exc.errors:
            print(f"--fact: {err.code} {err.message}", file=sys.stderr)
        return EXIT_INVALID
    decisions = decide_next(kb, rules, derived_fact_cap=args.derived_fact_cap)
    try:
        tree = explain(decisions.trace.kb, fact, rules.rules)
    except NotDerivedError:
        print(f"{fact} is not derivable", file=sys.stderr)
        return EXIT_NOT_DERIVED
    if args.format == "json":
        print(json.dumps(_tree_json(tree), indent=2))
    else:
        print("\n".join(tree.render()))
    return EXIT_OK


def _tree_json(node) -> dict:
    out = {"fact": str(node.fact), "kind": node.kind}
    if node.rule:
        out["rule"] = node.rule
        out["binding"] = node.binding
    if node.children:
        out["children"] = [_tree_json(c) for c in node.children]
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regrelax",
                                     description="Rule-based traffic regulation relaxation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, rules=True, fmt=True):
        p.add_argument("--scene", required=True, help="scene file")
        if rules:
            p.add_argument("--rules", help=f"rules file (default: ${RULES_ENV}, else built-in rules)")
            p.add_argument("--derived-fact-cap", type=int, default=SimulationConfig.derived_fact_cap,
                           help="abort if saturation derives more facts than this")
        if fmt:
            p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("validate", help="check a scene file")
    common(p, rules=False, fmt=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("infer", help="run one decision step and list inferred facts")
    common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("run", help="simulate several steps")
    common(p)
    p.add_argument("--steps", type=int, default=SimulationConfig.max_steps)
    p.add_argument("--nervous-after", type=int, default=SimulationConfig.nervous_after,
                   help="steps spent waiting behind a stopped car before the driver turns Nervous")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("explain", help="print the derivation tree of a fact")
    common(p)
    p.add_argument("--fact", required=True, help='e.g. "isNextOn(CyberCar1, AvenueDeLaLiberteDown)"')
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "steps", 1) < 1:
            parser.error("--steps must be at least 1")
        if getattr(args, "nervous_after", 0) < 0:
            parser.error("--nervous-after must be non-negative")
        if getattr(args, "derived_fact_cap", 1) < 1:
            parser.error("--derived-fact-cap must be positive")
        return args.func(args)
    except _Exit as exc:
        return exc.code
    except ConflictError as exc:
        step = getattr(exc, "step_index", None)
        where = f"step {step}: " if step is not None else ""
        print(f"conflict: {where}{exc}", file=sys.stderr)
        return EXIT_CONFLICT
    except ResourceLimitError as exc:
        step = getattr(exc, "step_index", None)
        where = f"step {step}: " if step is not None else ""
        print(f"resource limit: {where}{exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
