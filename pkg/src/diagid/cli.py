"""Command-line interface.

Exit codes: 0 on success, 1 when the domain rejects the input (validation
violations, impossible evidence, session faults), 2 on unusable input
(syntax errors, unknown files, bad flags).
"""

from __future__ import annotations

import argparse
import sys

from . import reports
from .construct import Observation, instantiate, observation_set
from .diagram import to_dot
from .errors import EngineError, KbSyntaxError, KbValidationError
from .kb import validate_kb
from .kbformat import parse_kb, serialize_kb
from .sensitivity import analyze
from .session import replay


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(2)


def _load_kb(path: str):
    try:
        return parse_kb(_read(path))
    except KbSyntaxError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        raise SystemExit(2)
    except KbValidationError as exc:
        print(reports.canonical_json(
            reports.validation_payload(exc.violations)))
        raise SystemExit(1)


def _parse_observation(text: str) -> Observation:
    # VAR=STATE@TIME
    if "@" not in text or "=" not in text.split("@", 1)[0]:
        print(f"bad observation {text!r}; expected VAR=STATE@TIME",
              file=sys.stderr)
        raise SystemExit(2)
    body, time = text.rsplit("@", 1)
    var, state = body.split("=", 1)
    return Observation(var=var.strip(), state=state.strip(),
                       time=time.strip(), source="cli")


def _gather(args) -> tuple[list[Observation], str]:
    obs = [_parse_observation(o) for o in args.observe or []]
    if not obs:
        print("at least one --observe is required", file=sys.stderr)
        raise SystemExit(2)
    time = args.time or obs[-1].time
    return obs, time


def cmd_validate(args) -> int:
    try:
        kb = parse_kb(_read(args.kb), validate=False)
    except KbSyntaxError as exc:
        print(f"{args.kb}: {exc}", file=sys.stderr)
        return 2
    violations = validate_kb(kb)
    print(reports.canonical_json(reports.validation_payload(violations)))
    return 0 if not violations else 1


def cmd_diagnose(args) -> int:
    kb = _load_kb(args.kb)
    obs, time = _gather(args)
    diagram, trace = instantiate(kb, observation_set(obs), time)
    payload = {
        "model_time": time,
        "decision": None,
        "sensitivity": None,
        "trace": reports.trace_payload(trace),
    }
    if diagram.is_decision_ready():
        from .equivalence import diagram_partition
        from .inference import best_decision
        partition = diagram_partition(diagram)
        payload["decision"] = reports.decision_payload(
            best_decision(diagram, partition))
        payload["sensitivity"] = reports.sensitivity_payload(
            analyze(diagram, kb, time, partition=partition))
    print(reports.canonical_json(payload))
    return 0


def cmd_sensitivity(args) -> int:
    kb = _load_kb(args.kb)
    obs, time = _gather(args)
    diagram, _ = instantiate(kb, observation_set(obs), time)
    report = analyze(diagram, kb, time)
    print(reports.canonical_json(reports.sensitivity_payload(report)))
    return 0


def cmd_replay(args) -> int:
    kb = _load_kb(args.kb)
    _, transcript = replay(kb, _read(args.script))
    print(reports.canonical_json(list(transcript)))
    return 0


def cmd_export(args) -> int:
    kb = _load_kb(args.kb)
    if args.dot:
        obs = [_parse_observation(o) for o in args.observe or []]
        if not obs:
            print("--dot needs at least one --observe", file=sys.stderr)
            return 2
        time = args.time or obs[-1].time
        diagram, _ = instantiate(kb, observation_set(obs), time)
        sys.stdout.write(to_dot(diagram))
    else:
        sys.stdout.write(serialize_kb(kb))
    return 0


def cmd_serve(args) -> int:
    from .server import serve
    kb = _load_kb(args.kb)
    serve(kb, host=args.host, port=args.port, state_dir=args.state_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diagid",
        description="Dynamic influence-diagram engine for sequential "
                    "diagnostic decisions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a knowledge base")
    p.add_argument("kb")
    p.set_defaults(fn=cmd_validate)

    def with_observations(p):
        p.add_argument("kb")
        p.add_argument("-o", "--observe", action="append", metavar="VAR=STATE@TIME")
        p.add_argument("--time", help="construction time (default: last finding's)")

    p = sub.add_parser("diagnose",
                       help="construct a model from findings and recommend")
    with_observations(p)
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("sensitivity",
                       help="ask whether the recommendation is stable")
    with_observations(p)
    p.set_defaults(fn=cmd_sensitivity)

    p = sub.add_parser("replay", help="run a session script")
    p.add_argument("kb")
    p.add_argument("script")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("export",
                       help="canonical knowledge-base text, or a model as DOT")
    with_observations(p)
    p.add_argument("--dot", action="store_true")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("serve", help="run the HTTP interface")
    p.add_argument("kb")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8350)
    p.add_argument("--state-dir", help="directory for append-only session logs")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
