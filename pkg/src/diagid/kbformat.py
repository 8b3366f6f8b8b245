"""Line-oriented text format for knowledge bases.

Grammar (one directive per line, ``#`` starts a comment):

    time <t1> <t2> ...
    var <name> role=<hypothesis|observable|intermediate> states=<s1,s2,...> [normal=<s>]
    arc <cause> -> <effect>
    cpt <var> @ <time> [variant=<tag>]
    | <p1>=<s>,<p2>=<s> : <prob per state, comma-separated>
    | : <probs>                                    (row of a root variable)
    treat <name> [test]
    util <treatment> <var>=<state> : <value>
    util <treatment> full <var>=<state>,... : <value>
    trigger <name>: <var>=<state> [then <var>=<state> [within <k>]]... => variant(<var>,<tag>) | include(<var>)

Rows belong to the most recent ``cpt`` header. Parent names in a row may be
written in any order; they are canonicalized to sorted order. Refinement and
coarsening maps reuse the same lexical conventions:

    refine <var>: <state> -> <new>*<w>[, <new>*<w>...] [; <state> -> ...]
    coarsen <var>: <old>[,<old>...] -> <new> [; ...]
"""

from __future__ import annotations

import re

from .errors import KbSyntaxError, KbValidationError
from .kb import (Cpt, CptBank, KnowledgeBase, TimeAxis, Treatment, TriggerRule,
                 TriggerStep, UtilityTable, Variable, validate_kb)
from .update import CoarseningMap, RefinementMap

_IDENT = r"[A-Za-z][A-Za-z0-9_.\-]*"
_ID_RE = re.compile(rf"^{_IDENT}$")


def _err(msg: str, line: int, col: int = 1) -> KbSyntaxError:
    return KbSyntaxError(msg, line, col)


def _ident(tok: str, line: int, what: str) -> str:
    if not _ID_RE.match(tok):
        raise _err(f"bad {what}: {tok!r}", line)
    return tok


def _assignment(text: str, line: int) -> dict[str, str]:
    """Parse ``a=x,b=y`` into a dict; empty text gives an empty dict."""
    out: dict[str, str] = {}
    text = text.strip()
    if not text:
        return out
    for part in text.split(","):
        if "=" not in part:
            raise _err(f"expected var=state, got {part.strip()!r}", line)
        var, state = part.split("=", 1)
        var, state = var.strip(), state.strip()
        _ident(var, line, "variable name")
        _ident(state, line, "state name")
        if var in out:
            raise _err(f"variable {var!r} assigned twice", line)
        out[var] = state
    return out


def _float(tok: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise _err(f"bad number: {tok.strip()!r}", line) from None


def parse_kb(text: str, *, validate: bool = True) -> KnowledgeBase:
    """Parse the text format. Raises KbSyntaxError with line/column on
    grammar faults and, when ``validate`` is set, KbValidationError listing
    every violation of the structural invariants."""
    variables: dict[str, Variable] = {}
    arcs: list[tuple[str, str]] = []
    axis: TimeAxis | None = None
    treatments: list[Treatment] = []
    literal: dict = {}
    override: dict = {}
    triggers: list[TriggerRule] = []
    # raw rows are resolved into Cpt objects once the whole file is read
    raw_cpts: list[dict] = []
    current: dict | None = None

    for lineno, rawline in enumerate(text.splitlines(), 1):
        line = rawline.split("#", 1)[0].rstrip()
        if not line.strip():
            continue

        if line.lstrip().startswith("|"):
            if current is None:
                raise _err("probability row outside a cpt block", lineno,
                           rawline.index("|") + 1)
            body = line.lstrip()[1:]
            if ":" not in body:
                raise _err("row needs ':' separating parents from values", lineno)
            left, right = body.split(":", 1)
            assign = _assignment(left, lineno)
            probs = tuple(_float(p, lineno) for p in right.split(","))
            current["rows"].append((assign, probs, lineno))
            continue

        current = None
        tokens = line.split()
        head = tokens[0]

        if head == "time":
            if axis is not None:
                raise _err("time axis declared twice", lineno)
            if len(tokens) < 2:
                raise _err("time axis needs at least one index", lineno)
            axis = TimeAxis(tuple(_ident(t, lineno, "time index")
                                  for t in tokens[1:]))

        elif head == "var":
            if len(tokens) < 2:
                raise _err("var needs a name", lineno)
            name = _ident(tokens[1], lineno, "variable name")
            if name in variables:
                raise _err(f"variable {name!r} declared twice", lineno)
            fields: dict[str, str] = {}
            for tok in tokens[2:]:
                if "=" not in tok:
                    raise _err(f"expected key=value, got {tok!r}", lineno)
                k, v = tok.split("=", 1)
                fields[k] = v
            if "role" not in fields or "states" not in fields:
                raise _err("var needs role= and states=", lineno)
            states = tuple(_ident(s, lineno, "state name")
                           for s in fields["states"].split(","))
            variables[name] = Variable(
                name=name, role=fields["role"], states=states,
                normal=fields.get("normal"))

        elif head == "arc":
            m = re.match(rf"^arc\s+({_IDENT})\s*->\s*({_IDENT})\s*$", line)
            if not m:
                raise _err("expected: arc <cause> -> <effect>", lineno)
            arcs.append((m.group(1), m.group(2)))

        elif head == "cpt":
            m = re.match(
                rf"^cpt\s+({_IDENT})\s*@\s*({_IDENT})"
                rf"(?:\s+variant=({_IDENT}))?\s*$", line)
            if not m:
                raise _err("expected: cpt <var> @ <time> [variant=<tag>]", lineno)
            current = {"var": m.group(1), "time": m.group(2),
                       "variant": m.group(3), "rows": [], "line": lineno}
            raw_cpts.append(current)

        elif head == "treat":
            if len(tokens) not in (2, 3) or (len(tokens) == 3 and tokens[2] != "test"):
                raise _err("expected: treat <name> [test]", lineno)
            name = _ident(tokens[1], lineno, "treatment name")
            if any(t.name == name for t in treatments):
                raise _err(f"treatment {name!r} declared twice", lineno)
            treatments.append(Treatment(name, is_test=len(tokens) == 3))

        elif head == "util":
            body = line[len("util"):].strip()
            if ":" not in body:
                raise _err("util needs ': <value>'", lineno)
            left, value = body.rsplit(":", 1)
            parts = left.split(None, 1)
            if len(parts) != 2:
                raise _err("expected: util <treatment> <literal-or-full> : <value>", lineno)
            tname = _ident(parts[0], lineno, "treatment name")
            spec = parts[1].strip()
            v = _float(value, lineno)
            if spec.startswith("full "):
                assign = _assignment(spec[len("full"):], lineno)
                if not assign:
                    raise _err("full utility entry needs an assignment", lineno)
                key = (tname, frozenset(assign.items()))
                if key in override:
                    raise _err("duplicate utility override", lineno)
                override[key] = v
            else:
                assign = _assignment(spec, lineno)
                if len(assign) != 1:
                    raise _err("literal utility entry takes one var=state", lineno)
                ((var, state),) = assign.items()
                key = (tname, (var, state))
                if key in literal:
                    raise _err("duplicate utility literal", lineno)
                literal[key] = v

        elif head == "trigger":
            m = re.match(rf"^trigger\s+({_IDENT})\s*:\s*(.+?)\s*=>\s*(.+)$", line)
            if not m:
                raise _err("expected: trigger <name>: <pattern> => <effect>", lineno)
            name, pat_text, eff_text = m.groups()
            if any(r.name == name for r in triggers):
                raise _err(f"trigger {name!r} declared twice", lineno)
            steps: list[TriggerStep] = []
            toks = pat_text.split()
            i = 0
            expect_event = True
            while i < len(toks):
                tok = toks[i]
                if expect_event:
                    assign = _assignment(tok, lineno)
                    if len(assign) != 1:
                        raise _err("pattern step must be one var=state", lineno)
                    ((var, state),) = assign.items()
                    steps.append(TriggerStep(var, state))
                    expect_event = False
                    i += 1
                elif tok == "then":
                    expect_event = True
                    i += 1
                elif tok == "within":
                    if i + 1 >= len(toks):
                        raise _err("within needs a gap", lineno)
                    try:
                        gap = int(toks[i + 1])
                    except ValueError:
                        raise _err(f"bad gap: {toks[i + 1]!r}", lineno) from None
                    if len(steps) < 2:
                        raise _err("within applies from the second step on", lineno)
                    last = steps[-1]
                    steps[-1] = TriggerStep(last.var, last.state, gap)
                    i += 2
                else:
                    raise _err(f"unexpected token {tok!r} in pattern", lineno)
            if expect_event or not steps:
                raise _err("trigger pattern is incomplete", lineno)
            em = re.match(rf"^variant\(\s*({_IDENT})\s*,\s*({_IDENT})\s*\)$",
                          eff_text.strip())
            if em:
                rule = TriggerRule(name, tuple(steps), "variant",
                                   em.group(1), em.group(2))
            else:
                em = re.match(rf"^include\(\s*({_IDENT})\s*\)$", eff_text.strip())
                if not em:
                    raise _err("effect must be variant(<var>,<tag>) or include(<var>)",
                               lineno)
                rule = TriggerRule(name, tuple(steps), "include", em.group(1))
            triggers.append(rule)

        else:
            raise _err(f"unknown directive {head!r}", lineno)

    if axis is None:
        raise _err("missing time axis declaration", len(text.splitlines()) or 1)

    entries: dict[tuple[str, str, str | None], Cpt] = {}
    for block in raw_cpts:
        var, ti, tag = block["var"], block["time"], block["variant"]
        key = (var, ti, tag)
        if key in entries:
            raise _err(f"duplicate cpt block for {var} @ {ti}", block["line"])
        if not block["rows"]:
            raise _err(f"cpt block for {var} has no rows", block["line"])
        if var not in variables:
            raise _err(f"cpt for undeclared variable {var!r}", block["line"])
        states = variables[var].states
        parents = tuple(sorted(block["rows"][0][0]))
        rows: dict[tuple[str, ...], tuple[float, ...]] = {}
        for assign, probs, rline in block["rows"]:
            if tuple(sorted(assign)) != parents:
                raise _err("row parents differ from the block's first row", rline)
            if len(probs) != len(states):
                raise _err(f"row has {len(probs)} values, variable has "
                           f"{len(states)} states", rline)
            rkey = tuple(assign[p] for p in parents)
            if rkey in rows:
                raise _err(f"duplicate row for {rkey}", rline)
            rows[rkey] = probs
        entries[key] = Cpt(var=var, states=states, parents=parents, rows=rows)

    kb = KnowledgeBase(
        variables=variables,
        arcs=tuple(sorted(set(arcs))),
        time_axis=axis,
        cpt_bank=CptBank(entries),
        treatments=tuple(treatments),
        utilities=UtilityTable(literal=literal, override=override),
        triggers=tuple(triggers),
    )
    if validate:
        violations = validate_kb(kb)
        if violations:
            raise KbValidationError(violations)
    return kb


def serialize_kb(kb: KnowledgeBase) -> str:
    """Render a knowledge base back to the text format.

    Output is canonical (sections and entries in a fixed order) and parses
    back to an equal KnowledgeBase.
    """
    out: list[str] = []
    out.append("time " + " ".join(kb.time_axis.indices))
    out.append("")
    for name in sorted(kb.variables):
        v = kb.variables[name]
        parts = [f"var {v.name}", f"role={v.role}",
                 "states=" + ",".join(v.states)]
        if v.normal is not None:
            parts.append(f"normal={v.normal}")
        out.append(" ".join(parts))
    out.append("")
    for c, e in sorted(kb.arcs):
        out.append(f"arc {c} -> {e}")
    out.append("")

    def entry_key(item):
        (var, ti, tag), _ = item
        return (var, kb.time_axis.position(ti), tag or "")

    for (var, ti, tag), cpt in sorted(kb.cpt_bank.entries.items(), key=entry_key):
        header = f"cpt {var} @ {ti}"
        if tag is not None:
            header += f" variant={tag}"
        out.append(header)
        for rkey in sorted(cpt.rows):
            assign = ",".join(f"{p}={s}" for p, s in zip(cpt.parents, rkey))
            probs = ", ".join(repr(p) for p in cpt.rows[rkey])
            out.append(f"| {assign} : {probs}")
        out.append("")

    for t in kb.treatments:
        out.append(f"treat {t.name}" + (" test" if t.is_test else ""))
    if kb.treatments:
        out.append("")
    for (tname, (var, state)), v in sorted(kb.utilities.literal.items()):
        out.append(f"util {tname} {var}={state} : {v!r}")
    for (tname, key), v in sorted(
            kb.utilities.override.items(),
            key=lambda kv: (kv[0][0], sorted(kv[0][1]))):
        assign = ",".join(f"{var}={s}" for var, s in sorted(key))
        out.append(f"util {tname} full {assign} : {v!r}")
    if kb.utilities.literal or kb.utilities.override:
        out.append("")
    for rule in kb.triggers:
        bits = []
        for i, step in enumerate(rule.pattern):
            if i:
                bits.append("then")
            bits.append(f"{step.var}={step.state}")
            if step.max_gap is not None:
                bits.append(f"within {step.max_gap}")
        if rule.effect_kind == "variant":
            eff = f"variant({rule.effect_var},{rule.effect_tag})"
        else:
            eff = f"include({rule.effect_var})"
        out.append(f"trigger {rule.name}: {' '.join(bits)} => {eff}")
    return "\n".join(out).rstrip() + "\n"


def parse_refinement(line: str) -> RefinementMap:
    """Parse ``refine <var>: <state> -> <new>*<w>, ... ; ...`` into a map.

    A singleton target without a weight (``b -> b2``) means a rename with
    weight 1. States not mentioned keep their identity.
    """
    m = re.match(rf"^\s*refine\s+({_IDENT})\s*:\s*(.+)$", line.strip())
    if not m:
        raise _err("expected: refine <var>: <state> -> <new>*<w>, ...", 1)
    target, body = m.groups()
    splits: dict[str, tuple[str, ...]] = {}
    weights: dict[str, float] = {}
    for clause in body.split(";"):
        if "->" not in clause:
            raise _err(f"refine clause needs '->': {clause.strip()!r}", 1)
        old, news = clause.split("->", 1)
        old = _ident(old.strip(), 1, "state name")
        if old in splits:
            raise _err(f"state {old!r} split twice", 1)
        parts: list[str] = []
        for piece in news.split(","):
            piece = piece.strip()
            if "*" in piece:
                name, w = piece.split("*", 1)
                name = _ident(name.strip(), 1, "state name")
                weights[name] = _float(w, 1)
            else:
                name = _ident(piece, 1, "state name")
                weights[name] = 1.0
            parts.append(name)
        splits[old] = tuple(parts)
    return RefinementMap(target=target, splits=splits, weights=weights)


def parse_coarsening(line: str) -> CoarseningMap:
    """Parse ``coarsen <var>: <old>,<old> -> <new> ; ...`` into a map."""
    m = re.match(rf"^\s*coarsen\s+({_IDENT})\s*:\s*(.+)$", line.strip())
    if not m:
        raise _err("expected: coarsen <var>: <old>,<old> -> <new>", 1)
    target, body = m.groups()
    merges: dict[str, tuple[str, ...]] = {}
    for clause in body.split(";"):
        if "->" not in clause:
            raise _err(f"coarsen clause needs '->': {clause.strip()!r}", 1)
        olds, new = clause.split("->", 1)
        new = _ident(new.strip(), 1, "state name")
        if new in merges:
            raise _err(f"merged state {new!r} defined twice", 1)
        group = tuple(_ident(p.strip(), 1, "state name")
                      for p in olds.split(","))
        merges[new] = group
    return CoarseningMap(target=target, merges=merges)
