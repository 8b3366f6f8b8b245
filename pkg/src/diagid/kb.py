"""Knowledge-base model: variables, causal arcs, time-indexed CPTs,
treatment utilities and event-pattern trigger rules.

The knowledge base is an immutable value. Parsing and serialization of the
text format live in ``kbformat``; this module owns the semantics: validation,
ancestor tracing and trigger matching.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import UnknownElementError

ROLES = ("hypothesis", "observable", "intermediate")

#: Tolerance for CPT row sums and other probability checks.
PROB_TOL = 1e-9


@dataclass(frozen=True)
class Variable:
    """A discrete variable with a fixed, ordered state space.

    Hypothesis variables designate a ``normal`` state; a diagnosis is
    abnormal in a variable exactly when it assigns any other state.
    """

    name: str
    role: str
    states: tuple[str, ...]
    normal: str | None = None


@dataclass(frozen=True)
class TimeAxis:
    """Ordered discrete time indices. Position in the tuple is the order."""

    indices: tuple[str, ...]

    def position(self, t: str) -> int:
        try:
            return self.indices.index(t)
        except ValueError:
            raise UnknownElementError(f"unknown time index: {t}") from None

    def window(self, t: str, radius: int) -> tuple[str, ...]:
        """Indices within ``radius`` positions of ``t``, in axis order."""
        p = self.position(t)
        lo, hi = max(0, p - radius), min(len(self.indices), p + radius + 1)
        return self.indices[lo:hi]


@dataclass(frozen=True)
class Cpt:
    """Conditional probability table for one variable.

    ``parents`` is sorted by name and row keys are parent-state tuples in
    that order; a root variable has the single row key ``()``. Each row
    lists one probability per state of ``var`` in declared state order.
    """

    var: str
    states: tuple[str, ...]
    parents: tuple[str, ...]
    rows: Mapping[tuple[str, ...], tuple[float, ...]]

    def prob(self, state: str, parent_states: tuple[str, ...]) -> float:
        return self.rows[parent_states][self.states.index(state)]

    def row_for(self, assignment: Mapping[str, str]) -> tuple[float, ...]:
        return self.rows[tuple(assignment[p] for p in self.parents)]


@dataclass(frozen=True)
class CptBank:
    """Time-indexed store of CPTs with optional named variants.

    Lookup is piecewise-constant: the entry at the greatest covered time
    index not after the requested one applies.
    """

    entries: Mapping[tuple[str, str, str | None], Cpt]

    def lookup(self, var: str, t: str, axis: TimeAxis,
               variant: str | None = None) -> Cpt | None:
        pos = axis.position(t)
        best: tuple[int, Cpt] | None = None
        for (v, ti, tag), cpt in self.entries.items():
            if v != var or tag != variant:
                continue
            p = axis.position(ti)
            if p <= pos and (best is None or p > best[0]):
                best = (p, cpt)
        return best[1] if best else None

    def variants_for(self, var: str) -> frozenset[str]:
        return frozenset(tag for (v, _, tag) in self.entries
                         if v == var and tag is not None)

    def default_times(self, var: str) -> tuple[str, ...]:
        return tuple(ti for (v, ti, tag) in self.entries
                     if v == var and tag is None)


@dataclass(frozen=True)
class Treatment:
    """A named action; tests carry negative costs and admit outcome events."""

    name: str
    is_test: bool = False


@dataclass(frozen=True)
class UtilityTable:
    """Treatment utilities over diagnoses.

    ``override`` entries key a full hypothesis assignment and take
    precedence; otherwise the utility of a diagnosis is the sum of
    ``literal`` entries over its abnormal literals, 0 per missing literal.
    """

    literal: Mapping[tuple[str, tuple[str, str]], float]
    override: Mapping[tuple[str, frozenset[tuple[str, str]]], float]

    def value(self, treatment: str, assignment: Mapping[str, str],
              normal: Mapping[str, str]) -> float:
        key = (treatment, frozenset(assignment.items()))
        if key in self.override:
            return self.override[key]
        total = 0.0
        for var, state in assignment.items():
            if var in normal and state != normal[var]:
                total += self.literal.get((treatment, (var, state)), 0.0)
        return total

    def treatments(self) -> frozenset[str]:
        names = {t for t, _ in self.literal}
        names.update(t for t, _ in self.override)
        return frozenset(names)

    def touched_hypotheses(self, treatment: str,
                           normal: Mapping[str, str]) -> frozenset[str]:
        """Hypothesis variables a treatment's entries mention abnormally.

        Literal entries touch their variable; an override touches only the
        variables it assigns a non-normal state (the normal part of a full
        assignment carries no commitment to treat anything).
        """
        touched: set[str] = set()
        for (t, (var, state)) in self.literal:
            if t == treatment and var in normal:
                touched.add(var)
        for (t, key) in self.override:
            if t != treatment:
                continue
            for var, state in key:
                if var in normal and state != normal[var]:
                    touched.add(var)
        return frozenset(touched)


@dataclass(frozen=True)
class TriggerStep:
    """One element of a trigger pattern. ``max_gap`` bounds the distance in
    time-axis positions from the previous matched event (None = unbounded)."""

    var: str
    state: str
    max_gap: int | None = None


@dataclass(frozen=True)
class TriggerRule:
    """Ordered event pattern with a single effect.

    Effects either select a CPT variant for a variable or mark a hypothesis
    as must-include during construction.
    """

    name: str
    pattern: tuple[TriggerStep, ...]
    effect_kind: str          # "variant" | "include"
    effect_var: str
    effect_tag: str | None = None


@dataclass(frozen=True)
class Violation:
    """One validation finding; ``kind`` is a stable machine-readable tag."""

    kind: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.kind}] {self.subject}: {self.message}"


@dataclass(frozen=True)
class JustificationGraph:
    """Ancestor sub-DAG explaining which mechanisms can influence a variable."""

    center: str
    nodes: frozenset[str]
    arcs: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class TriggerFiring:
    """A completed pattern match; ``position`` indexes the completing event."""

    rule: TriggerRule
    position: int


@dataclass(frozen=True)
class KnowledgeBase:
    variables: Mapping[str, Variable]
    arcs: tuple[tuple[str, str], ...]
    time_axis: TimeAxis
    cpt_bank: CptBank
    treatments: tuple[Treatment, ...]
    utilities: UtilityTable
    triggers: tuple[TriggerRule, ...] = ()

    # -- graph helpers -------------------------------------------------

    def parents(self, var: str) -> tuple[str, ...]:
        return tuple(sorted(c for c, e in self.arcs if e == var))

    def children(self, var: str) -> tuple[str, ...]:
        return tuple(sorted(e for c, e in self.arcs if c == var))

    def ancestors(self, var: str) -> frozenset[str]:
        seen: set[str] = set()
        stack = [var]
        while stack:
            for p in self.parents(stack.pop()):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return frozenset(seen)

    def descendants(self, var: str) -> frozenset[str]:
        seen: set[str] = set()
        stack = [var]
        while stack:
            for c in self.children(stack.pop()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return frozenset(seen)

    def hypothesis_vars(self) -> tuple[str, ...]:
        return tuple(sorted(n for n, v in self.variables.items()
                            if v.role == "hypothesis"))

    def normal_map(self) -> dict[str, str]:
        return {n: v.normal for n, v in self.variables.items()
                if v.role == "hypothesis" and v.normal is not None}

    def treatment_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.treatments)


# ---------------------------------------------------------------------------
# validation


def _cycle_nodes(names: Iterable[str],
                 arcs: Sequence[tuple[str, str]]) -> tuple[list[str], set[str]]:
    """Return (one cycle as a node path, all nodes on some cycle)."""
    out: dict[str, list[str]] = {n: [] for n in names}
    for c, e in arcs:
        out[c].append(e)
    color: dict[str, int] = {}
    stack: list[str] = []
    found: list[str] = []

    def visit(n: str) -> None:
        color[n] = 1
        stack.append(n)
        for m in out[n]:
            if color.get(m, 0) == 1:
                if not found:
                    found.extend(stack[stack.index(m):] + [m])
            elif color.get(m, 0) == 0:
                visit(m)
        stack.pop()
        color[n] = 2

    for n in sorted(out):
        if color.get(n, 0) == 0:
            visit(n)

    on_cycle: set[str] = set()
    if found:
        # every node reachable from the cycle that can reach it back is
        # treated as structurally broken; keep it simple: the cycle itself
        on_cycle = set(found)
    return found, on_cycle


def validate_kb(kb: KnowledgeBase) -> list[Violation]:
    """Check every structural invariant; returns an empty list when valid.

    Checks that depend on a well-formed parent relation are suppressed for
    elements already reported as structurally broken (dangling arcs are
    dropped from the relation, nodes on a cycle skip CPT-shape checks), so
    a single fault yields a single violation.
    """
    out: list[Violation] = []

    for name, var in kb.variables.items():
        if var.role not in ROLES:
            out.append(Violation("bad-role", name, f"unknown role {var.role!r}"))
        if len(set(var.states)) != len(var.states):
            out.append(Violation("state-duplicate", name,
                                 "duplicate state labels"))
        if var.role == "hypothesis":
            if var.normal is None:
                out.append(Violation("missing-normal", name,
                                     "hypothesis variable has no normal state"))
            elif var.normal not in var.states:
                out.append(Violation("missing-normal", name,
                                     f"normal state {var.normal!r} not in states"))
        elif var.normal is not None:
            out.append(Violation("bad-role", name,
                                 "normal state on a non-hypothesis variable"))

    good_arcs: list[tuple[str, str]] = []
    for c, e in kb.arcs:
        if c not in kb.variables or e not in kb.variables:
            out.append(Violation("dangling-arc", f"{c}->{e}",
                                 "arc endpoint is not a declared variable"))
        else:
            good_arcs.append((c, e))

    cycle, on_cycle = _cycle_nodes(kb.variables, good_arcs)
    if cycle:
        out.append(Violation("cycle", "->".join(cycle),
                             "causal arcs form a cycle"))

    parent_of = {n: tuple(sorted(c for c, e in good_arcs if e == n))
                 for n in kb.variables}

    if not kb.time_axis.indices:
        out.append(Violation("empty-axis", "time", "time axis has no indices"))
    elif len(set(kb.time_axis.indices)) != len(kb.time_axis.indices):
        out.append(Violation("time-duplicate", "time",
                             "duplicate time index labels"))

    covered: set[str] = set()
    for (var, ti, tag), cpt in kb.cpt_bank.entries.items():
        subject = f"{var}@{ti}" + (f"/{tag}" if tag else "")
        if var not in kb.variables:
            out.append(Violation("unknown-variable", subject,
                                 "CPT for undeclared variable"))
            continue
        if ti not in kb.time_axis.indices:
            out.append(Violation("unknown-time", subject,
                                 "CPT at undeclared time index"))
            continue
        if tag is None:
            covered.add(var)
        decl = kb.variables[var]
        if cpt.states != decl.states:
            out.append(Violation("state-mismatch", subject,
                                 "CPT states differ from declaration"))
            continue
        for key, row in cpt.rows.items():
            s = sum(row)
            if abs(s - 1.0) > PROB_TOL:
                out.append(Violation("row-sum", subject,
                                     f"row {key} sums to {s!r}"))
            if any(p < 0 for p in row):
                out.append(Violation("row-negative", subject,
                                     f"row {key} has a negative entry"))
        if var in on_cycle:
            continue
        want = parent_of[var]
        if cpt.parents != want:
            out.append(Violation("wrong-parents", subject,
                                 f"conditioned on {cpt.parents}, KB parents {want}"))
            continue
        domains = [kb.variables[p].states for p in want]
        expect = set(itertools.product(*domains)) if want else {()}
        have = set(cpt.rows)
        for key in sorted(expect - have):
            out.append(Violation("missing-row", subject, f"no row for {key}"))
        for key in sorted(have - expect):
            out.append(Violation("extra-row", subject,
                                 f"row {key} matches no parent configuration"))

    for name in kb.variables:
        if name not in covered:
            out.append(Violation("missing-cpt", name,
                                 "no default CPT at any time index"))

    named = {t.name for t in kb.treatments}
    if len(named) != len(kb.treatments):
        out.append(Violation("treatment-duplicate", "treatments",
                             "duplicate treatment names"))
    referenced = kb.utilities.treatments()
    for t in sorted(named - referenced):
        out.append(Violation("utility-missing-treatment", t,
                             "treatment has no utility entry"))
    for t in sorted(referenced - named):
        out.append(Violation("utility-unknown-treatment", t,
                             "utility entry for undeclared treatment"))
    for (t, (var, state)), v in kb.utilities.literal.items():
        if var not in kb.variables or state not in kb.variables[var].states:
            out.append(Violation("utility-unknown", f"{t}/{var}={state}",
                                 "utility literal names unknown variable or state"))
        if v != v or v in (float("inf"), float("-inf")):
            out.append(Violation("utility-nonfinite", f"{t}/{var}={state}",
                                 "utility value is not finite"))
    for (t, key), v in kb.utilities.override.items():
        for var, state in key:
            if var not in kb.variables or state not in kb.variables[var].states:
                out.append(Violation("utility-unknown", f"{t}/full",
                                     "utility override names unknown variable or state"))
        if v != v or v in (float("inf"), float("-inf")):
            out.append(Violation("utility-nonfinite", f"{t}/full",
                                 "utility value is not finite"))

    for rule in kb.triggers:
        if not rule.pattern:
            out.append(Violation("trigger-empty-pattern", rule.name,
                                 "trigger has an empty pattern"))
        for step in rule.pattern:
            if step.var not in kb.variables:
                out.append(Violation("trigger-unknown-variable",
                                     rule.name, f"pattern names {step.var!r}"))
            elif step.state not in kb.variables[step.var].states:
                out.append(Violation("trigger-unknown-state", rule.name,
                                     f"pattern names {step.var}={step.state}"))
            if step.max_gap is not None and step.max_gap < 0:
                out.append(Violation("trigger-bad-gap", rule.name,
                                     "negative max gap"))
        if rule.effect_var not in kb.variables:
            out.append(Violation("trigger-unknown-variable", rule.name,
                                 f"effect names {rule.effect_var!r}"))
        elif rule.effect_kind == "include":
            if kb.variables[rule.effect_var].role != "hypothesis":
                out.append(Violation("trigger-bad-effect", rule.name,
                                     "include effect on a non-hypothesis variable"))
        elif rule.effect_kind == "variant":
            if rule.effect_tag not in kb.cpt_bank.variants_for(rule.effect_var):
                out.append(Violation("trigger-unknown-variant", rule.name,
                                     f"variant {rule.effect_tag!r} not in bank"))
        else:
            out.append(Violation("trigger-bad-effect", rule.name,
                                 f"unknown effect kind {rule.effect_kind!r}"))

    return out


# ---------------------------------------------------------------------------
# queries


def justification_trace(kb: KnowledgeBase, var: str) -> JustificationGraph:
    """The sub-DAG of ``var`` and all its ancestors, with the arcs among them.

    This is the static justification for a finding on ``var``: every
    mechanism that can influence it.
    """
    if var not in kb.variables:
        raise UnknownElementError(f"unknown variable: {var}")
    nodes = set(kb.ancestors(var)) | {var}
    arcs = tuple(sorted((c, e) for c, e in kb.arcs
                        if c in nodes and e in nodes))
    return JustificationGraph(center=var, nodes=frozenset(nodes), arcs=arcs)


def match_triggers(kb: KnowledgeBase, log: Sequence) -> list[TriggerFiring]:
    """All trigger firings against an event log, leftmost-first.

    ``log`` is a sequence of objects with ``time``, ``var`` and ``state``
    attributes, ordered by occurrence. A rule fires at log position ``j``
    when its final pattern step matches the event there and the earlier
    steps match an in-order subsequence before it, each consecutive pair
    within its ``max_gap`` time-axis positions. Appending events never
    removes a firing.
    """
    for ev in log:
        if ev.var not in kb.variables:
            raise UnknownElementError(f"unknown variable in log: {ev.var}")
        if ev.state not in kb.variables[ev.var].states:
            raise UnknownElementError(
                f"unknown state in log: {ev.var}={ev.state}")

    positions = [kb.time_axis.position(ev.time) for ev in log]
    firings: list[tuple[int, int, TriggerFiring]] = []
    for ridx, rule in enumerate(kb.triggers):
        if not rule.pattern:
            continue
        n = len(log)
        ok = [[False] * n for _ in rule.pattern]
        for m, step in enumerate(rule.pattern):
            for i, ev in enumerate(log):
                if ev.var != step.var or ev.state != step.state:
                    continue
                if m == 0:
                    ok[0][i] = True
                    continue
                gap = step.max_gap
                for j in range(i):
                    if not ok[m - 1][j]:
                        continue
                    if gap is None or positions[i] - positions[j] <= gap:
                        ok[m][i] = True
                        break
        for i in range(n):
            if ok[-1][i]:
                firings.append((i, ridx, TriggerFiring(rule, i)))
    firings.sort(key=lambda x: (x[0], x[1]))
    return [f for _, _, f in firings]
