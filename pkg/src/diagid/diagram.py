"""Influence diagrams instantiated for one decision task.

Diagrams are immutable values: every edit returns a new diagram and leaves
the input untouched, so concurrent readers never see partial updates.
Chance nodes carry the CPT actually in force (bank entry plus time tag and
variant); decision nodes list the treatment alternatives; value nodes hold
the utility function. Probability semantics live in ``inference``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Mapping

from .errors import EditError, UnknownElementError
from .kb import PROB_TOL, Cpt, UtilityTable, Violation


@dataclass(frozen=True)
class ChanceNode:
    name: str
    states: tuple[str, ...]
    cpt: Cpt
    time: str
    variant: str | None = None
    role: str = "intermediate"


@dataclass(frozen=True)
class DecisionNode:
    name: str
    alternatives: tuple[str, ...]


@dataclass(frozen=True)
class ValueNode:
    """One separable sub-value term: utility over (diagnosis, treatment)."""

    name: str
    utility: UtilityTable


@dataclass(frozen=True)
class MarkovBoundary:
    center: str
    members: frozenset[str]


@dataclass(frozen=True)
class InfluenceDiagram:
    chance: Mapping[str, ChanceNode]
    decisions: Mapping[str, DecisionNode]
    values: tuple[ValueNode, ...]
    arcs: tuple[tuple[str, str], ...]
    evidence: Mapping[str, str]
    normal: Mapping[str, str]       # hypothesis variable -> normal state

    # -- structure helpers ----------------------------------------------

    def chance_parents(self, name: str) -> tuple[str, ...]:
        return tuple(sorted(c for c, e in self.arcs
                            if e == name and c in self.chance))

    def chance_children(self, name: str) -> tuple[str, ...]:
        return tuple(sorted(e for c, e in self.arcs
                            if c == name and e in self.chance))

    def hypothesis_vars(self) -> tuple[str, ...]:
        return tuple(sorted(n for n in self.chance if n in self.normal))

    def node_count(self) -> int:
        return len(self.chance) + len(self.decisions) + len(self.values)

    def alternatives(self) -> tuple[str, ...]:
        for d in self.decisions.values():
            return d.alternatives
        return ()

    def active_utility(self) -> UtilityTable:
        if not self.values:
            raise UnknownElementError("diagram has no value node")
        return self.values[-1].utility

    def is_decision_ready(self) -> bool:
        return bool(self.decisions) and bool(self.values) \
            and bool(self.alternatives()) and bool(self.hypothesis_vars())

    def with_evidence(self, var: str, state: str) -> "InfluenceDiagram":
        if var not in self.chance:
            raise UnknownElementError(f"evidence on unknown node: {var}")
        if state not in self.chance[var].states:
            raise UnknownElementError(f"unknown state for {var}: {state}")
        ev = dict(self.evidence)
        ev[var] = state
        return replace(self, evidence=ev)


# ---------------------------------------------------------------------------
# validation


def _has_cycle(names, arcs) -> list[str]:
    out: dict[str, list[str]] = {n: [] for n in names}
    for c, e in arcs:
        if c in out and e in out:
            out[c].append(e)
    color: dict[str, int] = {}
    path: list[str] = []
    cyc: list[str] = []

    def visit(n):
        color[n] = 1
        path.append(n)
        for m in out[n]:
            if color.get(m, 0) == 1 and not cyc:
                cyc.extend(path[path.index(m):] + [m])
            elif color.get(m, 0) == 0:
                visit(m)
        path.pop()
        color[n] = 2

    for n in sorted(out):
        if color.get(n, 0) == 0:
            visit(n)
    return cyc


def validate_diagram(d: InfluenceDiagram) -> list[Violation]:
    """Structural invariant check; empty list when the diagram is sound."""
    out: list[Violation] = []
    all_names = set(d.chance) | set(d.decisions) | {v.name for v in d.values}
    if len(all_names) != len(d.chance) + len(d.decisions) + len(d.values):
        out.append(Violation("name-clash", "diagram",
                             "node names are not unique across kinds"))
    for c, e in d.arcs:
        if c not in all_names or e not in all_names:
            out.append(Violation("dangling-arc", f"{c}->{e}",
                                 "arc endpoint is not a diagram node"))
    value_names = {v.name for v in d.values}
    for c, e in d.arcs:
        if c in value_names:
            out.append(Violation("value-child", c, "value node has a child"))
    cyc = _has_cycle(all_names, d.arcs)
    if cyc:
        out.append(Violation("cycle", "->".join(cyc), "diagram arcs form a cycle"))
        return out
    for name, node in d.chance.items():
        want = d.chance_parents(name)
        if node.cpt.parents != want:
            out.append(Violation("wrong-parents", name,
                                 f"CPT over {node.cpt.parents}, diagram parents {want}"))
            continue
        if node.cpt.states != node.states:
            out.append(Violation("state-mismatch", name,
                                 "CPT states differ from node states"))
            continue
        domains = [d.chance[p].states for p in want]
        expect = set(itertools.product(*domains)) if want else {()}
        if set(node.cpt.rows) != expect:
            out.append(Violation("row-coverage", name,
                                 "CPT rows do not cover exactly the parent configurations"))
            continue
        for key, row in node.cpt.rows.items():
            if abs(sum(row) - 1.0) > PROB_TOL or any(p < 0 for p in row):
                out.append(Violation("row-sum", name,
                                     f"row {key} is not a distribution"))
    for var, state in d.evidence.items():
        if var not in d.chance:
            out.append(Violation("evidence-unknown", var,
                                 "evidence on a non-chance node"))
        elif state not in d.chance[var].states:
            out.append(Violation("evidence-state", var,
                                 f"evidence state {state!r} not in state space"))
    for var, state in d.normal.items():
        if var in d.chance and state not in d.chance[var].states:
            out.append(Violation("missing-normal", var,
                                 f"normal state {state!r} not in state space"))
    return out


def _checked(d: InfluenceDiagram) -> InfluenceDiagram:
    violations = validate_diagram(d)
    if violations:
        raise EditError("edit breaks diagram invariants: "
                        + "; ".join(str(v) for v in violations))
    return d


# ---------------------------------------------------------------------------
# queries


def markov_boundary(d: InfluenceDiagram, x: str) -> MarkovBoundary:
    """Parents, children and children's other parents of ``x``, over chance
    nodes only. Given its boundary, ``x`` is independent of every other
    chance node."""
    if x not in d.chance:
        raise UnknownElementError(f"unknown chance node: {x}")
    members: set[str] = set(d.chance_parents(x))
    for c in d.chance_children(x):
        members.add(c)
        members.update(p for p in d.chance_parents(c) if p != x)
    return MarkovBoundary(center=x, members=frozenset(members))


def joint_probability(d: InfluenceDiagram, assignment: Mapping[str, str]) -> float:
    """Product of CPT entries for a full assignment of the chance nodes."""
    missing = set(d.chance) - set(assignment)
    if missing:
        raise UnknownElementError(
            f"assignment misses chance nodes: {sorted(missing)}")
    p = 1.0
    for name, node in d.chance.items():
        key = tuple(assignment[q] for q in node.cpt.parents)
        p *= node.cpt.prob(assignment[name], key)
    return p


# ---------------------------------------------------------------------------
# edits


@dataclass(frozen=True)
class DiagramEdit:
    """One structural edit. ``kind`` selects which payload fields apply:

    - add_chance: node (name), cpt (parents must already be present)
    - remove_chance: node; with children, ``cascade`` plus replacement_cpts
    - add_arc / remove_arc: arc, plus replacement_cpts for the re-parented child
    - set_cpt: node, cpt (same parents)
    - set_evidence: evidence_var, evidence_state (None clears)
    """

    kind: str
    node: str | None = None
    cpt: Cpt | None = None
    arc: tuple[str, str] | None = None
    replacement_cpts: Mapping[str, Cpt] | None = None
    evidence_var: str | None = None
    evidence_state: str | None = None
    cascade: bool = False
    role: str = "intermediate"
    time: str = ""
    normal: str | None = None


def apply_edit(d: InfluenceDiagram, e: DiagramEdit) -> InfluenceDiagram:
    """Apply one edit, returning a new validated diagram.

    The input diagram is never modified; a rejected edit raises EditError
    (cycles are reported with the offending path).
    """
    if e.kind == "add_chance":
        if e.node is None or e.cpt is None:
            raise EditError("add_chance needs node and cpt")
        if e.node in d.chance or e.node in d.decisions:
            raise EditError(f"node {e.node!r} already exists")
        for p in e.cpt.parents:
            if p not in d.chance:
                raise EditError(f"parent {p!r} of new node is not in the diagram")
        chance = dict(d.chance)
        chance[e.node] = ChanceNode(name=e.node, states=e.cpt.states,
                                    cpt=e.cpt, time=e.time, role=e.role)
        arcs = tuple(d.arcs) + tuple((p, e.node) for p in e.cpt.parents)
        normal = dict(d.normal)
        if e.normal is not None:
            normal[e.node] = e.normal
        return _checked(replace(d, chance=chance, arcs=arcs, normal=normal))

    if e.kind == "remove_chance":
        if e.node not in d.chance:
            raise EditError(f"unknown node {e.node!r}")
        children = d.chance_children(e.node)
        repl = dict(e.replacement_cpts or {})
        if children and not e.cascade:
            raise EditError(f"{e.node!r} has children {list(children)}; "
                            "removal needs cascade with replacement CPTs")
        for c in children:
            if c not in repl:
                raise EditError(f"cascade removal needs a replacement CPT for {c!r}")
        chance = {n: v for n, v in d.chance.items() if n != e.node}
        for c in children:
            chance[c] = replace(chance[c], cpt=repl[c])
        arcs = tuple(a for a in d.arcs if e.node not in a)
        evidence = {v: s for v, s in d.evidence.items() if v != e.node}
        normal = {v: s for v, s in d.normal.items() if v != e.node}
        return _checked(replace(d, chance=chance, arcs=arcs,
                                evidence=evidence, normal=normal))

    if e.kind == "add_arc":
        if e.arc is None:
            raise EditError("add_arc needs an arc")
        src, dst = e.arc
        if e.arc in d.arcs:
            raise EditError(f"arc {src}->{dst} already present")
        arcs = tuple(d.arcs) + (e.arc,)
        chance = dict(d.chance)
        if dst in d.chance:
            repl = (e.replacement_cpts or {}).get(dst)
            if repl is None:
                raise EditError(f"re-parenting {dst!r} needs a replacement CPT")
            chance[dst] = replace(chance[dst], cpt=repl)
        cyc = _has_cycle(set(chance) | set(d.decisions)
                         | {v.name for v in d.values}, arcs)
        if cyc:
            raise EditError("edit introduces a cycle: " + "->".join(cyc))
        return _checked(replace(d, chance=chance, arcs=arcs))

    if e.kind == "remove_arc":
        if e.arc is None or e.arc not in d.arcs:
            raise EditError(f"arc {e.arc} not present")
        src, dst = e.arc
        arcs = tuple(a for a in d.arcs if a != e.arc)
        chance = dict(d.chance)
        if dst in d.chance and src in d.chance:
            repl = (e.replacement_cpts or {}).get(dst)
            if repl is None:
                raise EditError(f"re-parenting {dst!r} needs a replacement CPT")
            chance[dst] = replace(chance[dst], cpt=repl)
        return _checked(replace(d, chance=chance, arcs=arcs))

    if e.kind == "set_cpt":
        if e.node not in d.chance or e.cpt is None:
            raise EditError("set_cpt needs an existing node and a cpt")
        chance = dict(d.chance)
        chance[e.node] = replace(chance[e.node], cpt=e.cpt,
                                 time=e.time or chance[e.node].time)
        return _checked(replace(d, chance=chance))

    if e.kind == "set_evidence":
        if e.evidence_var is None:
            raise EditError("set_evidence needs a variable")
        if e.evidence_state is None:
            evidence = {v: s for v, s in d.evidence.items()
                        if v != e.evidence_var}
            return _checked(replace(d, evidence=evidence))
        return _checked(d.with_evidence(e.evidence_var, e.evidence_state))

    raise EditError(f"unknown edit kind {e.kind!r}")


# ---------------------------------------------------------------------------
# rendering


def to_dot(d: InfluenceDiagram) -> str:
    """Graphviz rendering with a stable node and arc order.

    Chance nodes are ellipses, decision nodes boxes, value nodes diamonds;
    evidence nodes are doubly outlined and show their observed state.
    """
    lines = ["digraph diagram {", "  rankdir=LR;"]
    for name in sorted(d.chance):
        node = d.chance[name]
        attrs = ["shape=ellipse"]
        if name in d.evidence:
            attrs.append("peripheries=2")
            attrs.append(f'label="{name} = {d.evidence[name]}"')
        else:
            attrs.append(f'label="{name}"')
        if name in d.normal:
            attrs.append("style=bold")
        lines.append(f'  "{name}" [{", ".join(attrs)}];')
    for name in sorted(d.decisions):
        lines.append(f'  "{name}" [shape=box, label="{name}"];')
    for v in d.values:
        lines.append(f'  "{v.name}" [shape=diamond, label="{v.name}"];')
    for c, e in sorted(d.arcs):
        lines.append(f'  "{c}" -> "{e}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
