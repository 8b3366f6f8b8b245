"""Model construction: from knowledge base plus findings to a decision model.

The constructed diagram contains exactly the chance variables that the
findings make relevant: the observed variables, every knowledge-base
ancestor of an observed variable, any hypotheses demanded by fired trigger
rules, and, for a triggered hypothesis with no path to the rest, its
descendant closure so the new hypothesis is connected to something
observable. One decision node offers the treatments whose utility bears on
an included hypothesis; one value node carries the utility function.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .diagram import ChanceNode, DecisionNode, InfluenceDiagram, ValueNode
from .errors import MissingCptError, SessionError, UnknownElementError
from .kb import Cpt, KnowledgeBase, TriggerFiring, match_triggers

DECISION_NODE = "treatment"
VALUE_NODE = "value"


@dataclass(frozen=True)
class Observation:
    """One reported finding: a variable took a state at a time index."""

    var: str
    state: str
    time: str
    source: str = "report"


@dataclass(frozen=True)
class ObservationSet:
    observations: tuple[Observation, ...]

    def as_evidence(self, axis) -> dict[str, str]:
        """Latest report per variable wins; arrival order breaks time ties."""
        best: dict[str, tuple[int, int, str]] = {}
        for i, ob in enumerate(self.observations):
            pos = axis.position(ob.time)
            cur = best.get(ob.var)
            if cur is None or (pos, i) >= (cur[0], cur[1]):
                best[ob.var] = (pos, i, ob.state)
        return {var: state for var, (_, _, state) in best.items()}

    def vars(self) -> tuple[str, ...]:
        return tuple(sorted({ob.var for ob in self.observations}))


def observation_set(observations: Iterable[Observation]) -> ObservationSet:
    return ObservationSet(tuple(observations))


@dataclass(frozen=True)
class VariantChoice:
    var: str
    tag: str
    reason: str               # "trigger" | "history"


@dataclass(frozen=True)
class ConstructionTrace:
    """Why each element of the constructed diagram is there."""

    time: str
    included: Mapping[str, str]           # var -> inclusion reason
    variants: tuple[VariantChoice, ...]
    firings: tuple[TriggerFiring, ...]
    alternatives: tuple[str, ...]
    evidence: Mapping[str, str]


@dataclass(frozen=True)
class ExtensionRecord:
    added: tuple[str, ...]
    reparented: tuple[str, ...]
    arcs_added: tuple[tuple[str, str], ...]
    alternatives: tuple[str, ...]


def bank_cpt(kb: KnowledgeBase, var: str, time: str,
             variant: str | None = None) -> Cpt:
    """CPT in force for ``var`` at ``time``: the variant entry when one
    covers the time, the default entry otherwise."""
    cpt = None
    if variant is not None:
        cpt = kb.cpt_bank.lookup(var, time, kb.time_axis, variant)
    if cpt is None:
        cpt = kb.cpt_bank.lookup(var, time, kb.time_axis)
    if cpt is None:
        raise MissingCptError(
            f"no CPT for {var!r} at or before time {time!r}")
    return cpt


def eligible_treatments(kb: KnowledgeBase,
                        included: Iterable[str]) -> tuple[str, ...]:
    """Treatments worth offering: those whose utility touches an included
    hypothesis, plus diagnosis-independent treatments (which touch none).
    Declaration order is preserved."""
    normal = kb.normal_map()
    hyps = {v for v in included if v in normal}
    out = []
    for t in kb.treatments:
        touched = kb.utilities.touched_hypotheses(t.name, normal)
        if not touched or touched & hyps:
            out.append(t.name)
    return tuple(out)


def _check_observations(kb: KnowledgeBase, obs: ObservationSet) -> None:
    for ob in obs.observations:
        var = kb.variables.get(ob.var)
        if var is None:
            raise UnknownElementError(f"finding on unknown variable: {ob.var}")
        if ob.state not in var.states:
            raise UnknownElementError(
                f"unknown state in finding: {ob.var}={ob.state}")
        if var.role == "hypothesis":
            raise SessionError(
                f"findings must be on observable or intermediate variables, "
                f"not {ob.var!r}")
        kb.time_axis.position(ob.time)


def _ancestor_closure(kb: KnowledgeBase, seed: Iterable[str]) -> set[str]:
    out = set(seed)
    for v in tuple(out):
        out.update(kb.ancestors(v))
    return out


def assign_probabilities(kb: KnowledgeBase, included: Iterable[str],
                         time: str,
                         variants: Mapping[str, str] | None = None,
                         ) -> dict[str, ChanceNode]:
    """Build chance nodes for ``included`` with the CPTs in force at
    ``time``. The set must be ancestor-closed or validation will reject
    the result downstream."""
    variants = variants or {}
    nodes: dict[str, ChanceNode] = {}
    for name in sorted(set(included)):
        decl = kb.variables[name]
        tag = variants.get(name)
        cpt = None
        used = None
        if tag is not None:
            cpt = kb.cpt_bank.lookup(name, time, kb.time_axis, tag)
            if cpt is not None:
                used = tag
        if cpt is None:
            cpt = kb.cpt_bank.lookup(name, time, kb.time_axis)
        if cpt is None:
            raise MissingCptError(f"no CPT for {name!r} at or before {time!r}")
        nodes[name] = ChanceNode(name=name, states=decl.states, cpt=cpt,
                                 time=time, variant=used, role=decl.role)
    return nodes


def instantiate(kb: KnowledgeBase,
                observations: ObservationSet | Sequence[Observation],
                time: str,
                event_log: Sequence | None = None,
                ) -> tuple[InfluenceDiagram, ConstructionTrace]:
    """Construct the decision model the findings call for.

    ``event_log`` is the full report history used for trigger matching;
    it defaults to the observations themselves.
    """
    obs = observations if isinstance(observations, ObservationSet) \
        else observation_set(observations)
    if not obs.observations:
        raise SessionError("cannot construct a model from no findings")
    _check_observations(kb, obs)
    kb.time_axis.position(time)

    log = event_log if event_log is not None else obs.observations
    firings = tuple(match_triggers(kb, log))

    reason: dict[str, str] = {}
    for v in obs.vars():
        reason[v] = "observed"
    for v in obs.vars():
        for a in kb.ancestors(v):
            reason.setdefault(a, "ancestor-of-observed")

    variant_for: dict[str, str] = {}
    variant_reason: dict[str, str] = {}
    bridge_seeds: list[str] = []
    for firing in firings:
        rule = firing.rule
        if rule.effect_kind == "variant":
            variant_for[rule.effect_var] = rule.effect_tag
            variant_reason[rule.effect_var] = \
                "history" if len(rule.pattern) > 1 else "trigger"
        elif rule.effect_kind == "include":
            if rule.effect_var not in reason:
                reason[rule.effect_var] = "trigger-include"
                bridge_seeds.append(rule.effect_var)
            else:
                reason.setdefault(rule.effect_var, "trigger-include")

    # a triggered hypothesis with no tie to the observed part gets its
    # descendant closure, so evidence on those descendants can reach it
    for h in bridge_seeds:
        for dsc in kb.descendants(h):
            reason.setdefault(dsc, "descendant-bridge")

    included = _ancestor_closure(kb, reason)
    for v in included:
        reason.setdefault(v, "descendant-bridge")

    active_variants = {v: t for v, t in variant_for.items() if v in included}
    chance = assign_probabilities(kb, included, time, active_variants)
    arcs = [(c, e) for c, e in kb.arcs if c in included and e in included]

    alternatives = eligible_treatments(kb, included)
    decisions = {DECISION_NODE: DecisionNode(name=DECISION_NODE,
                                             alternatives=alternatives)}
    values = (ValueNode(name=VALUE_NODE, utility=kb.utilities),)
    normal = {v: s for v, s in kb.normal_map().items() if v in included}
    for h in sorted(normal):
        arcs.append((h, VALUE_NODE))
    arcs.append((DECISION_NODE, VALUE_NODE))

    evidence = {v: s for v, s in obs.as_evidence(kb.time_axis).items()}
    diagram = InfluenceDiagram(
        chance=chance,
        decisions=decisions,
        values=values,
        arcs=tuple(sorted(arcs)),
        evidence=evidence,
        normal=normal,
    )
    choices = tuple(VariantChoice(var=v, tag=t, reason=variant_reason[v])
                    for v, t in sorted(active_variants.items()))
    trace = ConstructionTrace(
        time=time,
        included=dict(sorted(reason.items())),
        variants=choices,
        firings=firings,
        alternatives=alternatives,
        evidence=evidence,
    )
    return diagram, trace


def extend_with_variables(kb: KnowledgeBase, diagram: InfluenceDiagram,
                          required: Iterable[str], time: str,
                          ) -> tuple[InfluenceDiagram, ExtensionRecord]:
    """Grow an existing diagram to cover ``required`` variables.

    New variables arrive with their knowledge-base ancestors and the arcs
    that connect them; an existing node that gains a parent is re-seated on
    its bank CPT at ``time`` (keeping its variant when the bank still
    covers it). The decision node's alternatives are recomputed for the
    enlarged hypothesis set.
    """
    for v in required:
        if v not in kb.variables:
            raise UnknownElementError(f"cannot extend with unknown variable: {v}")
    existing = set(diagram.chance)
    final = existing | _ancestor_closure(kb, required)

    # an existing node that gains a parent takes its full bank CPT, whose
    # parent set may demand further variables; iterate to a fixed point
    while True:
        reparent = {e for c, e in kb.arcs
                    if c in final and e in existing
                    and (c, e) not in diagram.arcs}
        grow = set()
        for node in reparent:
            grow.update(p for p in kb.parents(node) if p not in final)
        if not grow:
            break
        final |= _ancestor_closure(kb, grow)

    added = sorted(final - existing)
    if not added and not reparent:
        record = ExtensionRecord(added=(), reparented=(), arcs_added=(),
                                 alternatives=diagram.alternatives())
        return diagram, record

    chance = dict(diagram.chance)
    for name in added:
        decl = kb.variables[name]
        cpt = bank_cpt(kb, name, time)
        chance[name] = ChanceNode(name=name, states=decl.states, cpt=cpt,
                                  time=time, role=decl.role)
    for name in sorted(reparent):
        node = chance[name]
        cpt = bank_cpt(kb, name, time, node.variant)
        chance[name] = replace(node, cpt=cpt, time=time)

    arcs = list(diagram.arcs)
    arcs_added = []
    for c, e in kb.arcs:
        if c in final and e in final and (c, e) not in diagram.arcs:
            if e in added or e in reparent:
                arcs.append((c, e))
                arcs_added.append((c, e))

    normal = dict(diagram.normal)
    for name in added:
        decl = kb.variables[name]
        if decl.role == "hypothesis" and decl.normal is not None:
            normal[name] = decl.normal
            arcs.append((name, VALUE_NODE))
            arcs_added.append((name, VALUE_NODE))

    alternatives = eligible_treatments(kb, final)
    decisions = dict(diagram.decisions)
    if DECISION_NODE in decisions:
        decisions[DECISION_NODE] = replace(decisions[DECISION_NODE],
                                           alternatives=alternatives)

    new_diagram = replace(diagram, chance=chance, arcs=tuple(sorted(arcs)),
                          normal=normal, decisions=decisions)
    record = ExtensionRecord(
        added=tuple(added),
        reparented=tuple(sorted(reparent)),
        arcs_added=tuple(sorted(arcs_added)),
        alternatives=alternatives,
    )
    return new_diagram, record
