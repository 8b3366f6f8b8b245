"""Interactive diagnostic sessions.

A session is an immutable state threaded through three verbs. ``observe``
folds a finding into the model (building it on first contact, growing it
when the variable is missing) but never triggers revision. ``act`` commits
a treatment and records its expected worth. ``feedback`` is where time
moves: the new finding is weighed by sensitivity analysis against the
standing recommendation and exactly one round of updating runs, as mild or
as drastic as the verdict demands.

``replay`` runs a session script and returns a transcript whose canonical
JSON is byte-stable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from . import reports
from .construct import (DECISION_NODE, ConstructionTrace, Observation,
                        extend_with_variables, instantiate, observation_set)
from .diagram import InfluenceDiagram, ValueNode
from .equivalence import EquivalencePartition, diagram_partition
from .errors import SessionError, TimeRegressionError, UnknownElementError
from .inference import DecisionReport, _expected_utility_any, best_decision
from .kb import KnowledgeBase, UtilityTable, match_triggers
from .sensitivity import SensitivityReport, analyze
from .update import UpdatePlan, apply_plan, plan_update, update_probabilities


@dataclass(frozen=True)
class SessionEvent:
    kind: str                     # observe | act | feedback
    time: str
    payload: Mapping[str, str]


@dataclass(frozen=True)
class ActRecord:
    treatment: str
    time: str
    expected: float
    realized: float | None
    awaiting_outcome: bool


@dataclass(frozen=True)
class SessionState:
    kb: KnowledgeBase
    truth: Mapping[str, str] | None = None
    model_time: str | None = None
    diagram: InfluenceDiagram | None = None
    trace: ConstructionTrace | None = None
    observations: tuple[Observation, ...] = ()
    events: tuple[SessionEvent, ...] = ()
    acts: tuple[ActRecord, ...] = ()
    awaiting: str | None = None
    partition: EquivalencePartition | None = None
    decision: DecisionReport | None = None
    sensitivity: SensitivityReport | None = None
    plan: UpdatePlan | None = None
    last_time: str | None = None


def new_session(kb: KnowledgeBase,
                truth: Mapping[str, str] | None = None) -> SessionState:
    """Start a session; ``truth`` switches act into simulation scoring."""
    if truth is not None:
        normal = kb.normal_map()
        for var, state in truth.items():
            if var not in normal:
                raise SessionError(f"truth names non-hypothesis variable {var!r}")
            if state not in kb.variables[var].states:
                raise SessionError(f"unknown truth state {var}={state}")
    return SessionState(kb=kb, truth=truth)


def _check_time(state: SessionState, time: str) -> None:
    pos = state.kb.time_axis.position(time)
    if state.last_time is not None and pos < state.kb.time_axis.position(state.last_time):
        raise TimeRegressionError(
            f"time {time!r} precedes the session's last event at "
            f"{state.last_time!r}")


def _refresh_reports(state: SessionState, diagram: InfluenceDiagram,
                     **changes) -> SessionState:
    """Recompute the partition and decision for the new diagram; a diagram
    that cannot decide yet stores nothing."""
    if diagram.is_decision_ready():
        partition = diagram_partition(diagram)
        decision = best_decision(diagram, partition)
    else:
        partition = None
        decision = None
    return replace(state, diagram=diagram, partition=partition,
                   decision=decision, **changes)


def _all_evidence(state: SessionState, diagram: InfluenceDiagram,
                  observations: Sequence[Observation]) -> dict[str, str]:
    ev = observation_set(observations).as_evidence(state.kb.time_axis)
    return {v: s for v, s in ev.items() if v in diagram.chance}


def _apply_trigger_effects(state: SessionState, diagram: InfluenceDiagram,
                           observations: Sequence[Observation],
                           ) -> tuple[InfluenceDiagram, tuple[str, ...]]:
    """Re-seat CPT variants selected by fired rules and list the hypotheses
    that include-effects demand. The diagram keeps its current time."""
    kb = state.kb
    firings = match_triggers(kb, observations)
    variant_for: dict[str, str] = {}
    includes: list[str] = []
    for f in firings:
        if f.rule.effect_kind == "variant":
            variant_for[f.rule.effect_var] = f.rule.effect_tag
        elif f.rule.effect_kind == "include":
            if f.rule.effect_var not in includes:
                includes.append(f.rule.effect_var)
    chance = dict(diagram.chance)
    changed = False
    for var, tag in variant_for.items():
        node = chance.get(var)
        if node is None or node.variant == tag:
            continue
        cpt = kb.cpt_bank.lookup(var, node.time, kb.time_axis, tag)
        if cpt is None or cpt.states != node.states:
            continue
        chance[var] = replace(node, cpt=cpt, variant=tag)
        changed = True
    if changed:
        diagram = replace(diagram, chance=chance)
    return diagram, tuple(includes)


def observe(state: SessionState, var: str, value: str,
            time: str) -> SessionState:
    """Fold one finding in. Builds the model on the first finding; after
    that, grows the model when the variable is absent and refreshes the
    evidence. No revision machinery runs here."""
    _check_time(state, time)
    ob = Observation(var=var, state=value, time=time, source="observe")
    observations = state.observations + (ob,)
    event = SessionEvent(kind="observe", time=time,
                         payload={"var": var, "state": value})

    if state.diagram is None:
        diagram, trace = instantiate(state.kb, observations, time)
        return _refresh_reports(
            state, diagram,
            trace=trace, observations=observations,
            events=state.events + (event,),
            model_time=time, last_time=time)

    decl = state.kb.variables.get(var)
    if decl is None:
        raise UnknownElementError(f"finding on unknown variable: {var}")
    if decl.role == "hypothesis":
        raise SessionError(
            f"findings must be on observable or intermediate variables, "
            f"not {var!r}")
    if value not in decl.states:
        raise UnknownElementError(f"unknown state in finding: {var}={value}")

    diagram = state.diagram
    diagram, includes = _apply_trigger_effects(state, diagram, observations)
    need = [v for v in (var, *includes) if v not in diagram.chance]
    if need:
        diagram, _ = extend_with_variables(state.kb, diagram, need,
                                           state.model_time)
    diagram = replace(diagram,
                      evidence=_all_evidence(state, diagram, observations))
    return _refresh_reports(
        state, diagram,
        observations=observations,
        events=state.events + (event,),
        last_time=time)


def act(state: SessionState, treatment: str, time: str) -> SessionState:
    """Commit a treatment. Appends a sub-value record carrying its expected
    worth (or its truth-scored worth in simulation); a test treatment puts
    the session into an awaiting state until feedback arrives."""
    _check_time(state, time)
    if state.awaiting is not None:
        raise SessionError(
            f"cannot act while awaiting the outcome of {state.awaiting!r}")
    if state.diagram is None or not state.diagram.is_decision_ready():
        raise SessionError("cannot act before the model can decide")
    if treatment not in state.diagram.alternatives():
        raise UnknownElementError(
            f"{treatment!r} is not among the current alternatives")

    expected = _expected_utility_any(state.diagram, treatment)
    realized = None
    if state.truth is not None:
        table = state.diagram.active_utility()
        realized = table.value(treatment, state.truth, state.kb.normal_map())

    declared = {t.name: t for t in state.kb.treatments}
    is_test = declared[treatment].is_test if treatment in declared else False

    # the committed action is kept as its own sub-value term; the final
    # value node stays last so it keeps ranking future decisions
    table = state.diagram.active_utility()
    literal = {(t, lit): v for (t, lit), v in table.literal.items()
               if t == treatment}
    override = {(t, key): v for (t, key), v in table.override.items()
                if t == treatment}
    sub = ValueNode(name=f"value-{len(state.diagram.values) + 1}",
                    utility=UtilityTable(literal=literal, override=override))
    values = state.diagram.values[:-1] + (sub, state.diagram.values[-1])
    arcs = state.diagram.arcs + ((DECISION_NODE, sub.name),)
    diagram = replace(state.diagram, values=values, arcs=arcs)

    record = ActRecord(treatment=treatment, time=time, expected=expected,
                       realized=realized, awaiting_outcome=is_test)
    event = SessionEvent(kind="act", time=time,
                         payload={"treatment": treatment})
    return _refresh_reports(
        state, diagram,
        acts=state.acts + (record,),
        events=state.events + (event,),
        awaiting=treatment if is_test else state.awaiting,
        last_time=time)


def feedback(state: SessionState, var: str, value: str,
             time: str) -> SessionState:
    """Deliver a post-action finding and run one update round.

    The finding is matched against trigger rules, then sensitivity analysis
    asks whether any treatment outside the incumbent's class would beat the
    standing expected utility once the finding and the triggered hypotheses
    are in play. The verdict's plan is applied immediately; whatever the
    plan did not pull in, the finding itself forces, so the model always
    ends up carrying the new evidence.
    """
    _check_time(state, time)
    if state.diagram is None:
        raise SessionError("feedback needs an existing model; observe first")
    decl = state.kb.variables.get(var)
    if decl is None:
        raise UnknownElementError(f"feedback on unknown variable: {var}")
    if decl.role == "hypothesis":
        raise SessionError(
            "feedback reports findings, not hypotheses; observe their "
            "effects instead")
    if value not in decl.states:
        raise UnknownElementError(f"unknown state in feedback: {var}={value}")

    ob = Observation(var=var, state=value, time=time, source="feedback")
    observations = state.observations + (ob,)
    event = SessionEvent(kind="feedback", time=time,
                         payload={"var": var, "state": value})
    kb = state.kb

    diagram, includes = _apply_trigger_effects(state, state.diagram,
                                               observations)

    report = None
    plan = None
    if diagram.is_decision_ready():
        report = analyze(diagram, kb, time,
                         partition=state.partition,
                         pending_evidence=(ob,),
                         forced_includes=includes)
        plan = plan_update(report, time)

    model_time = state.model_time
    trace = state.trace
    if plan is not None and plan.steps:
        diagram, records = apply_plan(kb, diagram, plan,
                                      observations=observations,
                                      event_log=observations)
        model_time = plan.time
        for rec in records:
            if isinstance(rec, ConstructionTrace):
                trace = rec

    # the finding must land even when the verdict was to change nothing;
    # triggered hypotheses, by contrast, only enter through a plan
    if var not in diagram.chance:
        diagram, _ = extend_with_variables(kb, diagram, [var], model_time)
    diagram = replace(diagram,
                      evidence=_all_evidence(state, diagram, observations))

    return _refresh_reports(
        state, diagram,
        observations=observations,
        events=state.events + (event,),
        trace=trace,
        sensitivity=report,
        plan=plan,
        awaiting=None,
        model_time=model_time,
        last_time=time)


def recommend(state: SessionState) -> dict:
    return reports.recommendation_payload(state)


# ---------------------------------------------------------------------------
# scripted replay


@dataclass(frozen=True)
class ScriptStep:
    verb: str
    line: int
    time: str | None = None
    assignment: Mapping[str, str] = field(default_factory=dict)
    treatment: str | None = None


def parse_script(text: str) -> tuple[ScriptStep, ...]:
    """Parse a session script: one directive per line.

        truth <var>=<state> [<var>=<state> ...]
        observe <var>=<state> @ <time>
        act <treatment> @ <time>
        feedback <var>=<state> @ <time>

    ``#`` starts a comment. ``truth``, when present, must come first.
    """
    steps: list[ScriptStep] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        verb = tokens[0]
        if verb == "truth":
            if steps:
                raise SessionError(
                    f"line {lineno}: truth must be the first directive")
            assignment: dict[str, str] = {}
            for tok in tokens[1:]:
                for piece in tok.split(","):
                    if "=" not in piece:
                        raise SessionError(
                            f"line {lineno}: expected var=state, got {piece!r}")
                    v, s = piece.split("=", 1)
                    assignment[v.strip()] = s.strip()
            if not assignment:
                raise SessionError(f"line {lineno}: truth needs an assignment")
            steps.append(ScriptStep(verb="truth", line=lineno,
                                    assignment=assignment))
            continue
        if verb not in ("observe", "act", "feedback"):
            raise SessionError(f"line {lineno}: unknown directive {verb!r}")
        if "@" not in tokens:
            raise SessionError(f"line {lineno}: missing '@ <time>'")
        at = tokens.index("@")
        if at + 1 >= len(tokens) or at + 2 < len(tokens):
            raise SessionError(f"line {lineno}: expected one time after '@'")
        time = tokens[at + 1]
        body = tokens[1:at]
        if verb == "act":
            if len(body) != 1:
                raise SessionError(f"line {lineno}: act takes one treatment")
            steps.append(ScriptStep(verb="act", line=lineno, time=time,
                                    treatment=body[0]))
        else:
            if len(body) != 1 or "=" not in body[0]:
                raise SessionError(
                    f"line {lineno}: {verb} takes one var=state")
            v, s = body[0].split("=", 1)
            steps.append(ScriptStep(verb=verb, line=lineno, time=time,
                                    assignment={v: s}))
    return tuple(steps)


def replay(kb: KnowledgeBase, script: str | Sequence[ScriptStep],
           ) -> tuple[SessionState, tuple[dict, ...]]:
    """Run a script from a fresh session.

    The transcript holds one entry per directive with the recommendation
    in force after it; rendering it with canonical JSON gives the same
    bytes on every run.
    """
    steps = parse_script(script) if isinstance(script, str) else tuple(script)
    truth = None
    if steps and steps[0].verb == "truth":
        truth = dict(steps[0].assignment)
        steps = steps[1:]
    state = new_session(kb, truth=truth)
    transcript: list[dict] = []
    for i, step in enumerate(steps):
        if step.verb == "observe":
            ((v, s),) = step.assignment.items()
            state = observe(state, v, s, step.time)
            detail = {"var": v, "state": s}
        elif step.verb == "feedback":
            ((v, s),) = step.assignment.items()
            state = feedback(state, v, s, step.time)
            detail = {"var": v, "state": s}
        elif step.verb == "act":
            state = act(state, step.treatment, step.time)
            detail = {"treatment": step.treatment,
                      "record": reports.act_payload(state.acts[-1])}
        else:
            raise SessionError(f"unexpected verb {step.verb!r}")
        transcript.append({
            "step": i,
            "verb": step.verb,
            "time": step.time,
            "detail": detail,
            "recommendation": reports.recommendation_payload(state),
        })
    return state, tuple(transcript)
