"""Forward sensitivity analysis: will the recommendation survive new times
and new findings, and if not, how much of the model has to change?

The incumbent's expected utility on the current model is frozen as the bar
to beat. Every other treatment is scored at each candidate time on a probe
model (current model re-seated on that time's probabilities, extended with
whatever variables the treatment's utility or the pending findings need).
A challenger counts only when it strictly beats the bar; treatments in the
incumbent's own equivalence class are immune, since switching inside a
class changes nothing that matters.

Verdicts: ``no-update`` (nobody beats the bar), ``values-only`` (beaten
without borrowing variables), ``topology`` (the winners needed variables
the model lacks), or ``reinstantiate`` (adding them would touch more than
REBUILD_FRACTION of the model, so rebuild instead).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .construct import Observation, ObservationSet, extend_with_variables, \
    observation_set
from .diagram import InfluenceDiagram
from .equivalence import EquivalencePartition, diagram_partition
from .errors import EngineError
from .inference import _expected_utility_any, best_decision
from .kb import KnowledgeBase, TimeAxis
from .update import update_probabilities

REBUILD_FRACTION = 0.5
CANDIDATE_RADIUS = 2


@dataclass(frozen=True)
class Challenger:
    """One treatment scored at one candidate time."""

    time: str
    treatment: str
    class_id: int
    value: float | None
    exceeds_beta: bool
    missing_nodes: tuple[str, ...]
    error: str | None = None


@dataclass(frozen=True)
class SensitivityReport:
    time: str
    incumbent: str
    incumbent_class: int
    beta: float
    candidates: tuple[str, ...]
    challengers: tuple[Challenger, ...]
    verdict: str
    margin: float | None
    rebuild_fraction: float | None


def default_candidates(axis: TimeAxis, time: str,
                       radius: int = CANDIDATE_RADIUS) -> tuple[str, ...]:
    return axis.window(time, radius)


def _probe(kb: KnowledgeBase, diagram: InfluenceDiagram, time: str,
           treatment: str, pending: ObservationSet,
           forced: Sequence[str]) -> tuple[float, tuple[str, ...]]:
    """Score one treatment at one time; returns (value, nodes added)."""
    d = update_probabilities(kb, diagram, time).diagram
    normal = kb.normal_map()
    need = {v for v in forced if v not in d.chance}
    need.update(v for v in kb.utilities.touched_hypotheses(treatment, normal)
                if v not in d.chance)
    need.update(ob.var for ob in pending.observations
                if ob.var not in d.chance)
    added: tuple[str, ...] = ()
    if need:
        d, rec = extend_with_variables(kb, d, sorted(need), time)
        added = rec.added
    for var, state in sorted(pending.as_evidence(kb.time_axis).items()):
        d = d.with_evidence(var, state)
    return _expected_utility_any(d, treatment), added


def classify_update(kb: KnowledgeBase, diagram: InfluenceDiagram, time: str,
                    challengers: Sequence[Challenger],
                    ) -> tuple[str, float | None]:
    """Aggregate challenger outcomes into a verdict.

    When exceeding challengers borrowed variables, the cost of adopting
    them all is estimated as the fraction of the grown model that changes:
    added nodes, re-seated existing nodes, and the decision node if its
    alternatives move. Over REBUILD_FRACTION, rebuilding wins.
    """
    exceeders = [c for c in challengers if c.exceeds_beta]
    if not exceeders:
        return "no-update", None
    missing = sorted({n for c in exceeders for n in c.missing_nodes})
    if not missing:
        return "values-only", None
    _, rec = extend_with_variables(kb, diagram, missing, time)
    touched = len(rec.added) + len(rec.reparented)
    if tuple(rec.alternatives) != tuple(diagram.alternatives()):
        touched += 1
    fraction = touched / (diagram.node_count() + len(rec.added))
    verdict = "reinstantiate" if fraction > REBUILD_FRACTION else "topology"
    return verdict, fraction


def analyze(diagram: InfluenceDiagram, kb: KnowledgeBase, time: str,
            candidates: Sequence[str] | None = None,
            partition: EquivalencePartition | None = None,
            *,
            pending_evidence: Sequence[Observation] | ObservationSet = (),
            forced_includes: Sequence[str] = ()) -> SensitivityReport:
    """Full sensitivity pass anchored at ``time``.

    ``pending_evidence`` holds findings not yet folded into the model; they
    are applied to every probe model (pulling their variables in when
    absent). ``forced_includes`` lists hypotheses that fired include
    triggers; every probe model must carry them.
    """
    if not diagram.is_decision_ready():
        raise EngineError("sensitivity needs a diagram with a decision to defend")
    pending = pending_evidence if isinstance(pending_evidence, ObservationSet) \
        else observation_set(pending_evidence)
    part = partition if partition is not None else diagram_partition(diagram)
    incumbent_report = best_decision(diagram, part)
    incumbent = incumbent_report.best_treatment
    beta = incumbent_report.best_value
    incumbent_class = part.treatment_class_of(incumbent)

    times = tuple(candidates) if candidates is not None \
        else default_candidates(kb.time_axis, time)
    for t in times:
        kb.time_axis.position(t)

    challengers: list[Challenger] = []
    for t in times:
        for name in kb.treatment_names():
            if name == incumbent:
                continue
            try:
                class_id = part.treatment_class_of(name)
            except EngineError:
                continue                 # treatment carries no utility at all
            if class_id == incumbent_class:
                continue                 # equivalent to the incumbent: immune
            try:
                value, added = _probe(kb, diagram, t, name, pending,
                                      forced_includes)
                challengers.append(Challenger(
                    time=t, treatment=name, class_id=class_id, value=value,
                    exceeds_beta=value > beta, missing_nodes=added))
            except EngineError as exc:
                challengers.append(Challenger(
                    time=t, treatment=name, class_id=class_id, value=None,
                    exceeds_beta=False, missing_nodes=(), error=str(exc)))

    verdict, fraction = classify_update(kb, diagram, time, challengers)
    safe = [beta - c.value for c in challengers
            if not c.exceeds_beta and c.value is not None]
    return SensitivityReport(
        time=time,
        incumbent=incumbent,
        incumbent_class=incumbent_class,
        beta=beta,
        candidates=times,
        challengers=tuple(challengers),
        verdict=verdict,
        margin=min(safe) if safe else None,
        rebuild_fraction=fraction,
    )
