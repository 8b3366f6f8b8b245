"""Report payloads and canonical JSON rendering.

Every externally visible artifact (CLI output, HTTP bodies, replay
transcripts) goes through these builders, so two runs over the same inputs
produce byte-identical text: containers are built in sorted or declared
order and serialization always uses sorted keys with a fixed indent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping


@dataclass(frozen=True)
class Report:
    kind: str          # validation | decision | sensitivity | plan | session-snapshot
    payload: Mapping

    def to_json(self) -> str:
        return canonical_json({"kind": self.kind, "payload": self.payload})


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2)


def validation_payload(violations) -> dict:
    return {
        "valid": not violations,
        "violations": [
            {"kind": v.kind, "subject": v.subject, "message": v.message}
            for v in violations
        ],
    }


def decision_payload(report) -> dict:
    return {
        "best_treatment": report.best_treatment,
        "best_value": report.best_value,
        "per_treatment": {t: v for t, v in sorted(report.per_treatment.items())},
        "runner_up": report.runner_up,
        "runner_up_value": report.runner_up_value,
        "single_class": report.single_class,
        "tie": list(report.tie),
        "hypothesis_marginals": {
            var: {s: p for s, p in sorted(dist.items())}
            for var, dist in sorted(report.hypothesis_marginals.items())
        },
    }


def sensitivity_payload(report) -> dict:
    return {
        "time": report.time,
        "incumbent": report.incumbent,
        "incumbent_class": report.incumbent_class,
        "beta": report.beta,
        "candidates": list(report.candidates),
        "verdict": report.verdict,
        "margin": report.margin,
        "rebuild_fraction": report.rebuild_fraction,
        "challengers": [
            {
                "time": c.time,
                "treatment": c.treatment,
                "class_id": c.class_id,
                "value": c.value,
                "exceeds_beta": c.exceeds_beta,
                "missing_nodes": list(c.missing_nodes),
                "error": c.error,
            }
            for c in report.challengers
        ],
    }


def plan_payload(plan) -> dict:
    return {
        "verdict": plan.verdict,
        "time": plan.time,
        "steps": [
            {"kind": s.kind, "time": s.time, "variables": list(s.variables)}
            for s in plan.steps
        ],
    }


def trace_payload(trace) -> dict:
    return {
        "time": trace.time,
        "included": dict(sorted(trace.included.items())),
        "variants": [
            {"var": v.var, "tag": v.tag, "reason": v.reason}
            for v in trace.variants
        ],
        "firings": [
            {"rule": f.rule.name, "position": f.position}
            for f in trace.firings
        ],
        "alternatives": list(trace.alternatives),
        "evidence": dict(sorted(trace.evidence.items())),
    }


def diagram_payload(d) -> dict:
    return {
        "chance": [
            {
                "name": name,
                "role": node.role,
                "states": list(node.states),
                "parents": list(node.cpt.parents),
                "time": node.time,
                "variant": node.variant,
            }
            for name, node in sorted(d.chance.items())
        ],
        "decisions": [
            {"name": name, "alternatives": list(node.alternatives)}
            for name, node in sorted(d.decisions.items())
        ],
        "values": [v.name for v in d.values],
        "arcs": [list(a) for a in sorted(d.arcs)],
        "evidence": dict(sorted(d.evidence.items())),
        "normal": dict(sorted(d.normal.items())),
    }


def partition_payload(partition) -> dict:
    return {
        "quantum": partition.quantum,
        "classes": [
            {"id": i, "members": [m.key() for m in members]}
            for i, members in enumerate(partition.classes)
        ],
        "treatment_classes": {
            t: partition.treatment_class_of(t)
            for t in sorted(partition.space.treatments)
        },
        "ambiguous_treatments": sorted(partition.ambiguous_treatments),
    }


def act_payload(record) -> dict:
    return {
        "treatment": record.treatment,
        "time": record.time,
        "expected": record.expected,
        "realized": record.realized,
        "awaiting_outcome": record.awaiting_outcome,
    }


def recommendation_payload(state) -> dict:
    """The composite answer to "what should be done now and how solid is
    it": latest decision, latest sensitivity verdict, construction trace."""
    return {
        "model_time": state.model_time,
        "decision": decision_payload(state.decision) if state.decision else None,
        "sensitivity": sensitivity_payload(state.sensitivity)
        if state.sensitivity else None,
        "trace": trace_payload(state.trace) if state.trace else None,
    }


def snapshot_payload(state) -> dict:
    return {
        "model_time": state.model_time,
        "last_time": state.last_time,
        "awaiting": state.awaiting,
        "truth": dict(sorted(state.truth.items())) if state.truth else None,
        "events": [
            {"kind": e.kind, "time": e.time,
             "payload": dict(sorted(e.payload.items()))}
            for e in state.events
        ],
        "acts": [act_payload(a) for a in state.acts],
        "plan": plan_payload(state.plan) if state.plan else None,
        "diagram": diagram_payload(state.diagram) if state.diagram else None,
        "recommendation": recommendation_payload(state),
    }
