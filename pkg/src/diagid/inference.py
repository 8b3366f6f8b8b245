"""Exact probabilistic inference and expected-utility scoring.

Queries run by variable elimination over dictionary-backed factors. The
elimination order is chosen by the min-fill heuristic with a lexicographic
tie-break, so repeated runs on the same diagram take the same path and
produce bit-identical results.

Expected utility is the posterior-weighted sum of the utility function over
joint hypothesis assignments (diagnoses). When the diagnosis space is larger
than DIAGNOSIS_CAP the score falls back to a per-literal decomposition,
which is exact as long as the utility function has no whole-diagnosis
override rows for the treatment being scored.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .diagram import InfluenceDiagram
from .errors import EngineError, UnknownElementError, ZeroEvidenceError
from .kb import UtilityTable

DIAGNOSIS_CAP = 2 ** 20
VALUE_TOL = 1e-9


@dataclass(frozen=True)
class Factor:
    variables: tuple[str, ...]
    table: Mapping[tuple[str, ...], float]


def _restrict(f: Factor, var: str, state: str) -> Factor:
    idx = f.variables.index(var)
    out_vars = f.variables[:idx] + f.variables[idx + 1:]
    table = {k[:idx] + k[idx + 1:]: v
             for k, v in f.table.items() if k[idx] == state}
    return Factor(out_vars, table)


def _multiply(a: Factor, b: Factor, domains: Mapping[str, tuple[str, ...]]) -> Factor:
    extra = tuple(v for v in b.variables if v not in a.variables)
    out_vars = a.variables + extra
    table: dict[tuple[str, ...], float] = {}
    extra_domains = [domains[v] for v in extra]
    for akey, aval in a.table.items():
        assign = dict(zip(a.variables, akey))
        for combo in itertools.product(*extra_domains):
            assign.update(zip(extra, combo))
            bkey = tuple(assign[v] for v in b.variables)
            table[akey + combo] = aval * b.table.get(bkey, 0.0)
    return Factor(out_vars, table)


def _sum_out(f: Factor, var: str) -> Factor:
    idx = f.variables.index(var)
    out_vars = f.variables[:idx] + f.variables[idx + 1:]
    table: dict[tuple[str, ...], float] = defaultdict(float)
    for k, v in f.table.items():
        table[k[:idx] + k[idx + 1:]] += v
    return Factor(out_vars, dict(table))


def _elimination_order(to_eliminate: set[str],
                       scopes: Iterable[tuple[str, ...]]) -> list[str]:
    """Min-fill ordering; ties go to the lexicographically smallest name."""
    graph: dict[str, set[str]] = defaultdict(set)
    for scope in scopes:
        for a in scope:
            graph[a]                            # ensure presence
            for b in scope:
                if a != b:
                    graph[a].add(b)
    order: list[str] = []
    remaining = set(to_eliminate)
    while remaining:
        best: str | None = None
        best_fill = -1
        for v in sorted(remaining):
            nbrs = [n for n in graph.get(v, ()) if n != v]
            fill = sum(1 for a, b in itertools.combinations(sorted(nbrs), 2)
                       if b not in graph[a])
            if best is None or fill < best_fill:
                best, best_fill = v, fill
        assert best is not None
        nbrs = [n for n in graph.get(best, ())]
        for a, b in itertools.combinations(nbrs, 2):
            graph[a].add(b)
            graph[b].add(a)
        for n in nbrs:
            graph[n].discard(best)
        graph.pop(best, None)
        remaining.discard(best)
        order.append(best)
    return order


def _node_factors(d: InfluenceDiagram) -> list[Factor]:
    factors = []
    for name in sorted(d.chance):
        node = d.chance[name]
        table: dict[tuple[str, ...], float] = {}
        for pkey, row in node.cpt.rows.items():
            for state, p in zip(node.cpt.states, row):
                table[tuple(pkey) + (state,)] = p
        factors.append(Factor(node.cpt.parents + (name,), table))
    return factors


def posterior(d: InfluenceDiagram,
              query: Sequence[str]) -> dict[tuple[str, ...], float]:
    """Joint posterior over ``query`` given the diagram's evidence.

    Keys are state tuples aligned with the sorted query variables. Raises
    ZeroEvidenceError when the evidence has probability zero under the
    current model.
    """
    qvars = tuple(sorted(set(query)))
    unknown = [q for q in qvars if q not in d.chance]
    if unknown:
        raise UnknownElementError(f"query over unknown nodes: {unknown}")
    domains = {n: node.states for n, node in d.chance.items()}

    factors = _node_factors(d)
    for var, state in sorted(d.evidence.items()):
        factors = [_restrict(f, var, state) if var in f.variables else f
                   for f in factors]

    free_q = [q for q in qvars if q not in d.evidence]
    to_eliminate = set(d.chance) - set(d.evidence) - set(free_q)
    for var in _elimination_order(to_eliminate, [f.variables for f in factors]):
        touching = [f for f in factors if var in f.variables]
        rest = [f for f in factors if var not in f.variables]
        merged = touching[0]
        for f in touching[1:]:
            merged = _multiply(merged, f, domains)
        factors = rest + [_sum_out(merged, var)]

    result = Factor((), {(): 1.0})
    for f in factors:
        result = _multiply(result, f, domains)
    total = sum(result.table.values())
    if total <= 0.0:
        raise ZeroEvidenceError(dict(d.evidence))

    out: dict[tuple[str, ...], float] = {}
    for combo in itertools.product(*(domains[q] for q in qvars)):
        assign = dict(zip(qvars, combo))
        if any(assign[v] != d.evidence[v] for v in qvars if v in d.evidence):
            out[combo] = 0.0
        else:
            key = tuple(assign[v] for v in result.variables)
            out[combo] = result.table.get(key, 0.0) / total
    return out


def marginal(d: InfluenceDiagram, var: str) -> dict[str, float]:
    return {combo[0]: p for combo, p in posterior(d, (var,)).items()}


# ---------------------------------------------------------------------------
# diagnoses


@dataclass(frozen=True)
class Diagnosis:
    """A joint assignment of the hypothesis variables.

    ``abnormal`` holds the literals that deviate from the normal state; an
    empty set is the all-normal diagnosis.
    """

    assignment: tuple[tuple[str, str], ...]
    abnormal: frozenset[tuple[str, str]]

    def as_dict(self) -> dict[str, str]:
        return dict(self.assignment)

    def label(self) -> str:
        if not self.abnormal:
            return "all-normal"
        return "+".join(f"{v}={s}" for v, s in sorted(self.abnormal))

    def key(self) -> str:
        return ",".join(f"{v}={s}" for v, s in self.assignment)


def make_diagnosis(assignment: Mapping[str, str],
                   normal: Mapping[str, str]) -> Diagnosis:
    items = tuple(sorted(assignment.items()))
    abnormal = frozenset((v, s) for v, s in items if normal.get(v) != s)
    return Diagnosis(assignment=items, abnormal=abnormal)


def diagnosis_space(d: InfluenceDiagram) -> list[Diagnosis]:
    hyps = d.hypothesis_vars()
    size = math.prod(len(d.chance[h].states) for h in hyps) if hyps else 1
    if size > DIAGNOSIS_CAP:
        raise EngineError(
            f"diagnosis space has {size} joint states, over the cap of "
            f"{DIAGNOSIS_CAP}")
    out = []
    for combo in itertools.product(*(d.chance[h].states for h in hyps)):
        out.append(make_diagnosis(dict(zip(hyps, combo)), d.normal))
    return out


def diagnosis_posterior(d: InfluenceDiagram) -> dict[Diagnosis, float]:
    """Posterior over joint hypothesis assignments given the evidence."""
    hyps = d.hypothesis_vars()
    diagnosis_space(d)                          # enforce the size cap
    post = posterior(d, hyps)
    out: dict[Diagnosis, float] = {}
    for combo, p in post.items():
        out[make_diagnosis(dict(zip(hyps, combo)), d.normal)] = p
    return out


# ---------------------------------------------------------------------------
# expected utility


def _literal_value(d: InfluenceDiagram, treatment: str,
                   utility: UtilityTable) -> float:
    if any(t == treatment for t, _ in utility.override):
        raise EngineError(
            f"treatment {treatment!r} has whole-diagnosis utility rows; "
            "cannot use the per-literal path above the diagnosis cap")
    total = 0.0
    for (t, (var, state)), weight in sorted(utility.literal.items()):
        if t != treatment or weight == 0.0 or var not in d.chance:
            continue
        if d.normal.get(var) == state:
            continue                            # normal literals never pay out
        total += weight * marginal(d, var).get(state, 0.0)
    return total


def _expected_utility_any(d: InfluenceDiagram, treatment: str,
                          utility: UtilityTable | None = None) -> float:
    """Expected utility without checking decision-node membership."""
    table = utility if utility is not None else d.active_utility()
    hyps = d.hypothesis_vars()
    size = math.prod(len(d.chance[h].states) for h in hyps) if hyps else 1
    if size > DIAGNOSIS_CAP:
        return _literal_value(d, treatment, table)
    total = 0.0
    for diagnosis, p in diagnosis_posterior(d).items():
        if p == 0.0:
            continue
        total += p * table.value(treatment, diagnosis.as_dict(), d.normal)
    return total


def expected_utility(d: InfluenceDiagram, treatment: str) -> float:
    if treatment not in d.alternatives():
        raise UnknownElementError(
            f"{treatment!r} is not an alternative of the decision node")
    return _expected_utility_any(d, treatment)


# ---------------------------------------------------------------------------
# decision report


@dataclass(frozen=True)
class DecisionReport:
    best_treatment: str
    best_value: float
    per_treatment: Mapping[str, float]
    runner_up: str | None
    runner_up_value: float | None
    single_class: bool
    tie: tuple[str, ...]
    hypothesis_marginals: Mapping[str, Mapping[str, float]]


def best_decision(d: InfluenceDiagram, partition=None) -> DecisionReport:
    """Score every alternative and pick the maximiser.

    Exact ties go to the lexicographically smallest treatment name and are
    reported in ``tie``. When an equivalence partition is supplied the
    runner-up is the best treatment from a different treatment class;
    ``single_class`` marks the case where no other class is on offer.
    """
    alts = d.alternatives()
    if not alts:
        raise UnknownElementError("diagram has no decision alternatives")
    per = {t: _expected_utility_any(d, t) for t in alts}
    best_value = max(per.values())
    winners = sorted(t for t, v in per.items()
                     if abs(v - best_value) <= VALUE_TOL)
    best = winners[0]

    runner_up: str | None = None
    runner_value: float | None = None
    single_class = False
    if partition is not None:
        best_class = partition.treatment_class_of(best)
        rivals = [t for t in alts
                  if t != best and partition.treatment_class_of(t) != best_class]
        if rivals:
            runner_up = min(rivals, key=lambda t: (-per[t], t))
            runner_value = per[runner_up]
        else:
            single_class = True
    else:
        others = [t for t in alts if t != best]
        if others:
            runner_up = min(others, key=lambda t: (-per[t], t))
            runner_value = per[runner_up]

    marginals = {h: marginal(d, h) for h in d.hypothesis_vars()}
    return DecisionReport(
        best_treatment=best,
        best_value=best_value,
        per_treatment=per,
        runner_up=runner_up,
        runner_up_value=runner_value,
        single_class=single_class,
        tie=tuple(winners) if len(winners) > 1 else (),
        hypothesis_marginals=marginals,
    )
