"""Model updating: probability revision, state refinement and coarsening,
topology extension, and update planning.

Refinement splits a state into fragments without changing what the model
believes at the old grain; ``verify_refinement`` checks exactly that, and
the default proportional construction satisfies it by construction.
Coarsening merges states and may lose information; a lossy merge that flips
the recommended treatment class is rejected outright.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .construct import extend_with_variables, instantiate
from .diagram import ChanceNode, InfluenceDiagram, ValueNode
from .equivalence import EquivalencePartition, diagram_partition
from .errors import (CoarseningRejectedError, EditError, RefinementError,
                     UnknownElementError)
from .inference import best_decision, marginal, posterior
from .kb import Cpt, KnowledgeBase, UtilityTable

ROW_TOL = 1e-9


# ---------------------------------------------------------------------------
# probability revision


@dataclass(frozen=True)
class ProbabilityUpdate:
    diagram: InfluenceDiagram
    changed: tuple[str, ...]
    kept: tuple[str, ...]       # nodes whose bank entry no longer fits


def update_probabilities(kb: KnowledgeBase, diagram: InfluenceDiagram,
                         time: str) -> ProbabilityUpdate:
    """Re-seat every chance node on the bank CPT in force at ``time``.

    A node holding a variant keeps it while the bank still covers the
    variant at the new time, otherwise it falls back to the default entry.
    Nodes whose state space has drifted from the bank (refined or coarsened
    in place) are left untouched and reported in ``kept``.
    """
    kb.time_axis.position(time)
    chance = dict(diagram.chance)
    changed: list[str] = []
    kept: list[str] = []
    for name in sorted(diagram.chance):
        node = diagram.chance[name]
        cpt = None
        used = None
        if node.variant is not None:
            cpt = kb.cpt_bank.lookup(name, time, kb.time_axis, node.variant)
            if cpt is not None:
                used = node.variant
        if cpt is None:
            cpt = kb.cpt_bank.lookup(name, time, kb.time_axis)
        if cpt is None or cpt.states != node.states:
            kept.append(name)
            continue
        if cpt.parents != node.cpt.parents:
            kept.append(name)
            continue
        if cpt.rows != dict(node.cpt.rows):
            changed.append(name)
        chance[name] = replace(node, cpt=cpt, time=time, variant=used)
    return ProbabilityUpdate(
        diagram=replace(diagram, chance=chance),
        changed=tuple(changed),
        kept=tuple(kept),
    )


# ---------------------------------------------------------------------------
# refinement


@dataclass(frozen=True)
class RefinementMap:
    """How to split states of ``target``.

    ``splits`` sends an old state to its fragments; unmentioned states keep
    their identity. ``weights`` gives each fragment's share of its source
    state (normalised within the group). ``fragments`` optionally carries
    explicit replacement CPTs keyed by node name; nodes without one get the
    proportional default.
    """

    target: str
    splits: Mapping[str, tuple[str, ...]]
    weights: Mapping[str, float] = field(default_factory=dict)
    fragments: Mapping[str, Cpt] | None = None


@dataclass(frozen=True)
class RefinementViolation:
    node: str
    context: str
    expected: float
    actual: float

    def __str__(self) -> str:
        return (f"{self.node} [{self.context}]: expected {self.expected!r}, "
                f"got {self.actual!r}")


@dataclass(frozen=True)
class SkippedConfig:
    """A coarse state never seen under this parent configuration; the check
    there is vacuous. ``prior`` is the configuration's marginal probability
    before any evidence."""

    old_state: str
    parent_config: tuple[str, ...]
    prior: float


@dataclass(frozen=True)
class RefinementCheck:
    violations: tuple[RefinementViolation, ...]
    skipped: tuple[SkippedConfig, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _groups_for(node: ChanceNode, rmap: RefinementMap) -> dict[str, tuple[str, ...]]:
    for s in rmap.splits:
        if s not in node.states:
            raise EditError(f"cannot split unknown state {s!r} of {node.name!r}")
    groups = {s: tuple(rmap.splits.get(s, (s,))) for s in node.states}
    seen: set[str] = set()
    for s, frags in groups.items():
        if not frags:
            raise EditError(f"empty fragment list for state {s!r}")
        for f in frags:
            if f in seen:
                raise EditError(f"fragment name {f!r} used twice")
            seen.add(f)
    for f in rmap.weights:
        if f not in seen:
            raise EditError(f"weight for unknown fragment {f!r}")
    return groups


def _new_states(node: ChanceNode, groups: Mapping[str, tuple[str, ...]]) -> tuple[str, ...]:
    return tuple(f for s in node.states for f in groups[s])


def proportional_fragments(diagram: InfluenceDiagram,
                           rmap: RefinementMap) -> dict[str, Cpt]:
    """Default replacement CPTs: the target's mass is shared among fragments
    by weight and every child row is copied across its source's fragments,
    so the refined model says nothing new at the coarse grain."""
    if rmap.target not in diagram.chance:
        raise UnknownElementError(f"unknown chance node: {rmap.target}")
    node = diagram.chance[rmap.target]
    groups = _groups_for(node, rmap)
    new_states = _new_states(node, groups)

    share: dict[str, float] = {}
    for s, frags in groups.items():
        total = sum(rmap.weights.get(f, 1.0) for f in frags)
        if total <= 0:
            raise EditError(f"fragment weights for {s!r} sum to {total!r}")
        for f in frags:
            share[f] = rmap.weights.get(f, 1.0) / total

    rows = {}
    for key, row in node.cpt.rows.items():
        by_state = dict(zip(node.states, row))
        rows[key] = tuple(by_state[s] * share[f]
                          for s in node.states for f in groups[s])
    out = {rmap.target: Cpt(var=rmap.target, states=new_states,
                            parents=node.cpt.parents, rows=rows)}

    for child in diagram.chance_children(rmap.target):
        cnode = diagram.chance[child]
        idx = cnode.cpt.parents.index(rmap.target)
        new_rows = {}
        for key, row in cnode.cpt.rows.items():
            for f in groups[key[idx]]:
                new_rows[key[:idx] + (f,) + key[idx + 1:]] = row
        out[child] = Cpt(var=child, states=cnode.states,
                         parents=cnode.cpt.parents, rows=new_rows)
    return out


def _refine_utility(table: UtilityTable, x: str,
                    groups: Mapping[str, tuple[str, ...]]) -> UtilityTable:
    literal: dict = {}
    for (t, (var, state)), v in table.literal.items():
        if var != x:
            literal[(t, (var, state))] = v
            continue
        for f in groups.get(state, (state,)):
            literal[(t, (var, f))] = v
    override: dict = {}
    for (t, key), v in table.override.items():
        mine = [(var, s) for var, s in key if var == x]
        if not mine:
            override[(t, key)] = v
            continue
        (var, s), = mine
        rest = frozenset(p for p in key if p[0] != x)
        for f in groups.get(s, (s,)):
            override[(t, rest | {(var, f)})] = v
    return UtilityTable(literal=literal, override=override)


def refine_node(diagram: InfluenceDiagram, rmap: RefinementMap,
                fragments: Mapping[str, Cpt] | None = None) -> InfluenceDiagram:
    """Split states of one node, preserving the coarse-grained distribution.

    With no explicit fragments the proportional construction is used and
    preservation holds by construction; explicit fragments are verified and
    a violating set raises RefinementError. An observed state and a
    hypothesis's normal state may be renamed but not split apart.
    """
    x = rmap.target
    if x not in diagram.chance:
        raise UnknownElementError(f"unknown chance node: {x}")
    node = diagram.chance[x]
    groups = _groups_for(node, rmap)
    new_states = _new_states(node, groups)

    observed = diagram.evidence.get(x)
    if observed is not None and len(groups[observed]) > 1:
        raise EditError(f"cannot split the observed state {observed!r} of {x!r}")
    norm = diagram.normal.get(x)
    if norm is not None and len(groups[norm]) > 1:
        raise EditError(f"cannot split the normal state {norm!r} of {x!r}")

    supplied = dict(rmap.fragments or {})
    supplied.update(fragments or {})
    defaults = proportional_fragments(diagram, rmap)
    explicit = bool(supplied)
    merged = dict(defaults)
    for name, cpt in supplied.items():
        if name not in defaults:
            raise EditError(f"fragment for {name!r}, which the split does not touch")
        if cpt.states != defaults[name].states or cpt.parents != defaults[name].parents:
            raise EditError(f"fragment for {name!r} has the wrong shape")
        merged[name] = cpt

    chance = dict(diagram.chance)
    chance[x] = replace(node, states=new_states, cpt=merged[x])
    for child in diagram.chance_children(x):
        chance[child] = replace(chance[child], cpt=merged[child])

    evidence = dict(diagram.evidence)
    if observed is not None:
        evidence[x] = groups[observed][0]
    normal = dict(diagram.normal)
    if norm is not None:
        normal[x] = groups[norm][0]

    values = tuple(ValueNode(v.name, _refine_utility(v.utility, x, groups))
                   for v in diagram.values) if x in diagram.normal else diagram.values

    new_d = replace(diagram, chance=chance, evidence=evidence,
                    normal=normal, values=values)
    if explicit:
        check = verify_refinement(diagram, new_d, rmap)
        if not check.ok:
            raise RefinementError(
                f"fragments for {x!r} do not preserve the coarse distribution",
                check.violations)
    return new_d


def verify_refinement(old: InfluenceDiagram, new: InfluenceDiagram,
                      rmap: RefinementMap) -> RefinementCheck:
    """Check that ``new`` refines ``old`` without changing coarse content.

    Two families of checks, each per parent configuration of the target:
    the fragments' mass must add up to the source state's, and every child
    must predict the same given the source state once fragments are mixed
    by their conditional shares. Configurations where the source state has
    probability zero cannot be checked; they are reported as skipped along
    with their prior probability so the caller can judge the gap.
    """
    x = rmap.target
    if x not in old.chance or x not in new.chance:
        raise UnknownElementError(f"unknown chance node: {x}")
    onode, nnode = old.chance[x], new.chance[x]
    groups = _groups_for(onode, rmap)

    violations: list[RefinementViolation] = []
    skipped: list[SkippedConfig] = []

    if nnode.cpt.parents != onode.cpt.parents:
        raise EditError(f"refined {x!r} changed its parent set")
    n_idx = {s: i for i, s in enumerate(nnode.states)}

    # Cpt parents are sorted, so row keys line up with posterior keys
    parent_prior = None
    if onode.cpt.parents:
        parent_prior = posterior(replace(old, evidence={}), onode.cpt.parents)

    for key, orow in onode.cpt.rows.items():
        nrow = nnode.cpt.rows[key]
        for s, p_old in zip(onode.states, orow):
            p_new = sum(nrow[n_idx[f]] for f in groups[s])
            if abs(p_new - p_old) > ROW_TOL:
                violations.append(RefinementViolation(
                    node=x, context=f"{s}|{','.join(key) or '()'}",
                    expected=p_old, actual=p_new))

    for child in old.chance_children(x):
        cold, cnew = old.chance[child].cpt, new.chance[child].cpt
        idx = cold.parents.index(x)
        for key, orow in cold.rows.items():
            s = key[idx]
            for pkey, prow in onode.cpt.rows.items():
                p_s = prow[onode.states.index(s)]
                if p_s <= ROW_TOL:
                    prior_p = parent_prior.get(pkey, 0.0) \
                        if parent_prior is not None else 1.0
                    skipped.append(SkippedConfig(old_state=s,
                                                 parent_config=pkey,
                                                 prior=prior_p))
                    continue
                nrow_x = nnode.cpt.rows[pkey]
                mixed = [0.0] * len(cold.states)
                for f in groups[s]:
                    w = nrow_x[n_idx[f]] / p_s
                    frow = cnew.rows[key[:idx] + (f,) + key[idx + 1:]]
                    for i, p in enumerate(frow):
                        mixed[i] += w * p
                for cstate, want, got in zip(cold.states, orow, mixed):
                    if abs(want - got) > ROW_TOL:
                        violations.append(RefinementViolation(
                            node=child,
                            context=f"{cstate}|{x}={s},{','.join(key) or '()'}",
                            expected=want, actual=got))
    return RefinementCheck(violations=tuple(violations),
                           skipped=tuple(skipped))


# ---------------------------------------------------------------------------
# coarsening


@dataclass(frozen=True)
class CoarseningMap:
    """How to merge states of ``target``: each entry sends a new state name
    to the tuple of old states it absorbs."""

    target: str
    merges: Mapping[str, tuple[str, ...]]


@dataclass(frozen=True)
class CoarseningResult:
    diagram: InfluenceDiagram
    info_loss: bool
    lossy: tuple[tuple[str, str], ...]       # (child, merged state)
    zero_mass_groups: tuple[str, ...]
    before: object | None                     # DecisionReport when ready
    after: object | None


def _coarsen_plan(node: ChanceNode, cmap: CoarseningMap):
    to_new: dict[str, str] = {}
    for new, olds in cmap.merges.items():
        if not olds:
            raise EditError(f"empty merge group for {new!r}")
        for s in olds:
            if s not in node.states:
                raise EditError(f"cannot merge unknown state {s!r} of {node.name!r}")
            if s in to_new:
                raise EditError(f"state {s!r} merged twice")
            to_new[s] = new
    survivors = [s for s in node.states if s not in to_new]
    for new, olds in cmap.merges.items():
        if new in survivors or (new in to_new and to_new[new] != new):
            raise EditError(f"merged name {new!r} collides with another state")
    new_states: list[str] = []
    for s in node.states:
        n = to_new.get(s, s)
        if n not in new_states:
            new_states.append(n)
        to_new[s] = n
    return to_new, tuple(new_states)


def _coarsen_utility(table: UtilityTable, x: str, to_new: Mapping[str, str],
                     merges: Mapping[str, tuple[str, ...]]) -> UtilityTable:
    literal: dict = {}
    counts: dict = {}
    for (t, (var, state)), v in table.literal.items():
        if var != x:
            literal[(t, (var, state))] = v
            continue
        nk = (t, (var, to_new[state]))
        if nk in literal and literal[nk] != v:
            raise EditError(
                f"merged states of {x!r} carry conflicting utility literals")
        literal[nk] = v
        counts[nk] = counts.get(nk, 0) + 1
    for (t, (var, new)), n in counts.items():
        size = len(merges.get(new, (new,)))
        if n not in (0, size):
            raise EditError(
                f"only part of merge group {new!r} has a utility literal for {t!r}")

    override: dict = {}
    ocounts: dict = {}
    for (t, key), v in table.override.items():
        mine = [(var, s) for var, s in key if var == x]
        if not mine:
            override[(t, key)] = v
            continue
        (var, s), = mine
        rest = frozenset(p for p in key if p[0] != x)
        nk = (t, rest | {(var, to_new[s])})
        if nk in override and override[nk] != v:
            raise EditError(
                f"merged states of {x!r} carry conflicting utility overrides")
        override[nk] = v
        ocounts[(nk, to_new[s])] = ocounts.get((nk, to_new[s]), 0) + 1
    for (nk, new), n in ocounts.items():
        size = len(merges.get(new, (new,)))
        if n not in (0, size):
            raise EditError(
                f"only part of merge group {new!r} has a utility override")
    return UtilityTable(literal=literal, override=override)


def coarsen_node(diagram: InfluenceDiagram, cmap: CoarseningMap,
                 partition: EquivalencePartition | None = None,
                 ) -> CoarseningResult:
    """Merge states of one node.

    The merged state's mass is the group sum; a child's row for the merged
    state is the prior-weighted average of the group rows (uniform when the
    group has no prior mass, reported in ``zero_mass_groups``). The merge
    loses information exactly when some child distinguished the merged
    states; a lossy merge whose recommended treatment lands in a different
    equivalence class than before is rejected with both decision reports
    attached.
    """
    x = cmap.target
    if x not in diagram.chance:
        raise UnknownElementError(f"unknown chance node: {x}")
    node = diagram.chance[x]
    to_new, new_states = _coarsen_plan(node, cmap)
    norm = diagram.normal.get(x)
    if norm is not None:
        group = cmap.merges.get(to_new[norm], (norm,))
        if len(group) > 1:
            raise EditError(
                f"cannot merge the normal state {norm!r} of {x!r} with others")

    prior = marginal(replace(diagram, evidence={}), x)
    weights: dict[str, dict[str, float]] = {}
    zero_mass: list[str] = []
    for new, olds in cmap.merges.items():
        mass = sum(prior.get(s, 0.0) for s in olds)
        if mass <= ROW_TOL:
            weights[new] = {s: 1.0 / len(olds) for s in olds}
            zero_mass.append(new)
        else:
            weights[new] = {s: prior[s] / mass for s in olds}

    rows = {}
    for key, row in node.cpt.rows.items():
        by_state = dict(zip(node.states, row))
        out: dict[str, float] = {}
        for s, p in by_state.items():
            out[to_new[s]] = out.get(to_new[s], 0.0) + p
        rows[key] = tuple(out[s] for s in new_states)
    chance = dict(diagram.chance)
    chance[x] = replace(node, states=new_states,
                        cpt=Cpt(var=x, states=new_states,
                                parents=node.cpt.parents, rows=rows))

    lossy: list[tuple[str, str]] = []
    for child in diagram.chance_children(x):
        cnode = diagram.chance[child]
        idx = cnode.cpt.parents.index(x)
        new_rows: dict[tuple[str, ...], tuple[float, ...]] = {}
        for key, row in cnode.cpt.rows.items():
            if to_new[key[idx]] == key[idx]:
                new_rows[key] = row
        for new, olds in cmap.merges.items():
            if len(olds) == 1 and new == olds[0]:
                continue
            rests = {key[:idx] + key[idx + 1:]
                     for key in cnode.cpt.rows if key[idx] in olds}
            for rest in rests:
                member_rows = [cnode.cpt.rows[rest[:idx] + (s,) + rest[idx:]]
                               for s in olds]
                spread = max(abs(a - b) for row_a in member_rows
                             for row_b in member_rows
                             for a, b in zip(row_a, row_b))
                if spread > ROW_TOL and (child, new) not in lossy:
                    lossy.append((child, new))
                mixed = tuple(
                    sum(weights[new][s] * cnode.cpt.rows[rest[:idx] + (s,) + rest[idx:]][i]
                        for s in olds)
                    for i in range(len(cnode.states)))
                new_rows[rest[:idx] + (new,) + rest[idx:]] = mixed
        chance[child] = replace(cnode, cpt=Cpt(var=child, states=cnode.states,
                                               parents=cnode.cpt.parents,
                                               rows=new_rows))

    evidence = {v: (to_new.get(s, s) if v == x else s)
                for v, s in diagram.evidence.items()}
    normal = dict(diagram.normal)
    if norm is not None:
        normal[x] = to_new[norm]
    values = tuple(ValueNode(v.name,
                             _coarsen_utility(v.utility, x, to_new, cmap.merges))
                   for v in diagram.values) if x in diagram.normal else diagram.values

    new_d = replace(diagram, chance=chance, evidence=evidence,
                    normal=normal, values=values)
    info_loss = bool(lossy)

    before = after = None
    if diagram.is_decision_ready():
        before_part = partition if partition is not None \
            else diagram_partition(diagram)
        before = best_decision(diagram, before_part)
        if partition is not None and x not in diagram.normal:
            after_part = partition
        else:
            after_part = diagram_partition(new_d)
        after = best_decision(new_d, after_part)
        if info_loss:
            b = after_part.treatment_class_of(before.best_treatment)
            a = after_part.treatment_class_of(after.best_treatment)
            if a != b:
                raise CoarseningRejectedError(
                    f"merging states of {x!r} loses information and moves "
                    f"the recommendation from {before.best_treatment!r} to "
                    f"{after.best_treatment!r}", before, after)

    return CoarseningResult(
        diagram=new_d,
        info_loss=info_loss,
        lossy=tuple(lossy),
        zero_mass_groups=tuple(sorted(zero_mass)),
        before=before,
        after=after,
    )


# ---------------------------------------------------------------------------
# topology extension and plans


def extend_topology(kb: KnowledgeBase, diagram: InfluenceDiagram,
                    required: Sequence[str], time: str):
    """Grow the diagram to cover ``required``; see construct for the rules."""
    return extend_with_variables(kb, diagram, required, time)


@dataclass(frozen=True)
class UpdateStep:
    kind: str                          # revise-cpts | add-nodes | reinstantiate
    time: str
    variables: tuple[str, ...] = ()


@dataclass(frozen=True)
class UpdatePlan:
    verdict: str
    time: str
    steps: tuple[UpdateStep, ...]


def plan_update(report, time: str | None = None) -> UpdatePlan:
    """Turn a sensitivity verdict into concrete steps.

    Values-only drift needs new numbers; a topology verdict also pulls in
    every variable the exceeding challengers had to borrow; reinstantiation
    replaces the model wholesale.
    """
    t = time if time is not None else report.time
    verdict = report.verdict
    if verdict == "no-update":
        steps: tuple[UpdateStep, ...] = ()
    elif verdict == "values-only":
        steps = (UpdateStep("revise-cpts", t),)
    elif verdict == "topology":
        missing: set[str] = set()
        for ch in report.challengers:
            if ch.exceeds_beta:
                missing.update(ch.missing_nodes)
        steps = (UpdateStep("revise-cpts", t),
                 UpdateStep("add-nodes", t, tuple(sorted(missing))))
    elif verdict == "reinstantiate":
        steps = (UpdateStep("reinstantiate", t),)
    else:
        raise EditError(f"unknown verdict {verdict!r}")
    return UpdatePlan(verdict=verdict, time=t, steps=steps)


def apply_plan(kb: KnowledgeBase, diagram: InfluenceDiagram, plan: UpdatePlan,
               observations=None, event_log=None):
    """Run a plan's steps in order; returns the final diagram plus one
    record per step (probability update, extension record, or construction
    trace)."""
    d = diagram
    records: list = []
    for step in plan.steps:
        if step.kind == "revise-cpts":
            pu = update_probabilities(kb, d, step.time)
            d = pu.diagram
            records.append(pu)
        elif step.kind == "add-nodes":
            d, rec = extend_topology(kb, d, step.variables, step.time)
            records.append(rec)
        elif step.kind == "reinstantiate":
            if observations is None:
                raise EditError("reinstantiation needs the finding history")
            d, trace = instantiate(kb, observations, step.time, event_log)
            records.append(trace)
        else:
            raise EditError(f"unknown step kind {step.kind!r}")
    return d, tuple(records)
