"""Treatment-equivalence classes over diagnoses.

Two diagnoses are strongly equivalent when every treatment values them the
same after quantisation: each diagnosis is summarised by the set of
(treatment, quantised value) pairs and classes are groups with identical
summaries. The quantum sets how coarse "the same" is; 0.01 keeps cent-level
distinctions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import UnknownElementError
from .inference import Diagnosis, diagnosis_space
from .kb import UtilityTable

DEFAULT_QUANTUM = 0.01


@dataclass(frozen=True)
class TreatmentSpace:
    """The treatments under comparison plus the utility that scores them."""

    treatments: tuple[str, ...]
    utility: UtilityTable
    normal: Mapping[str, str]

    def value(self, treatment: str, diagnosis: Diagnosis) -> float:
        return self.utility.value(treatment, diagnosis.as_dict(), self.normal)


def treatment_space_from_utilities(utility: UtilityTable,
                                   normal: Mapping[str, str],
                                   extra: Iterable[str] = ()) -> TreatmentSpace:
    """Space over every treatment the table mentions plus ``extra`` ones;
    a treatment without entries values every diagnosis at 0."""
    names = set(utility.treatments()) | set(extra)
    return TreatmentSpace(treatments=tuple(sorted(names)),
                          utility=utility, normal=normal)


def quantize(value: float, quantum: float = DEFAULT_QUANTUM) -> int:
    return round(value / quantum)


def _signature(space: TreatmentSpace, diagnosis: Diagnosis,
               quantum: float) -> frozenset[tuple[str, int]]:
    return frozenset((t, quantize(space.value(t, diagnosis), quantum))
                     for t in space.treatments)


def strongly_equivalent(space: TreatmentSpace, a: Diagnosis, b: Diagnosis,
                        quantum: float = DEFAULT_QUANTUM) -> bool:
    return _signature(space, a, quantum) == _signature(space, b, quantum)


@dataclass(frozen=True)
class EquivalencePartition:
    quantum: float
    space: TreatmentSpace
    classes: tuple[tuple[Diagnosis, ...], ...]
    ambiguous_treatments: frozenset[str]
    _class_of: Mapping[Diagnosis, int] = field(repr=False)
    _treatment_class: Mapping[str, int] = field(repr=False)

    def class_of(self, diagnosis: Diagnosis) -> int:
        try:
            return self._class_of[diagnosis]
        except KeyError:
            raise UnknownElementError(
                f"diagnosis {diagnosis.key()} is not in the partition") from None

    def treatment_class_of(self, treatment: str) -> int:
        try:
            return self._treatment_class[treatment]
        except KeyError:
            raise UnknownElementError(
                f"treatment {treatment!r} is not in the partition") from None

    def class_label(self, index: int) -> str:
        members = self.classes[index]
        return "{" + ", ".join(m.label() for m in members) + "}"

    def class_count(self) -> int:
        return len(self.classes)


def partition_diagnoses(diagnoses: Iterable[Diagnosis],
                        space: TreatmentSpace,
                        quantum: float = DEFAULT_QUANTUM) -> EquivalencePartition:
    """Group diagnoses into strong-equivalence classes.

    Classes are ordered by their smallest member (assignment order) so the
    numbering is reproducible. Each treatment is assigned the class of its
    best-valued diagnosis; when the quantised maximum is attained in more
    than one class the treatment is flagged ambiguous and the class of the
    smallest argmax diagnosis is used.
    """
    universe = sorted(set(diagnoses), key=lambda dg: dg.assignment)
    if not universe:
        raise UnknownElementError("cannot partition an empty diagnosis set")
    by_sig: dict[frozenset[tuple[str, int]], list[Diagnosis]] = {}
    for dg in universe:
        by_sig.setdefault(_signature(space, dg, quantum), []).append(dg)
    classes = tuple(sorted((tuple(members) for members in by_sig.values()),
                           key=lambda ms: ms[0].assignment))
    class_of = {dg: i for i, members in enumerate(classes) for dg in members}

    treatment_class: dict[str, int] = {}
    ambiguous: set[str] = set()
    for t in space.treatments:
        best_q = max(quantize(space.value(t, dg), quantum) for dg in universe)
        argmax = [dg for dg in universe
                  if quantize(space.value(t, dg), quantum) == best_q]
        hit_classes = {class_of[dg] for dg in argmax}
        if len(hit_classes) > 1:
            ambiguous.add(t)
        treatment_class[t] = class_of[argmax[0]]

    return EquivalencePartition(
        quantum=quantum,
        space=space,
        classes=classes,
        ambiguous_treatments=frozenset(ambiguous),
        _class_of=class_of,
        _treatment_class=treatment_class,
    )


def diagram_partition(d, quantum: float = DEFAULT_QUANTUM) -> EquivalencePartition:
    """Partition the diagram's full diagnosis space under its own utility."""
    space = treatment_space_from_utilities(d.active_utility(), d.normal,
                                           extra=d.alternatives())
    return partition_diagnoses(diagnosis_space(d), space, quantum)
