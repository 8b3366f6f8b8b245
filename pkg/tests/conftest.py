"""Shared fixtures: the packaged knowledge bases plus two small models
built in code (a one-parameter threshold pair and a three-state chain used
for coarsening checks)."""

from __future__ import annotations

from pathlib import Path

import pytest

from diagid import (ChanceNode, Cpt, DecisionNode, InfluenceDiagram,
                    UtilityTable, ValueNode, parse_kb)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def read_fixture(name: str) -> str:
    return (FIXTURES / name).read_text()


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    lines = getattr(test_acceptance, "LINES", ())
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def car_kb():
    return parse_kb(read_fixture("car.kb"))


@pytest.fixture(scope="session")
def abdominal_kb():
    return parse_kb(read_fixture("abdominal.kb"))


def threshold_kb(p: float, p2: float | None = None, *, third: bool = False):
    """One hypothesis, two value lines that cross. ``p`` is the prior of the
    bad state at t1; ``p2`` re-authors it at t2. ``third`` adds a treatment
    valued within a cent of T-wait everywhere (same equivalence class)."""
    extra_cpt = "" if p2 is None else f"\ncpt H @ t2\n| : {1 - p2!r}, {p2!r}\n"
    extra_treat = ""
    if third:
        extra_treat = ("treat T-wait2\n"
                       "util T-wait2 full H=ok : 3.99\n"
                       "util T-wait2 full H=bad : 3.985\n")
    return parse_kb(f"""
time t1 t2

var H role=hypothesis states=ok,bad normal=ok

cpt H @ t1
| : {1 - p!r}, {p!r}
{extra_cpt}
treat T-fix
treat T-wait

util T-fix H=bad : 10
util T-wait full H=ok : 4.0
util T-wait full H=bad : 3.9
{extra_treat}""")


def threshold_diagram(kb, time: str = "t1") -> InfluenceDiagram:
    cpt = kb.cpt_bank.lookup("H", time, kb.time_axis)
    node = ChanceNode("H", ("ok", "bad"), cpt, time, role="hypothesis")
    return InfluenceDiagram(
        chance={"H": node},
        decisions={"treatment": DecisionNode("treatment", ("T-fix", "T-wait"))},
        values=(ValueNode("value", kb.utilities),),
        arcs=(("H", "value"), ("treatment", "value")),
        evidence={},
        normal={"H": "ok"})


def chain_diagram(c_b: float, c_c: float,
                  evidence: str | None = "yes") -> InfluenceDiagram:
    """H -> X -> C with a three-state middle node. ``c_b`` and ``c_c`` set
    P(C=yes | X=b) and P(C=yes | X=c); equal values make merging b with c
    lossless."""
    hcpt = Cpt("H", ("ok", "bad"), (), {(): (0.5, 0.5)})
    xcpt = Cpt("X", ("a", "b", "c"), ("H",),
               {("ok",): (0.2, 0.1, 0.7), ("bad",): (0.05, 0.85, 0.1)})
    ccpt = Cpt("C", ("yes", "no"), ("X",),
               {("a",): (0.5, 0.5),
                ("b",): (c_b, 1.0 - c_b),
                ("c",): (c_c, 1.0 - c_c)})
    util = UtilityTable(
        literal={("FIX", ("H", "bad")): 10.0},
        override={("WAIT", frozenset({("H", "ok")})): 11.0})
    ev = {"C": evidence} if evidence is not None else {}
    return InfluenceDiagram(
        chance={"H": ChanceNode("H", ("ok", "bad"), hcpt, "t1",
                                role="hypothesis"),
                "X": ChanceNode("X", ("a", "b", "c"), xcpt, "t1"),
                "C": ChanceNode("C", ("yes", "no"), ccpt, "t1",
                                role="observable")},
        decisions={"treatment": DecisionNode("treatment", ("FIX", "WAIT"))},
        values=(ValueNode("value", util),),
        arcs=(("H", "X"), ("X", "C"), ("H", "value"), ("treatment", "value")),
        evidence=ev,
        normal={"H": "ok"})
