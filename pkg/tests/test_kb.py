"""Knowledge-base semantics: time axis, CPT bank, utilities, validation,
justification and trigger matching."""

import pytest
from hypothesis import given, strategies as st

from diagid import (Cpt, CptBank, KnowledgeBase, TimeAxis, Treatment,
                    UnknownElementError, UtilityTable, Variable, parse_kb,
                    validate_kb)
from diagid.construct import Observation
from diagid.kb import justification_trace, match_triggers

from conftest import read_fixture


class TestTimeAxis:
    def test_position_follows_declaration_order(self):
        axis = TimeAxis(("t1", "t2", "t5"))
        assert [axis.position(t) for t in axis.indices] == [0, 1, 2]

    def test_unknown_index_raises(self):
        with pytest.raises(UnknownElementError):
            TimeAxis(("t1",)).position("t9")

    def test_window_clips_at_the_ends(self):
        axis = TimeAxis(("a", "b", "c", "d"))
        assert axis.window("a", 1) == ("a", "b")
        assert axis.window("c", 1) == ("b", "c", "d")
        assert axis.window("d", 2) == ("b", "c", "d")


class TestCptBank:
    def bank(self):
        mk = lambda p: Cpt("X", ("y", "n"), (), {(): (p, 1 - p)})
        return CptBank({
            ("X", "t1", None): mk(0.1),
            ("X", "t3", None): mk(0.3),
            ("X", "t1", "alt"): mk(0.9),
        })

    def test_lookup_is_piecewise_constant(self):
        axis = TimeAxis(("t1", "t2", "t3", "t4"))
        bank = self.bank()
        assert bank.lookup("X", "t1", axis).rows[()][0] == 0.1
        assert bank.lookup("X", "t2", axis).rows[()][0] == 0.1
        assert bank.lookup("X", "t3", axis).rows[()][0] == 0.3
        assert bank.lookup("X", "t4", axis).rows[()][0] == 0.3

    def test_variant_lookup_does_not_fall_back_to_default(self):
        axis = TimeAxis(("t1", "t2"))
        bank = self.bank()
        assert bank.lookup("X", "t2", axis, "alt").rows[()][0] == 0.9
        assert bank.lookup("X", "t1", axis, "other") is None

    def test_variants_and_default_times(self):
        bank = self.bank()
        assert bank.variants_for("X") == frozenset({"alt"})
        assert set(bank.default_times("X")) == {"t1", "t3"}


class TestUtilityTable:
    table = UtilityTable(
        literal={("T", ("A", "bad")): 5.0, ("T", ("B", "bad")): 2.0},
        override={("T", frozenset({("A", "bad"), ("B", "bad")})): 1.0,
                  ("W", frozenset({("A", "ok"), ("B", "ok")})): 3.0})
    normal = {"A": "ok", "B": "ok"}

    def test_literals_add_over_abnormal_variables(self):
        assert self.table.value("T", {"A": "bad", "B": "ok"}, self.normal) == 5.0
        assert self.table.value("T", {"A": "ok", "B": "ok"}, self.normal) == 0.0

    def test_override_takes_precedence_over_the_sum(self):
        assert self.table.value("T", {"A": "bad", "B": "bad"}, self.normal) == 1.0

    def test_override_requires_the_exact_assignment(self):
        # a third variable in the assignment misses the two-variable override
        assert self.table.value(
            "W", {"A": "ok", "B": "ok", "C": "ok"}, self.normal) == 0.0
        assert self.table.value("W", {"A": "ok", "B": "ok"}, self.normal) == 3.0

    def test_touched_hypotheses_skip_the_normal_part(self):
        assert self.table.touched_hypotheses("T", self.normal) == {"A", "B"}
        assert self.table.touched_hypotheses("W", self.normal) == frozenset()

    def test_treatments_lists_both_entry_kinds(self):
        assert self.table.treatments() == {"T", "W"}


class TestValidation:
    def test_packaged_kbs_are_clean(self):
        for name in ("car.kb", "abdominal.kb"):
            kb = parse_kb(read_fixture(name), validate=False)
            assert validate_kb(kb) == []

    def check(self, text, kind):
        kb = parse_kb(text, validate=False)
        kinds = [v.kind for v in validate_kb(kb)]
        assert kind in kinds, kinds
        return kinds

    BASE = """
time t1
var A role=observable states=y,n
cpt A @ t1
| : 0.5, 0.5
treat T
util T A=y : 1
"""

    def test_missing_cpt(self):
        self.check("""
time t1
var A role=observable states=y,n
var B role=observable states=y,n
cpt A @ t1
| : 0.5, 0.5
treat T
util T A=y : 1
""", "missing-cpt")

    def test_row_sum(self):
        self.check("""
time t1
var A role=observable states=y,n
cpt A @ t1
| : 0.7, 0.7
treat T
util T A=y : 1
""", "row-sum")

    def test_dangling_arc(self):
        self.check(self.BASE + "arc A -> Z\n", "dangling-arc")

    def test_cycle_reported_once_without_parent_noise(self):
        kinds = self.check("""
time t1
var A role=observable states=y,n
var B role=observable states=y,n
arc A -> B
arc B -> A
cpt A @ t1
| : 0.5, 0.5
cpt B @ t1
| : 0.5, 0.5
treat T
util T A=y : 1
""", "cycle")
        # nodes on the cycle skip the parent-shape checks
        assert "wrong-parents" not in kinds
        assert "missing-row" not in kinds

    def test_wrong_parents_and_missing_row(self):
        self.check("""
time t1
var A role=observable states=y,n
var B role=observable states=y,n
arc A -> B
cpt A @ t1
| : 0.5, 0.5
cpt B @ t1
| : 0.5, 0.5
treat T
util T A=y : 1
""", "wrong-parents")
        self.check("""
time t1
var A role=observable states=y,n
var B role=observable states=y,n
arc A -> B
cpt A @ t1
| : 0.5, 0.5
cpt B @ t1
| A=y : 0.5, 0.5
treat T
util T A=y : 1
""", "missing-row")

    def test_hypothesis_needs_a_normal_state(self):
        kb = parse_kb(self.BASE, validate=False)
        variables = dict(kb.variables)
        variables["H"] = Variable("H", "hypothesis", ("ok", "bad"), None)
        bank = dict(kb.cpt_bank.entries)
        bank[("H", "t1", None)] = Cpt("H", ("ok", "bad"), (), {(): (0.5, 0.5)})
        broken = KnowledgeBase(variables=variables, arcs=kb.arcs,
                               time_axis=kb.time_axis,
                               cpt_bank=CptBank(bank),
                               treatments=kb.treatments,
                               utilities=kb.utilities)
        assert "missing-normal" in [v.kind for v in validate_kb(broken)]

    def test_treatment_without_utility_entry(self):
        self.check(self.BASE + "treat XTRA\n", "utility-missing-treatment")

    def test_utility_for_undeclared_treatment(self):
        self.check(self.BASE + "util GHOST A=y : 2\n",
                   "utility-unknown-treatment")

    def test_trigger_variant_must_exist_in_the_bank(self):
        self.check(self.BASE + "trigger r: A=y => variant(A,nope)\n",
                   "trigger-unknown-variant")

    def test_include_effect_must_name_a_hypothesis(self):
        self.check(self.BASE + "trigger r: A=y => include(A)\n",
                   "trigger-bad-effect")

    def test_cpt_at_undeclared_time(self):
        self.check("""
time t1
var A role=observable states=y,n
cpt A @ t1
| : 0.5, 0.5
cpt A @ t9
| : 0.5, 0.5
treat T
util T A=y : 1
""", "unknown-time")


class TestJustification:
    def test_trace_is_the_ancestor_subdag(self, abdominal_kb):
        g = justification_trace(abdominal_kb, "P")
        assert g.center == "P"
        assert g.nodes == {"P", "US", "FP"}
        assert g.arcs == (("FP", "P"), ("US", "P"))

    def test_root_variable_traces_to_itself(self, abdominal_kb):
        g = justification_trace(abdominal_kb, "A")
        assert g.nodes == {"A"}
        assert g.arcs == ()

    def test_unknown_variable_raises(self, abdominal_kb):
        with pytest.raises(UnknownElementError):
            justification_trace(abdominal_kb, "Q")


def ev(var, state, time):
    return Observation(var=var, state=state, time=time)


class TestTriggers:
    def test_gap_zero_means_same_time_position(self, car_kb):
        log = [ev("W", "dry", "t1"), ev("ST", "no", "t1")]
        firings = match_triggers(car_kb, log)
        assert [(f.rule.name, f.position) for f in firings] == [("dry-failure", 1)]

    def test_gap_exceeded_blocks_the_match(self, car_kb):
        log = [ev("W", "dry", "t1"), ev("ST", "no", "t2")]
        assert match_triggers(car_kb, log) == []

    def test_pattern_is_a_subsequence_not_a_run(self, abdominal_kb):
        log = [ev("P", "yes", "t1"), ev("N", "yes", "t1"), ev("P", "yes", "t2")]
        names = {f.rule.name for f in match_triggers(abdominal_kb, log)}
        assert names == {"persistent-pain-a", "persistent-pain-gc"}

    def test_order_matters(self, car_kb):
        log = [ev("ST", "no", "t1"), ev("W", "dry", "t1")]
        assert match_triggers(car_kb, log) == []

    def test_firings_sorted_by_position_then_rule(self, abdominal_kb):
        log = [ev("P", "yes", "t1"), ev("P", "yes", "t2")]
        firings = match_triggers(abdominal_kb, log)
        assert [f.position for f in firings] == [1, 1]
        assert [f.rule.name for f in firings] == ["persistent-pain-a",
                                                  "persistent-pain-gc"]

    def test_unknown_event_variable_raises(self, car_kb):
        with pytest.raises(UnknownElementError):
            match_triggers(car_kb, [ev("Q", "dry", "t1")])

    @given(st.lists(st.tuples(st.sampled_from(["W", "ST"]),
                              st.sampled_from(["t1", "t2"])),
                    max_size=8),
           st.tuples(st.sampled_from(["W", "ST"]),
                     st.sampled_from(["t1", "t2"])))
    def test_appending_never_removes_firings(self, events, extra):
        kb = parse_kb(read_fixture("car.kb"))
        state_of = {"W": "dry", "ST": "no"}
        log = [ev(v, state_of[v], t) for v, t in events]
        longer = log + [ev(extra[0], state_of[extra[0]], extra[1])]
        before = {(f.rule.name, f.position) for f in match_triggers(kb, log)}
        after = {(f.rule.name, f.position) for f in match_triggers(kb, longer)}
        assert before <= after
