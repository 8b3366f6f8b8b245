"""Text format: parse, serialize, round-trip, and the edit-map parsers."""

import pytest

from diagid import (KbSyntaxError, KbValidationError, parse_coarsening,
                    parse_kb, parse_refinement, serialize_kb)

from conftest import read_fixture


class TestRoundTrip:
    @pytest.mark.parametrize("name", ["car.kb", "abdominal.kb"])
    def test_parse_serialize_parse_is_identity(self, name):
        kb = parse_kb(read_fixture(name))
        again = parse_kb(serialize_kb(kb))
        assert again.variables == kb.variables
        assert again.arcs == kb.arcs
        assert again.time_axis == kb.time_axis
        assert dict(again.cpt_bank.entries) == dict(kb.cpt_bank.entries)
        assert again.treatments == kb.treatments
        assert again.utilities == kb.utilities
        assert again.triggers == kb.triggers

    @pytest.mark.parametrize("name", ["car.kb", "abdominal.kb"])
    def test_serialized_form_is_a_fixed_point(self, name):
        kb = parse_kb(read_fixture(name))
        once = serialize_kb(kb)
        assert serialize_kb(parse_kb(once)) == once

    def test_row_parent_order_is_canonicalized(self):
        a = parse_kb("""
time t1
var A role=observable states=y,n
var B role=observable states=y,n
var C role=observable states=y,n
arc A -> C
arc B -> C
cpt A @ t1
| : 0.5, 0.5
cpt B @ t1
| : 0.5, 0.5
cpt C @ t1
| A=y,B=y : 0.1, 0.9
| B=n,A=y : 0.2, 0.8
| A=n,B=y : 0.3, 0.7
| B=n,A=n : 0.4, 0.6
treat T
util T C=y : 1
""")
        cpt = a.cpt_bank.lookup("C", "t1", a.time_axis)
        assert cpt.parents == ("A", "B")
        assert cpt.rows[("y", "n")] == (0.2, 0.8)


class TestSyntaxErrors:
    def err(self, text):
        with pytest.raises(KbSyntaxError) as info:
            parse_kb(text, validate=False)
        return info.value

    def test_unknown_directive_carries_the_line_number(self):
        e = self.err("time t1\nfrobnicate X\n")
        assert e.line == 2

    def test_missing_time_axis(self):
        e = self.err("var A role=observable states=y,n\n")
        assert "time axis" in str(e)

    def test_row_outside_a_block(self):
        e = self.err("time t1\n| : 0.5, 0.5\n")
        assert e.line == 2

    def test_row_width_must_match_the_state_count(self):
        e = self.err("""time t1
var A role=observable states=y,n
cpt A @ t1
| : 0.2, 0.3, 0.5
""")
        assert e.line == 4

    def test_bad_probability_literal(self):
        e = self.err("""time t1
var A role=observable states=y,n
cpt A @ t1
| : 0.5, half
""")
        assert "half" in str(e)

    def test_duplicate_variable(self):
        e = self.err("time t1\nvar A role=observable states=y,n\n"
                     "var A role=observable states=y,n\n")
        assert e.line == 3

    def test_duplicate_cpt_block(self):
        self.err("""time t1
var A role=observable states=y,n
cpt A @ t1
| : 0.5, 0.5
cpt A @ t1
| : 0.5, 0.5
""")

    def test_mixed_row_parents_rejected(self):
        self.err("""time t1
var A role=observable states=y,n
var B role=observable states=y,n
arc A -> B
cpt A @ t1
| : 0.5, 0.5
cpt B @ t1
| A=y : 0.5, 0.5
| : 0.5, 0.5
""")

    def test_within_before_second_step(self):
        self.err("time t1\nvar A role=observable states=y,n\n"
                 "trigger r: A=y within 1 => include(A)\n")


class TestValidationGate:
    def test_parse_raises_on_structural_faults_by_default(self):
        text = """time t1
var A role=observable states=y,n
var B role=observable states=y,n
cpt A @ t1
| : 0.5, 0.5
treat T
util T A=y : 1
"""
        with pytest.raises(KbValidationError) as info:
            parse_kb(text)
        assert any(v.kind == "missing-cpt" for v in info.value.violations)
        parse_kb(text, validate=False)


class TestEditMapParsers:
    def test_refinement_with_weights_and_rename(self):
        rmap = parse_refinement("refine X: a -> a1*0.6, a2*0.4; b -> b2")
        assert rmap.target == "X"
        assert rmap.splits == {"a": ("a1", "a2"), "b": ("b2",)}
        assert rmap.weights == {"a1": 0.6, "a2": 0.4, "b2": 1.0}

    def test_refinement_requires_arrow(self):
        with pytest.raises(KbSyntaxError):
            parse_refinement("refine X: a a1")

    def test_same_state_split_twice_rejected(self):
        with pytest.raises(KbSyntaxError):
            parse_refinement("refine X: a -> a1; a -> a2")

    def test_coarsening(self):
        cmap = parse_coarsening("coarsen X: a1,a2 -> a; b2 -> b")
        assert cmap.target == "X"
        assert cmap.merges == {"a": ("a1", "a2"), "b": ("b2",)}

    def test_coarsening_duplicate_target_rejected(self):
        with pytest.raises(KbSyntaxError):
            parse_coarsening("coarsen X: a1 -> a; a2 -> a")
