import pytest

from wmm import corpus
from wmm.axiomatic import (
    MODEL_CHAIN, POWER, PSO, TSO, delays, enumerate_witnesses, event_structure, valid,
)
from wmm.frontend import parse_program
from wmm.machine import (
    BOTTOM, Label, accepting_run, build_path, check_theorem1, check_theorem2, failure_dump,
    initial_state, lemma1, minimal_selection, mns, step, theorem_sides,
)

from conftest import witness_where


def structure(src_or_name):
    prog = corpus.load(src_or_name) if src_or_name in corpus.names() else parse_program(src_or_name)
    return event_structure(prog).E


def ids(E, *names):
    by = {e.name: e.id for e in E.events}
    return [by[n] for n in names]


def f_pairs(E, pc):
    return {(E[a.event].name, E[b.event].name) for a, b in pc.before if a.tag == b.tag == "f"}


class TestStep:
    def test_write_enters_buffer(self):
        E = structure("shared x;\nthread t { x := 1; }\n")
        (a,) = ids(E, "a")
        s = step(initial_state(E), Label("d", a), E)
        assert s.buff(E, E[a].loc) == [a]

    def test_flush_out_of_order_is_stuck(self):
        E = structure("shared x;\nthread t { x := 1; x := 2; }\n")
        a, b = ids(E, "a", "b")
        s = initial_state(E)
        for l in (Label("d", a), Label("d", b)):
            s = step(s, l, E)
        assert step(s, Label("f", b), E) is BOTTOM
        s = step(s, Label("f", a), E)
        assert s.mem_map()[E[a].loc] == a

    def test_bottom_absorbs(self):
        E = structure("sb")
        assert step(BOTTOM, Label("d", 0), E) is BOTTOM

    def test_iriw_dps_read_from_buffer(self):
        E = structure("iriw+dps")
        X = witness_where(E, a="e", b="iy", c="f", d="ix")
        a, e = ids(E, "a", "e")
        s = initial_state(E)
        s = step(s, Label("d", e), E)
        s = step(s, Label("d", a, e), E)
        s = step(s, Label("f", a, e), E)
        assert s is not BOTTOM
        assert s.log_map()[(E[a].proc, E[a].loc)] == e
        assert s.buff(E, E[e].loc) == [e]


class TestPath:
    def test_sb_delayed_exit_converse(self):
        E = structure("sb")
        X = witness_where(E, b="iy", d="ix")
        a, b, c, d = ids(E, "a", "b", "c", "d")
        pc = build_path(E, X, {(a, b), (c, d)}, exit_mode="converse")
        assert (Label("d", a), Label("d", b, X.rf_map()[b])) in pc.before
        assert {("b", "a"), ("d", "c")} <= f_pairs(E, pc)

    def test_sb_delayed_exit_free(self):
        E = structure("sb")
        X = witness_where(E, b="iy", d="ix")
        a, b, c, d = ids(E, "a", "b", "c", "d")
        pairs = f_pairs(E, build_path(E, X, {(a, b), (c, d)}))
        assert ("a", "b") not in pairs and ("b", "a") not in pairs

    def test_empty_delays_follow_po(self):
        E = structure("mp")
        X = witness_where(E, c="b", d="a")
        assert {("a", "b"), ("c", "d")} <= f_pairs(E, build_path(E, X, ()))

    def test_iriw_dps_converse(self):
        E = structure("iriw+dps")
        X = witness_where(E, a="e", b="iy", c="f", d="ix")
        D = {tuple(ids(E, "e", "a")), tuple(ids(E, "f", "c"))}
        assert {("a", "e"), ("c", "f")} <= f_pairs(E, build_path(E, X, D, "converse"))

    def test_bad_mode(self):
        E = structure("sb")
        with pytest.raises(ValueError):
            build_path(E, next(enumerate_witnesses(E)), (), "backwards")


class TestMns:
    def test_sb(self):
        E = structure("sb")
        X = witness_where(E, b="iy", d="ix")
        assert mns(E, build_path(E, X, delays(E, X, TSO)))
        assert not mns(E, build_path(E, X, ()))

    def test_sequential(self):
        E = structure("shared x;\nthread t { x := 1; r := x; }\n")
        X = witness_where(E, b="a")
        assert mns(E, build_path(E, X, ()))

    def test_accepting_run_is_a_full_linearisation(self):
        E = structure("sb")
        X = witness_where(E, b="iy", d="ix")
        run = accepting_run(E, build_path(E, X, delays(E, X, TSO)))
        assert len(run) == 8
        assert run[-1]["state"]["buff"] == {} and run[-1]["state"]["queue"] == []

    def test_rejected_path_has_no_run(self):
        E = structure("sb")
        X = witness_where(E, b="iy", d="ix")
        assert accepting_run(E, build_path(E, X, ())) is None


class TestTheorems:
    @pytest.mark.parametrize("name", ["sb", "lb", "mp", "iriw", "iriw+dps", "sb+fence", "mp+lwfences"])
    def test_exhaustive(self, name):
        E = structure(name)
        for X in enumerate_witnesses(E):
            assert lemma1(E, X)
            for A in MODEL_CHAIN:
                assert check_theorem1(E, X, A)
                assert check_theorem2(E, X, A, minimal_selection(E, X, A))

    def test_sb_single_buffered_write(self):
        E = structure("sb")
        X = witness_where(E, b="iy", d="ix")
        assert check_theorem2(E, X, TSO, {tuple(ids(E, "a", "b"))})

    def test_iriw_dps_single_delay(self):
        E = structure("iriw+dps")
        X = witness_where(E, a="e", b="iy", c="f", d="ix")
        assert check_theorem2(E, X, POWER, {tuple(ids(E, "e", "a"))})
        assert theorem_sides(E, X, POWER) == (True, True)

    def test_selection_must_hit_every_cycle(self):
        E = structure("iriw+dps")
        X = witness_where(E, a="e", b="iy", c="f", d="ix")
        with pytest.raises(ValueError):
            check_theorem2(E, X, POWER, set())

    def test_sc_valid_raw_sides(self):
        # left side is false by construction, the machine still accepts
        E = structure("sb")
        X = witness_where(E, b="c", d="a")
        assert theorem_sides(E, X, TSO) == (False, True)
        assert check_theorem1(E, X, TSO)

    def test_two_plus_two_w_known_gap(self):
        # core machine flushes each location in buffer-entry order, so a ws
        # order against po of both threads cannot be reproduced
        E = structure("shared x; shared y;\nthread t0 { x := 1; y := 2; }\nthread t1 { y := 1; x := 2; }\n")
        X = witness_where(E, ws=[("d", "a"), ("b", "c")])
        assert valid(E, X, PSO) and not valid(E, X, "SC")
        assert not check_theorem1(E, X, PSO)

    def test_failure_dump(self):
        E = structure("sb")
        X = witness_where(E, b="iy", d="ix")
        dump = failure_dump(E, X, TSO, delays(E, X, TSO))
        assert dump["model"] == "TSO" and dump["run"] is not None
        assert ["a", "b"] in dump["delayed"]
