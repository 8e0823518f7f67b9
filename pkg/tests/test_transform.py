import pytest

from wmm import corpus
from wmm.axiomatic import MODEL_CHAIN, POWER, RMO, SC, TSO
from wmm.cycles import DelaySelection, build_event_graph, find_critical_cycles, select_pairs
from wmm.explorer import reachable_outcomes
from wmm.frontend import (
    BoundAssert, BuffPush, BuffTake, DelaySet, Fence, If, LwFence, Nondet, Store, parse_program,
    pretty_print, walk,
)
from wmm.pipeline import analyse
from wmm.transform import dp_analysis, instrument, strip_fences, tag_events


def kinds(prog):
    return [type(s).__name__ for t in prog.threads for s in walk(t.body)]


class TestDependencies:
    def test_iriw_dps_through_xor(self):
        dp = dp_analysis(corpus.load("iriw+dps"))
        assert dp[0] == {((0,), (2,))}
        assert dp[2] == set()

    def test_independent_loads(self):
        dp = dp_analysis(parse_program("shared x; shared y;\nthread t { r1 := x; r2 := y; }\n"))
        assert dp[0] == set()

    def test_control_dependency_to_store(self):
        p = parse_program("shared x; shared y;\nthread t { r1 := x; if (r1) { y := 1; } }\n")
        assert dp_analysis(p)[0] == {((0,), (1, 0, 0))}

    def test_no_control_dependency_to_load(self):
        p = parse_program("shared x; shared y;\nthread t { r1 := x; if (r1) { r2 := y; } }\n")
        assert dp_analysis(p)[0] == set()

    def test_overwritten_register_breaks_chain(self):
        p = parse_program("shared x; shared y;\nthread t { r1 := x; r1 := 0; y := r1; }\n")
        assert dp_analysis(p)[0] == set()

    def test_loop_carried(self):
        p = parse_program("shared x; shared y;\nthread t { r := 0; while (1) { y := r; r := x; } }\n")
        assert ((1, 0, 1), (1, 0, 0)) in dp_analysis(p)[0]


class TestFences:
    def test_full_fence_leaves_no_delays(self):
        g = build_event_graph(corpus.load("sb+fence"), TSO)
        assert find_critical_cycles(g, TSO) == []

    def test_writer_lwfence_orders_writes(self):
        g = build_event_graph(corpus.load("mp+lwfence"), POWER)
        (c,) = find_critical_cycles(g, POWER)
        assert all(role != "po" or g[a].dir != "W" for role, a, _ in c.delay_pairs)

    def test_lwfence_does_not_order_write_read(self):
        p = parse_program("shared x; shared y;\nthread t0 { x := 1; lwfence; r1 := y; }\nthread t1 { y := 1; lwfence; r2 := x; }\n")
        assert find_critical_cycles(build_event_graph(p, TSO), TSO)

    @pytest.mark.parametrize("name", ["sb+fence", "mp+lwfences", "pgsql+patch"])
    def test_fences_removed(self, name):
        for A in MODEL_CHAIN:
            out = analyse(corpus.load(name), A).program
            assert not {"Fence", "LwFence"} & set(kinds(out))


class TestTagging:
    def test_po_pair_tags_source(self):
        g = build_event_graph(corpus.load("sb"), TSO)
        tags = tag_events(g, select_pairs(find_critical_cycles(g, TSO), TSO, "one_per_cycle"))
        assert [g[e].name for e in tags] == ["a"]
        assert tags.reasons[0] == {"dpo"}

    def test_rfe_pair_tags_both_ends(self):
        g = build_event_graph(corpus.load("iriw+dps"), POWER)
        tags = tag_events(g, select_pairs(find_critical_cycles(g, POWER), POWER, "one_per_cycle"))
        by_name = {g[e].name: r for e, r in tags.reasons.items()}
        assert by_name == {"e": {"drfs"}, "a": {"drft"}}

    def test_read_source_of_po_pair_is_postponed(self):
        g = build_event_graph(corpus.load("lb"), RMO)
        tags = tag_events(g, select_pairs(find_critical_cycles(g, RMO), RMO, "all"))
        assert {g[e].name for e in tags.postponed} == {"a", "c"}


class TestInstrument:
    def test_iriw_dps_fig5_store(self):
        out = analyse(corpus.load("iriw+dps"), POWER, "one_per_cycle").program
        first = out.threads[2].body[0]
        assert isinstance(first, If) and isinstance(first.cond, Nondet)
        assert [type(s) for s in first.then] == [BoundAssert, BuffPush]
        assert first.then[1].thread == 2
        assert isinstance(first.orelse[0], Store)

    def test_iriw_dps_read_takes_from_other_thread(self):
        out = analyse(corpus.load("iriw+dps"), POWER, "one_per_cycle").program
        takes = [s for s in walk(out.threads[0].body) if isinstance(s, BuffTake)]
        assert [(t.reg, str(t.ref), t.thread) for t in takes] == [("r1", "x", 2)]

    def test_postponed_read(self):
        res = analyse(corpus.load("lb"), RMO, "one_per_cycle")
        sets = [s for s in walk(res.program.threads[0].body) if isinstance(s, DelaySet)]
        assert [s.dreg for s in sets] == ["delay_r1"]
        assert res.transformed.delay_registers == {(0, "r1"): "delay_r1"}
        assert res.transformed.buffers == ()
        # mandatory resolution before the final assertion
        assert "delay_resolve(r1, delay_r1);" in pretty_print(res.program).split("epilogue")[1]

    def test_empty_selection_is_identity_minus_fences(self):
        for name in corpus.names():
            p = corpus.load(name)
            out = instrument(p, DelaySelection("all", frozenset()), SC)
            assert out.program == strip_fences(p)

    def test_one_buffer_per_instrumented_location(self):
        res = analyse(corpus.load("sb"), TSO)
        assert sorted(map(str, res.transformed.buffers)) == ["x", "y"]

    @pytest.mark.parametrize("name", corpus.names())
    def test_dump_round_trips(self, name):
        for A in MODEL_CHAIN:
            for strategy in ("all", "one_per_cycle"):
                out = analyse(corpus.load(name), A, strategy).program
                assert parse_program(pretty_print(out)) == out

    @pytest.mark.parametrize("name", ["sb", "lb", "mp", "iriw", "sb+fence"])
    def test_identity_on_sc(self, name):
        p = corpus.load(name)
        assert reachable_outcomes(analyse(p, SC).transformed) == reachable_outcomes(p)
