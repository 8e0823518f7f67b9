from collections import Counter

import pytest

from wmm import corpus
from wmm.axiomatic import MODEL_CHAIN, POWER, SC, TSO, enumerate_witnesses, event_structure, valid
from wmm.cycles import (
    build_event_graph, concrete_critical_cycles, cycle_report, dot_export, find_critical_cycles,
    select_pairs,
)
from wmm.frontend import parse_program

STRAIGHT_LINE = ["sb", "sb+fence", "lb", "mp", "mp+lwfence", "mp+lwfences", "iriw", "iriw+dps"]


def graph(name, A):
    return build_event_graph(corpus.load(name), A)


def names(g, pairs):
    return {(g[a].name, g[b].name) for _, a, b in pairs}


def cc_ok(events, proc, loc, dirs):
    """Independent restatement of cc-po and cc-loc."""
    per_proc = Counter(proc[e] for e in events)
    if any(c > 2 for c in per_proc.values()):
        return False
    for p in per_proc:
        mine = [e for e in events if proc[e] == p]
        if len(mine) == 2 and loc[mine[0]] == loc[mine[1]]:
            return False
    for l in {loc[e] for e in events}:
        at = [e for e in events if loc[e] == l]
        if len(at) > 3 or len({proc[e] for e in at}) != len(at):
            return False
        if not any(dirs[e] == "W" for e in at):
            return False
    return True


class TestEventGraph:
    def test_iriw_dps_fig5(self):
        g = graph("iriw+dps", POWER)
        assert [e.name for e in g.events] == list("abcdef")
        assert names(g, [("", a, b) for a, b in g.dp]) == {("a", "b"), ("c", "d")}
        by_loc = {}
        for pair in g.cmp:
            for e in pair:
                by_loc.setdefault(str(g[e].loc), set()).add(g[e].name)
        assert by_loc == {"x": {"a", "d", "e"}, "y": {"b", "c", "f"}}

    def test_sb(self):
        g = graph("sb", TSO)
        assert len(g.events) == 4
        assert names(g, [("", a, b) for a, b in g.po]) == {("a", "b"), ("c", "d")}
        assert len(g.cmp) == 2

    def test_single_thread_has_no_cycles(self):
        g = build_event_graph(parse_program("shared x; shared y;\nthread t { x := 1; r := y; y := r; }\n"), POWER)
        assert not g.cmp
        assert find_critical_cycles(g, POWER) == []

    def test_loop_po_both_ways(self):
        p = parse_program("shared x; shared y;\nthread t { while (1) { r := x; y := 1; } }\n")
        g = build_event_graph(p, POWER)
        assert {(0, 1), (1, 0)} <= set(g.po)

    def test_fence_annotation(self):
        g = graph("sb+fence", TSO)
        assert set(g.po.values()) == {"full"}


class TestCriticalCycles:
    def test_iriw_dps_single_cycle(self):
        g = graph("iriw+dps", POWER)
        (c,) = find_critical_cycles(g, POWER)
        assert c.names(g) == list("abfcde")
        assert names(g, c.delay_pairs) == {("e", "a"), ("f", "c")}

    def test_sb(self):
        g = graph("sb", TSO)
        (c,) = find_critical_cycles(g, TSO)
        assert c.names(g) == list("abcd")
        assert find_critical_cycles(graph("sb", SC), SC) == []

    def test_full_fence_removes_sb_cycle(self):
        for A in MODEL_CHAIN:
            assert find_critical_cycles(graph("sb+fence", A), A) == []

    def test_lwfence_keeps_write_read(self):
        p = parse_program("shared x; shared y;\nthread t0 { x := 1; lwfence; r1 := y; }\nthread t1 { y := 1; lwfence; r2 := x; }\n")
        g = build_event_graph(p, TSO)
        assert len(find_critical_cycles(g, TSO)) == 1

    def test_mp_writer_lwfence_safe_on_power(self):
        g = graph("mp+lwfence", POWER)
        (c,) = find_critical_cycles(g, POWER)
        # the fenced write pair and the rfe it covers are not delays
        assert names(g, c.delay_pairs) == {("c", "d")}

    def test_shared_fence_segment_covers_one_rfe(self):
        # wrc with lwfence on the middle thread and a dependency on the reader:
        # the single fence cannot make both rfe edges safe
        p = parse_program("""shared x; shared y;
thread t0 { x := 1; }
thread t1 { r1 := x; lwfence; y := 1; }
thread t2 { r2 := y; r3 := x + r2; }
""")
        g = build_event_graph(p, POWER)
        (c,) = find_critical_cycles(g, POWER)
        assert names(g, c.delay_pairs) == {("a", "b"), ("c", "d")}

    def test_separate_fences_cover_both_rfes(self):
        p = parse_program("""shared x; shared y;
thread t0 { x := 1; }
thread t1 { r1 := x; lwfence; y := 1; }
thread t2 { r2 := y; lwfence; r3 := x; }
""")
        assert find_critical_cycles(build_event_graph(p, POWER), POWER) == []

    @pytest.mark.parametrize("name", corpus.names())
    def test_cycles_satisfy_cc_conditions(self, name):
        g = graph(name, POWER)
        proc = {e.id: e.proc for e in g.events}
        loc = {e.id: e.loc for e in g.events}
        dirs = {e.id: e.dir for e in g.events}
        for c in find_critical_cycles(g, POWER):
            assert cc_ok(c.events, proc, loc, dirs)
            assert c.delay_pairs
            assert c.events[0] == min(c.events)

    @pytest.mark.parametrize("name", STRAIGHT_LINE)
    def test_concrete_cycles_project_to_abstract(self, name):
        prog = corpus.load(name)
        E = event_structure(prog).E
        for A in MODEL_CHAIN:
            g = build_event_graph(prog, A)
            node = {(e.proc, e.path): e.id for e in g.events}
            to_abs = {e.id: node[e.origin] for e in E.program_events}
            abstract = {frozenset(c.events) for c in find_critical_cycles(g, A)}
            # executions the model forbids (e.g. by cumulativity) need no cover
            for X in (X for X in enumerate_witnesses(E) if valid(E, X, A)):
                for key, _ in concrete_critical_cycles(E, X, A):
                    ring = list(key) + [key[0]]
                    com_only = all(E[a].proc == E[b].proc or E[a].loc == E[b].loc
                                   for a, b in zip(ring, ring[1:]))
                    if com_only:
                        assert frozenset(to_abs[e] for e in key) in abstract


class TestSelection:
    def test_sb(self):
        g = graph("sb", TSO)
        cycles = find_critical_cycles(g, TSO)
        assert names(g, select_pairs(cycles, TSO, "all").pairs) == {("a", "b"), ("c", "d")}
        assert names(g, select_pairs(cycles, TSO, "one-per-cycle").pairs) == {("a", "b")}

    def test_iriw_dps(self):
        g = graph("iriw+dps", POWER)
        sel = select_pairs(find_critical_cycles(g, POWER), POWER, "one_per_cycle")
        assert names(g, sel.pairs) == {("e", "a")}
        assert sel.rfe_pairs() and not sel.po_pairs()

    def test_empty(self):
        assert select_pairs([], SC, "all").pairs == frozenset()

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            select_pairs([], SC, "some")

    @pytest.mark.parametrize("name", corpus.names())
    def test_one_per_cycle_hits_everything(self, name):
        g = graph(name, POWER)
        cycles = find_critical_cycles(g, POWER)
        one = select_pairs(cycles, POWER, "one_per_cycle").pairs
        assert all(c.delay_pairs & one for c in cycles)
        assert len(one) <= len(select_pairs(cycles, POWER, "all").pairs)


class TestReporting:
    def test_sb_dot(self):
        g = graph("sb", TSO)
        dot = dot_export(g, find_critical_cycles(g, TSO))
        assert dot.startswith("digraph events {") and dot.rstrip().endswith("}")
        assert dot.count("fillcolor=lightpink") == 4
        assert dot.count('label="po"') == 2
        assert dot.count("style=dashed") == 2
        assert dot == dot_export(g, find_critical_cycles(g, TSO))

    def test_no_accesses_dot(self):
        g = build_event_graph(parse_program("shared x;\nthread t { r := 1; }\n"), SC)
        assert dot_export(g) == "digraph events {\n  node [shape=box, fontname=\"monospace\"];\n}\n"

    def test_dp_label(self):
        g = graph("iriw+dps", POWER)
        assert 'a -> b [label="dp"' in dot_export(g)

    def test_report(self):
        g = graph("sb", TSO)
        (rep,) = cycle_report(g, find_critical_cycles(g, TSO), TSO)
        assert rep["events"] == list("abcd")
        assert {(p["e1"], p["e2"]) for p in rep["pairs"]} == {("a", "b"), ("c", "d")}
        assert rep["lines"][0][0] == "t0"

    def test_pgsql_fig7_fig8_lines(self):
        g = graph("pgsql", POWER)
        lines = [sorted(map(tuple, c["lines"])) for c in cycle_report(g, find_critical_cycles(g, POWER), POWER)]
        assert sorted([("worker_0", 12), ("worker_0", 15), ("worker_1", 12), ("worker_1", 15)]) in lines
        assert sorted([("worker_0", 15), ("worker_0", 16), ("worker_1", 7), ("worker_1", 12)]) in lines
