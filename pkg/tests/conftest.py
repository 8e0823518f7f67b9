import pytest
from hypothesis import settings, strategies as st

from wmm.frontend import parse_program

settings.register_profile("wmm", max_examples=40, deadline=None)
settings.load_profile("wmm")

SB = """
shared x;
shared y;
thread t0 { x := 1; r1 := y; }
thread t1 { y := 1; r2 := x; }
assert_final(!(r1 == 0 && r2 == 0));
"""


@pytest.fixture
def sb():
    return parse_program(SB)


@st.composite
def litmus_sources(draw, max_threads=2, max_ops=3, locs=("x", "y")):
    """Straight-line litmus programs over a couple of locations."""
    n = draw(st.integers(1, max_threads))
    threads = []
    reg = 0
    for t in range(n):
        ops = []
        for _ in range(draw(st.integers(1, max_ops))):
            loc = draw(st.sampled_from(locs))
            kind = draw(st.sampled_from(["R", "W", "W"]))
            if kind == "W":
                ops.append(f"{loc} := {draw(st.integers(1, 2))};")
            else:
                reg += 1
                ops.append(f"r{reg} := {loc};")
        if draw(st.booleans()) and len(ops) > 1:
            ops.insert(draw(st.integers(1, len(ops) - 1)), draw(st.sampled_from(["fence;", "lwfence;"])))
        threads.append(f"thread t{t} {{ {' '.join(ops)} }}")
    decls = " ".join(f"shared {l};" for l in locs)
    return decls + "\n" + "\n".join(threads) + "\n"


def witness_where(E, ws=None, **reads):
    """The witness whose rf matches `reads` (read name -> write name, with
    "i<loc>" for initial writes) and, optionally, whose ws contains the given
    (write name, write name) pairs."""
    from wmm.axiomatic import enumerate_witnesses

    names = {e.name: e.id for e in E.events}
    want = {names[r]: names[w] for r, w in reads.items()}
    order = {(names[a], names[b]) for a, b in (ws or ())}
    for X in enumerate_witnesses(E):
        rf = X.rf_map()
        if all(rf[r] == w for r, w in want.items()) and order <= X.ws_pairs():
            return X
    raise LookupError(reads)
