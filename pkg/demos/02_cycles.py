# %% [markdown]
# # Critical cycles
#
# The event graph abstracts a program into value-free accesses.  Cycles that
# mix program order and communication, and that some model can relax, are
# the only places where weak behaviour can show up.

# %%
from wmm import corpus
from wmm.cycles import cycle_report, dot_export, find_critical_cycles, select_pairs
from wmm.pipeline import analyse

res = analyse(corpus.load("iriw+dps"), "power")
for c in res.cycles:
    print("cycle:", ",".join(c.names(res.graph)))

# %% [markdown]
# Both selection strategies must cut every cycle; one-per-cycle picks fewer pairs.

# %%
for strategy in ("all", "one_per_cycle"):
    sel = select_pairs(res.cycles, "power", strategy)
    print(strategy, sorted((k, res.graph[a].name, res.graph[b].name) for k, a, b in sel.pairs))

# %%
g = analyse(corpus.load("pgsql"), "power").graph
cycles = find_critical_cycles(g, "power")
print(len(cycles), "cycles in the PostgreSQL excerpt on Power")
for c in cycle_report(g, cycles, "power")[:4]:
    print(c["events"], c["lines"])

# %%
print(dot_export(res.graph, res.cycles)[:400])
