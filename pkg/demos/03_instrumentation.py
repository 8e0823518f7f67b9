# %% [markdown]
# # Instrumentation
#
# Writes on a selected pair may go through a per-location buffer, reads may
# take a buffered value early or be postponed.  The result is an ordinary
# program explored under SC.

# %%
from wmm import corpus, pretty_print
from wmm.explorer import explore, replay
from wmm.pipeline import analyse

res = analyse(corpus.load("sb"), "tso")
print(pretty_print(res.program))

# %%
v = explore(res.transformed)
print(v.status, v.kind, "states:", v.states)
for step in v.trace:
    print(f"  {step['thread']:<4} line {step['line']:<3} {step['stmt']}")

# %% [markdown]
# The trace replays deterministically.

# %%
r = replay(res.transformed, v.trace)
print(r.status, r.final_state)

# %%
for model in ("sc", "tso", "pso", "rmo", "power"):
    print(model, explore(analyse(corpus.load("mp"), model).transformed).status)
