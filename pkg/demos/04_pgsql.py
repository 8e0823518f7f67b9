# %% [markdown]
# # PostgreSQL latch excerpt
#
# Two workers pass a token through `latch` and `flag`.  On Power the update
# of `flag` can arrive after the `latch` it is meant to precede, so a worker
# wakes with latch set but flag clear.

# %%
import time

from wmm import corpus
from wmm.explorer import explore
from wmm.pipeline import analyse

print(corpus.source("pgsql"))

# %%
for strategy in ("all", "one_per_cycle"):
    res = analyse(corpus.load("pgsql"), "power", strategy)
    t0 = time.perf_counter()
    v = explore(res.transformed, loop_unwind=2)
    print(f"{strategy:<14} pairs={len(res.selection.pairs):<4} {v.status} line={v.line} "
          f"states={v.states} {time.perf_counter() - t0:.2f}s")
print(v.final_state)

# %% [markdown]
# Two lightweight fences, one between the two writes and one between the two
# reads, restore the intended behaviour.

# %%
for model in ("tso", "pso", "rmo", "power"):
    v = explore(analyse(corpus.load("pgsql+patch"), model).transformed, loop_unwind=2)
    print(model, v.status)
