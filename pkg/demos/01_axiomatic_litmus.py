# %% [markdown]
# # Litmus tests, axiomatically
#
# Store buffering (sb): each thread writes one variable and reads the other.
# We enumerate every candidate execution (rf and ws choices) and ask which
# architectures admit it.

# %%
from wmm import corpus
from wmm.axiomatic import MODEL_CHAIN, allowed_outcomes, enumerate_witnesses, event_structure, valid

prog = corpus.load("sb")
print(corpus.source("sb"))
E = event_structure(prog).E
print("events:", [f"{e.name}:{e.dir}{e.loc}" for e in E.program_events])

# %%
for X in enumerate_witnesses(E):
    rf = sorted((E[w].name, E[r].name) for w, r in X.rf_pairs())
    print(f"rf={rf}  ", {A.name: valid(E, X, A) for A in MODEL_CHAIN})

# %% [markdown]
# The execution where both reads see the initial values is forbidden only on SC.

# %%
for A in MODEL_CHAIN:
    outs = allowed_outcomes(prog, A)
    print(f"{A.name:<5} {len(outs)} outcomes")
