"""
An honest session
=================

Alice shares a key with three classical receivers over ideal channels.
Nothing disturbs the particles, so both checks see no errors and the
receivers' shares sum to the key.
"""

from collections import Counter

from msqss import SessionConfig, combine_key, run_session
from msqss.protocol import receiver_view

cfg = SessionConfig(d=5, N=3, n=4, seed=2024, count_mode="balanced")
tr = run_session(cfg)
print("aborted:", tr.aborted, tr.abort_reason)

# %%
# How the 32 slots of receiver 1 were classified
print(Counter(r.case.value for r in tr.records_for(1)))
print("reflect error rates:", tr.reflect_error_rate)
print("Z_MEASURE error rates:", tr.zmeasure_error_rate)

# %%
# Sessions with too few Z_MEASURE slots stop before Step 5; try the next trial
# until one completes.
from msqss.rng import trial_tree

k = 0
while tr.aborted:
    k += 1
    tr = run_session(cfg, trial_tree(cfg.seed, k))
print("trial", k)
for i in range(1, cfg.N + 1):
    print(f"K_{i} =", tr.key_shares[i].dits, " receiver sees", receiver_view(tr, i))
print("K   =", tr.combined_key)
assert tr.combined_key == combine_key(list(tr.key_shares.values()), cfg.d)

# %%
# The first few events of the log
for e in tr.events[:8]:
    print(e.seq, e.actor, e.kind, e.receiver, e.slot, e.payload)
