"""
Qudit efficiency
================

Each receiver consumes ``8n`` particles from Alice and, on average, ``4n``
fresh ones of its own for ``n`` dits of key.  Classical check traffic is not
counted.
"""

import numpy as np

from msqss import SessionConfig, efficiency, run_session
from msqss.rng import trial_tree

for N in range(1, 6):
    rep = efficiency(N, 10)
    print(N, rep.eta, rep.lam)

# %%
# Measured consumption fluctuates with the receivers' coin flips
cfg = SessionConfig(d=3, N=3, n=100, seed=1)
lams = np.array([efficiency(run_session(cfg, trial_tree(cfg.seed, k))).lam for k in range(30)])
print("mean lambda", lams.mean(), "sd", lams.std(ddof=1), "expected 3600, sd", np.sqrt(3 * 200))
