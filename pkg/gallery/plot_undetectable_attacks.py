"""
Attacks that introduce no error
===============================

An entangle-measure attack that never moves the particle off its Z value,
and whose return unitary leaves the probe in the same state on every branch,
passes both checks.  The same property means Eve's probe carries nothing
about the shares.
"""

import numpy as np

from msqss import build_undetectable_attack, check_constraints, exact_detection, final_probe_states
from msqss.adversary import min_pairwise_fidelity, perturb_attack

rng = np.random.default_rng(7)
model = build_undetectable_attack(3, rng=rng)
rep = check_constraints(model)
print(rep)
print("detection per scenario:", {sc.label: f"{v:.1e}" for sc, v in exact_detection(model, 3).items()})
print("smallest probe overlap:", min_pairwise_fidelity(final_probe_states(model)))

# %%
# Nudging the return unitary breaks the common-probe condition and the checks
# start to see errors.
for s in (0.01, 0.1, 0.5, 1.0):
    bent = perturb_attack(model, s, rng)
    r = check_constraints(bent)
    det = max(exact_detection(bent, 3).values())
    print(f"strength {s:<5} eq21 {r.eq21_violation:.3f}  max detection {det:.4f}")
