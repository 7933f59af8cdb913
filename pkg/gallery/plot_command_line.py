"""
Driving the command line
========================

Experiments are described by small ``key = value`` files.  Entangle-measure
attacks are read from a matrix file, which ``verify-attack`` checks.
"""

import tempfile
from pathlib import Path

import numpy as np

from msqss import build_undetectable_attack
from msqss.cli import main
from msqss.formats import write_attack_file

work = Path(tempfile.mkdtemp())
write_attack_file(work / "quiet.txt", build_undetectable_attack(2, rng=np.random.default_rng(3)))
main(["verify-attack", str(work / "quiet.txt")])

# %%
(work / "quiet.cfg").write_text(
    "d = 2\nN = 2\nn = 2\nseed = 5\ntrials = 50\n"
    "attack = entangle-measure\nattack_file = quiet.txt\nattack_target = 1\nformat = table\n"
)
main(["run", "--config", str(work / "quiet.cfg")])

# %%
(work / "ir.cfg").write_text("d = 3\nN = 1\nn = 8\nattack = intercept-resend\ntrials = 100\n")
main(["run", "--config", str(work / "ir.cfg"), "--format", "table"])

# %%
main(["efficiency", "-k", "4"])
