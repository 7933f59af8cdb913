"""Simulator and analysis tools for d-level multiparty semiquantum secret sharing."""

from msqss.adversary import (
    EntangleMeasure,
    InterceptResend,
    MeasureResend,
    NoAttack,
    build_undetectable_attack,
    check_constraints,
    final_probe_states,
)
from msqss.analysis import (
    SCENARIOS,
    Scenario,
    analytic_detection,
    efficiency,
    estimate_detection,
    exact_detection,
    simulate,
)
from msqss.protocol import SessionConfig, SessionTranscript, combine_key, run_session
from msqss.qudit import Basis, JointState, QuditState, fourier_matrix, measure, prepare

__version__ = "0.1.0"

__all__ = [
    "SCENARIOS",
    "Basis",
    "EntangleMeasure",
    "InterceptResend",
    "JointState",
    "MeasureResend",
    "NoAttack",
    "QuditState",
    "Scenario",
    "SessionConfig",
    "SessionTranscript",
    "analytic_detection",
    "build_undetectable_attack",
    "check_constraints",
    "combine_key",
    "efficiency",
    "estimate_detection",
    "exact_detection",
    "final_probe_states",
    "fourier_matrix",
    "measure",
    "prepare",
    "run_session",
    "simulate",
]
