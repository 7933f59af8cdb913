"""Closed forms, exact propagation and Monte-Carlo estimates of detection.

Three independent routes to the same numbers:

* :func:`analytic_detection` -- the closed forms for intercept-resend and
  measure-resend.
* :func:`exact_detection` -- sampling-free propagation of each attack's
  branches through a single slot using Born-rule distributions.
* :func:`estimate_detection` / :func:`simulate` -- full protocol sessions
  with sampled measurements.

A *scenario* is what happened to one slot: the basis Alice prepared, the
receiver's move, and the check that can catch an error there.  "Detection"
of a slot means the check actually examines it and finds a mismatch, so
Step-4 figures include the 1/2 chance that a ``Z_MEASURE`` slot is picked
for checking.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from msqss.adversary import (
    AttackModel,
    EntangleMeasure,
    InterceptResend,
    MeasureResend,
    NoAttack,
)
from msqss.protocol import (
    INSUFFICIENT_ZMEASURE,
    REFLECT_CHECK,
    ZMEASURE_CHECK,
    Action,
    Case,
    SessionConfig,
    SessionTranscript,
    run_session,
    zmeasure_mismatch,
)
from msqss.qudit import (
    Basis,
    JointState,
    QuditState,
    apply_unitary,
    outcome_distribution,
    particle_marginal,
    prepare,
    probe_given_particle,
    tensor,
)
from msqss.rng import trial_tree


class Stage(str, enum.Enum):
    STEP3 = "step3"
    STEP4 = "step4"
    IGNORED = "ignored"

    def __str__(self) -> str:
        return self.value


class UnknownScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    basis: Basis
    action: Action
    stage: Stage

    @classmethod
    def of(cls, basis: Basis | str, action: Action | str) -> Scenario:
        basis, action = Basis(basis), Action(action)
        if action is Action.REFLECT:
            stage = Stage.STEP3
        else:
            stage = Stage.STEP4 if basis is Basis.Z else Stage.IGNORED
        return cls(basis, action, stage)

    def validate(self) -> Scenario:
        if Scenario.of(self.basis, self.action) != self:
            raise UnknownScenarioError(f"{self.basis}+{self.action} is never examined at {self.stage}")
        return self

    @property
    def label(self) -> str:
        return f"{self.basis}+{self.action}@{self.stage}"


SCENARIOS = (
    Scenario.of(Basis.Z, Action.MEASURE),
    Scenario.of(Basis.X, Action.MEASURE),
    Scenario.of(Basis.Z, Action.REFLECT),
    Scenario.of(Basis.X, Action.REFLECT),
)


# ---------------------------------------------------------------------------
# closed forms


def analytic_detection(attack: AttackModel | str, d: int, scenario: Scenario) -> Fraction:
    """Per-slot detection probability for attacks with a closed form.

    Intercept-resend is caught only on ``Z_MEASURE`` slots in Step 4, with
    probability ``(d-1)/(2d)``; measure-resend only on X-prepared REFLECTED
    slots in Step 3, with probability ``(d-1)/d``.
    """
    scenario.validate()
    kind = attack if isinstance(attack, str) else attack.kind
    if kind == NoAttack.kind:
        return Fraction(0)
    if kind == InterceptResend.kind:
        if scenario == Scenario.of(Basis.Z, Action.MEASURE):
            return Fraction(d - 1, 2 * d)
        return Fraction(0)
    if kind == MeasureResend.kind:
        if scenario == Scenario.of(Basis.X, Action.REFLECT):
            return Fraction(d - 1, d)
        return Fraction(0)
    raise ValueError(f"no closed form for {kind!r}")


def has_closed_form(attack: AttackModel) -> bool:
    return not isinstance(attack, EntangleMeasure)


# ---------------------------------------------------------------------------
# exact single-slot propagation


def _forward(attack: AttackModel, state: QuditState):
    # yields (weight, what the receiver gets, what Eve kept)
    d = state.d
    if isinstance(attack, NoAttack):
        yield 1.0, state, None
    elif isinstance(attack, InterceptResend):
        for v in range(d):
            yield 1.0 / d, prepare(d, Basis.Z, v), state
    elif isinstance(attack, MeasureResend):
        for e, w in enumerate(outcome_distribution(state, Basis.Z)):
            if w > 0:
                yield w, prepare(d, Basis.Z, e), e
    elif isinstance(attack, EntangleMeasure):
        yield 1.0, apply_unitary(tensor(state, attack.probe), attack.forward), None
    else:
        raise TypeError(f"unknown attack model {attack!r}")


def _receiver(carrier, action: Action):
    # yields (weight, receiver's Z outcome or None, what the receiver sends back)
    if action is Action.REFLECT:
        yield 1.0, None, carrier
        return
    if isinstance(carrier, JointState):
        for g, w in enumerate(particle_marginal(carrier, Basis.Z)):
            if w > 0:
                yield w, g, tensor(prepare(carrier.d, Basis.Z, g), probe_given_particle(carrier, g, Basis.Z))
    else:
        for g, w in enumerate(outcome_distribution(carrier, Basis.Z)):
            if w > 0:
                yield w, g, prepare(carrier.d, Basis.Z, g)


def _backward(attack: AttackModel, outgoing, kept):
    if isinstance(attack, InterceptResend):
        return kept
    if isinstance(attack, EntangleMeasure):
        return apply_unitary(outgoing, attack.backward)
    return outgoing


def _alice_distribution(received, basis: Basis) -> np.ndarray:
    if isinstance(received, JointState):
        return particle_marginal(received, basis)
    return outcome_distribution(received, basis)


def slot_mismatch_probability(attack: AttackModel, d: int, basis: Basis, value: int, action: Action) -> float:
    """Probability that the slot's check would see an inconsistency.

    REFLECT: Alice's measurement in the preparation basis differs from
    ``value``.  MEASURE on a Z-prepared slot: prepared value, receiver's
    value and Alice's Z measurement are not all equal.  X-prepared MEASURE
    slots are discarded, so 0.
    """
    basis, action = Basis(basis), Action(action)
    if basis is Basis.X and action is Action.MEASURE:
        return 0.0
    ok = 0.0
    for w1, carrier, kept in _forward(attack, prepare(d, basis, value)):
        for w2, g, outgoing in _receiver(carrier, action):
            if g is not None and g != value:
                continue
            received = _backward(attack, outgoing, kept)
            ok += w1 * w2 * _alice_distribution(received, basis)[value]
    return max(0.0, 1.0 - ok)


def exact_detection(attack: AttackModel, d: int, check_probability: float = 0.5) -> dict[Scenario, float]:
    """Per-slot detection probability in every scenario, averaged over Alice's value."""
    out = {}
    for sc in SCENARIOS:
        if sc.stage is Stage.IGNORED:
            out[sc] = 0.0
            continue
        factor = check_probability if sc.stage is Stage.STEP4 else 1.0
        mism = np.mean([slot_mismatch_probability(attack, d, sc.basis, t, sc.action) for t in range(d)])
        out[sc] = float(factor * mism)
    return out


def max_detection(attack: AttackModel, d: int) -> float:
    return max(exact_detection(attack, d).values())


# ---------------------------------------------------------------------------
# exact session-level abort probability


def _slot_type_probabilities(attack: AttackModel, d: int, basis: Basis) -> dict[str, float]:
    """Split a slot of the given preparation basis into outcome types.

    Keys: ``z_ok`` / ``z_bad`` (Z_MEASURE without/with mismatch), ``r_bad``
    (REFLECTED with mismatch) and ``other`` (REFLECTED clean or IGNORED).
    """
    r_bad = 0.5 * np.mean([slot_mismatch_probability(attack, d, basis, t, Action.REFLECT) for t in range(d)])
    if basis is Basis.Z:
        z_bad = 0.5 * np.mean([slot_mismatch_probability(attack, d, basis, t, Action.MEASURE) for t in range(d)])
        return {"z_ok": 0.5 - z_bad, "z_bad": z_bad, "r_bad": r_bad, "other": 0.5 - r_bad}
    return {"z_ok": 0.0, "z_bad": 0.0, "r_bad": r_bad, "other": 1.0 - r_bad}


def _accumulate(dp: np.ndarray, types: dict[str, float], count: int) -> np.ndarray:
    # dp[m, M]: probability of m Z_MEASURE slots, M of them bad, and no bad REFLECTED slot so far
    for _ in range(count):
        new = dp * types["other"]
        new[1:, :] += dp[:-1, :] * types["z_ok"]
        new[1:, 1:] += dp[:-1, :-1] * types["z_bad"]
        dp = new
    return dp


def _unchecked_probability(m: int, bad: int, n: int, policy: str) -> float:
    """Chance that the Step-4 sample of ``m`` slots misses all ``bad`` ones."""
    if bad == 0:
        return 1.0
    if policy == "exact-n":
        sizes = [(n, 1.0)]
    elif m % 2:
        sizes = [(m // 2, 0.5), (m // 2 + 1, 0.5)]
    else:
        sizes = [(m // 2, 1.0)]
    total = 0.0
    for k, w in sizes:
        if k <= m - bad:
            total += w * float(Fraction(math.comb(m - bad, k), math.comb(m, k)))
    return total


def exact_receiver_detection(config: SessionConfig, attack: AttackModel | None = None) -> dict[str, float]:
    """Exact probabilities for one attacked receiver's leg.

    Returns ``reflect`` (the reflect check fails), ``zmeasure`` (the reflect
    check passes, there are enough Z_MEASURE slots and the Step-4 check
    fails) and ``detected`` (their sum).  Thresholds other than 0 are not
    supported.
    """
    if config.threshold != 0.0:
        raise ValueError("exact session probabilities assume an error threshold of 0")
    attack = config.attack if attack is None else attack
    d, n, L = config.d, config.n, config.slots
    types = {b: _slot_type_probabilities(attack, d, b) for b in Basis}
    dp = np.zeros((L + 1, L + 1))
    dp[0, 0] = 1.0
    if config.count_mode == "balanced":
        dp = _accumulate(dp, types[Basis.Z], L // 2)
        dp = _accumulate(dp, types[Basis.X], L - L // 2)
    else:
        mixed = {k: 0.5 * (types[Basis.Z][k] + types[Basis.X][k]) for k in types[Basis.Z]}
        dp = _accumulate(dp, mixed, L)
    no_reflect_error = float(dp.sum())
    survive = 0.0
    for m in range(L + 1):
        for bad in range(m + 1):
            w = dp[m, bad]
            if w == 0.0:
                continue
            # too few Z_MEASURE slots: the session stops before Step 4
            survive += w if m < 2 * n else w * _unchecked_probability(m, bad, n, config.check_policy)
    reflect = 1.0 - no_reflect_error
    detected = 1.0 - survive
    return {"reflect": float(reflect), "zmeasure": float(detected - reflect), "detected": float(detected)}


def exact_session_detection(config: SessionConfig) -> float:
    """Probability that some check fails in a session, over all attacked receivers."""
    tapped = [i for i in range(1, config.N + 1) if config.tapped(i)]
    if not tapped or config.tap_probability == 0.0:
        return 0.0
    if config.tap_probability != 1.0:
        raise ValueError("exact session probabilities assume every slot is tapped")
    per = exact_receiver_detection(config)["detected"]
    return 1.0 - (1.0 - per) ** len(tapped)


def exact_reflect_abort(config: SessionConfig) -> float:
    """Probability that the reflect check fails on at least one attacked receiver."""
    tapped = [i for i in range(1, config.N + 1) if config.tapped(i)]
    if not tapped:
        return 0.0
    per = exact_receiver_detection(config)["reflect"]
    return 1.0 - (1.0 - per) ** len(tapped)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class DetectionEstimate:
    """Fraction of qualifying slots that were caught, with its normal-approximation SE."""

    estimate: float
    trials: int
    detections: int
    analytic: float | None = None
    exact: float | None = None

    @property
    def se(self) -> float:
        if self.trials == 0:
            return float("nan")
        p = self.estimate
        return math.sqrt(p * (1.0 - p) / self.trials)

    def within(self, k: float, reference: float | None = None) -> bool:
        """Whether ``reference`` (default: the exact value) lies within ``k`` SE.

        A zero SE (estimate 0 or 1) demands exact equality.
        """
        ref = self.exact if reference is None else reference
        return abs(self.estimate - ref) <= k * self.se + 1e-12


@dataclass
class SimulationSummary:
    """Count totals over a batch of sessions; merging two summaries adds counts."""

    sessions: int = 0
    aborts: dict[str, int] = field(default_factory=dict)
    qualifying: dict[Scenario, int] = field(default_factory=lambda: {s: 0 for s in SCENARIOS})
    detected: dict[Scenario, int] = field(default_factory=lambda: {s: 0 for s in SCENARIOS})
    lambda_total: int = 0
    lambda_sq_total: int = 0
    measure_actions: int = 0

    def merge(self, other: SimulationSummary) -> SimulationSummary:
        out = SimulationSummary(
            sessions=self.sessions + other.sessions,
            lambda_total=self.lambda_total + other.lambda_total,
            lambda_sq_total=self.lambda_sq_total + other.lambda_sq_total,
            measure_actions=self.measure_actions + other.measure_actions,
        )
        for k in set(self.aborts) | set(other.aborts):
            out.aborts[k] = self.aborts.get(k, 0) + other.aborts.get(k, 0)
        for s in SCENARIOS:
            out.qualifying[s] = self.qualifying[s] + other.qualifying[s]
            out.detected[s] = self.detected[s] + other.detected[s]
        return out

    def add(self, transcript: SessionTranscript, receivers: Iterable[int]) -> None:
        self.sessions += 1
        if transcript.aborted:
            self.aborts[transcript.abort_reason] = self.aborts.get(transcript.abort_reason, 0) + 1
        lam = measured_efficiency(transcript).lam
        self.lambda_total += lam
        self.lambda_sq_total += lam * lam
        for i in receivers:
            checked = set(transcript.check_positions.get(i, ()))
            check_ran = transcript.zmeasure_error_rate.get(i) is not None
            for r in transcript.records_for(i):
                if r.action.tag is Action.MEASURE:
                    self.measure_actions += 1
                sc = Scenario.of(r.prepared_basis, r.action.tag)
                if r.case is Case.REFLECTED:
                    self.qualifying[sc] += 1
                    self.detected[sc] += r.alice_return_value != r.prepared_value
                elif r.case is Case.Z_MEASURE:
                    if check_ran:
                        self.qualifying[sc] += 1
                        self.detected[sc] += r.slot in checked and zmeasure_mismatch(r)
                else:
                    self.qualifying[sc] += 1

    def abort_rate(self, reason: str | None = None) -> float:
        total = sum(self.aborts.values()) if reason is None else self.aborts.get(reason, 0)
        return total / self.sessions if self.sessions else float("nan")

    def check_abort_rate(self) -> float:
        """Aborts caused by a failed check (not by a shortage of Z_MEASURE slots)."""
        hits = self.aborts.get(REFLECT_CHECK, 0) + self.aborts.get(ZMEASURE_CHECK, 0)
        return hits / self.sessions if self.sessions else float("nan")

    def estimate(self, scenario: Scenario, analytic=None, exact=None) -> DetectionEstimate:
        q, k = self.qualifying[scenario], self.detected[scenario]
        return DetectionEstimate(k / q if q else 0.0, q, k,
                                 None if analytic is None else float(analytic),
                                 None if exact is None else float(exact))


def observed_receivers(config: SessionConfig) -> list[int]:
    """Receivers whose slots count towards detection statistics."""
    tapped = [i for i in range(1, config.N + 1) if config.tapped(i)]
    return tapped or list(range(1, config.N + 1))


def simulate(config: SessionConfig, sessions: int, first_trial: int = 0,
             min_slots: dict[Scenario, int] | None = None, max_sessions: int | None = None) -> SimulationSummary:
    """Run sessions ``first_trial, first_trial + 1, ...`` and tally them.

    Session ``k`` uses the streams under ``trial_tree(config.seed, k)``.  With
    ``min_slots`` the run continues past ``sessions`` until every listed
    scenario has at least that many qualifying slots (or ``max_sessions``).
    """
    if sessions < 1:
        raise ValueError("sessions must be >= 1")
    summary = SimulationSummary()
    receivers = observed_receivers(config)
    k = first_trial
    while True:
        done = summary.sessions >= sessions and all(
            summary.qualifying[s] >= need for s, need in (min_slots or {}).items()
        )
        if done or (max_sessions is not None and summary.sessions >= max_sessions):
            return summary
        summary.add(run_session(config, trial_tree(config.seed, k)), receivers)
        k += 1


def estimate_detection(config: SessionConfig, scenario: Scenario, sessions: int,
                       min_slots: int = 0) -> DetectionEstimate:
    """Monte-Carlo detection rate for one scenario with analytic and exact references attached."""
    summary = simulate(config, sessions, min_slots={scenario: min_slots} if min_slots else None)
    analytic = analytic_detection(config.attack, config.d, scenario) if has_closed_form(config.attack) else None
    return summary.estimate(scenario, analytic, exact_detection(config.attack, config.d)[scenario])


# ---------------------------------------------------------------------------
# efficiency


@dataclass(frozen=True)
class EfficiencyReport:
    """Qudit efficiency ``eta = gamma / (lam + nu)``.

    ``gamma`` is the shared key length in dits, ``lam`` the qudits consumed
    (Alice's ``8nN`` plus one fresh particle per MEASURE), ``nu`` the classical
    dits counted against the key (0: security-check traffic is excluded).
    ``expected_lam`` is the ``12nN`` figure for comparison and
    ``classical_informational`` counts every classical value exchanged,
    which does not enter ``eta``.
    """

    gamma: int
    lam: int
    nu: int
    eta: Fraction
    expected_lam: int
    classical_informational: int = 0

    def as_record(self) -> dict:
        return {"gamma": self.gamma, "lambda": self.lam, "nu": self.nu,
                "eta": f"{self.eta.numerator}/{self.eta.denominator}", "eta_float": float(self.eta),
                "expected_lambda": self.expected_lam, "classical_informational": self.classical_informational}


def expected_efficiency(N: int, n: int) -> EfficiencyReport:
    if N < 1 or n < 1:
        raise ValueError("N and n must be >= 1")
    lam = 8 * n * N + 4 * n * N
    return EfficiencyReport(n, lam, 0, Fraction(n, lam), lam)


def measured_efficiency(transcript: SessionTranscript) -> EfficiencyReport:
    cfg = transcript.config
    fresh = sum(r.action.tag is Action.MEASURE for r in transcript.records)
    lam = cfg.slots * cfg.N + fresh
    gamma = 0 if transcript.aborted else cfg.n
    informational = fresh  # announced MEASURE positions
    for i in range(1, cfg.N + 1):
        informational += 2 * len(transcript.check_positions.get(i, ()))  # positions + published values
        informational += len(transcript.key_positions.get(i, ()))
    return EfficiencyReport(gamma, lam, 0, Fraction(gamma, lam), 12 * cfg.n * cfg.N, informational)


def efficiency(source: SessionTranscript | int, n: int | None = None) -> EfficiencyReport:
    """Measured report for a transcript, or the expected report for ``(N, n)``."""
    if isinstance(source, SessionTranscript):
        return measured_efficiency(source)
    if n is None:
        raise TypeError("expected-mode efficiency needs both N and n")
    return expected_efficiency(source, n)


__all__ = [
    "INSUFFICIENT_ZMEASURE",
    "REFLECT_CHECK",
    "SCENARIOS",
    "ZMEASURE_CHECK",
    "DetectionEstimate",
    "EfficiencyReport",
    "Scenario",
    "SimulationSummary",
    "Stage",
    "UnknownScenarioError",
    "analytic_detection",
    "efficiency",
    "estimate_detection",
    "exact_detection",
    "exact_receiver_detection",
    "exact_reflect_abort",
    "exact_session_detection",
    "expected_efficiency",
    "max_detection",
    "measured_efficiency",
    "simulate",
    "slot_mismatch_probability",
]
