"""Alice and the classical receivers running one secret-sharing session.

A session proceeds as follows:

1. Alice prepares ``8n`` particles per receiver, each a random Z- or X-basis
   state, and sends them one at a time.  The next particle on a leg leaves
   only after the previous one has come back.
2. Each receiver either MEASUREs (Z measurement, then sends a fresh Z state
   with the value found) or REFLECTs (sends the particle back untouched).
3. Receivers announce their MEASURE slots.  Slots are classified as
   ``Z_MEASURE`` (Z-prepared, measured), ``IGNORED`` (X-prepared, measured) or
   ``REFLECTED``.  Alice measures reflected particles in their preparation
   basis and compares with what she prepared.
4. Alice picks half of each receiver's ``Z_MEASURE`` slots at random; the
   receiver publishes their values there and Alice checks that her prepared
   value, her own Z measurement of the returned particle and the published
   value agree.
5. From the unchecked ``Z_MEASURE`` slots Alice selects ``n`` and announces
   them; her measured values there are the receiver's share ``K_i``.  The
   secret is ``K = K_1 + ... + K_N (mod d)``.

Any mismatch aborts the session (error threshold 0 by default).  All
receivers' checks are evaluated and recorded, so attacks can be analysed even
when they are caught; the abort reason is the first of reflect-check,
zmeasure-check and insufficient-zmeasure that applies.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from msqss import rng as streams
from msqss.adversary import AttackModel, EveMemory, NoAttack, backward_tap, forward_tap
from msqss.qudit import (
    Basis,
    JointState,
    QuditState,
    measure,
    partial_measure_particle_z,
    prepare,
)
from msqss.rng import SeedTree


class Action(str, enum.Enum):
    MEASURE = "MEASURE"
    REFLECT = "REFLECT"

    def __str__(self) -> str:
        return self.value


class Case(str, enum.Enum):
    Z_MEASURE = "Z_MEASURE"
    IGNORED = "IGNORED"
    REFLECTED = "REFLECTED"

    def __str__(self) -> str:
        return self.value


REFLECT_CHECK = "reflect-check"
ZMEASURE_CHECK = "zmeasure-check"
INSUFFICIENT_ZMEASURE = "insufficient-zmeasure"

COUNT_MODES = ("stochastic", "balanced")
CHECK_POLICIES = ("half", "exact-n")


class InsufficientZMeasureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    """Parameters of one session.

    ``attack`` is applied to the legs of receiver ``attack_target``; a
    ``None`` target with a real attack taps every receiver.  ``dishonest``
    lists receivers mounting the attack from the inside; they otherwise
    follow the protocol, and the taps they run are the same ones an outsider
    would use.

    ``check_policy`` chooses how many ``Z_MEASURE`` slots Step 4 checks:
    ``"half"`` checks ``m // 2`` of ``m`` (a fair coin adds one when ``m`` is
    odd), ``"exact-n"`` checks exactly ``n``.
    """

    d: int
    N: int
    n: int
    seed: int = 0
    count_mode: str = "stochastic"
    attack: AttackModel = field(default_factory=NoAttack)
    attack_target: int | None = None
    dishonest: tuple[int, ...] = ()
    threshold: float = 0.0
    check_policy: str = "half"
    tap_probability: float = 1.0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.count_mode not in COUNT_MODES:
            raise ValueError(f"count_mode must be one of {COUNT_MODES}, got {self.count_mode!r}")
        if self.check_policy not in CHECK_POLICIES:
            raise ValueError(f"check_policy must be one of {CHECK_POLICIES}, got {self.check_policy!r}")
        if self.attack_target is not None and not 1 <= self.attack_target <= self.N:
            raise ValueError(f"attack_target must be in [1, {self.N}], got {self.attack_target}")
        object.__setattr__(self, "dishonest", tuple(sorted(set(self.dishonest))))
        if self.dishonest:
            if self.attack_target is None:
                raise ValueError("a participant attack needs an explicit attack_target")
            if self.attack_target in self.dishonest:
                raise ValueError("the attacked receiver cannot be one of the dishonest receivers")
            if any(not 1 <= i <= self.N for i in self.dishonest):
                raise ValueError(f"dishonest receivers must be in [1, {self.N}]")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if not 0.0 <= self.tap_probability <= 1.0:
            raise ValueError("tap_probability must lie in [0, 1]")
        if getattr(self.attack, "d", self.d) != self.d:
            raise ValueError(f"attack is built for d={self.attack.d}, session uses d={self.d}")

    @property
    def slots(self) -> int:
        return 8 * self.n

    def tapped(self, i: int) -> bool:
        if isinstance(self.attack, NoAttack):
            return False
        return self.attack_target is None or self.attack_target == i


@dataclass(frozen=True)
class ReceiverAction:
    tag: Action
    measured_value: int | None = None

    def __post_init__(self):
        if (self.tag is Action.MEASURE) != (self.measured_value is not None):
            raise ValueError("measured_value must be given exactly for MEASURE")


@dataclass(frozen=True)
class ParticleRecord:
    receiver: int
    slot: int
    prepared_basis: Basis
    prepared_value: int
    action: ReceiverAction
    alice_return_basis: Basis | None
    alice_return_value: int | None
    case: Case
    tapped: bool = False


@dataclass(frozen=True, slots=True)
class Event:
    seq: int
    actor: str
    kind: str
    receiver: int
    slot: int | None = None
    payload: dict | None = None

    def as_record(self) -> dict:
        return {"seq": self.seq, "actor": self.actor, "kind": self.kind, "receiver": self.receiver,
                "slot": self.slot, "payload": self.payload}


@dataclass(frozen=True)
class KeyShare:
    dits: tuple[int, ...]
    d: int

    def __post_init__(self):
        object.__setattr__(self, "dits", tuple(int(x) for x in self.dits))
        if any(not 0 <= x < self.d for x in self.dits):
            raise ValueError(f"key share entries must lie in [0, {self.d - 1}]")

    def __len__(self) -> int:
        return len(self.dits)


@dataclass(frozen=True)
class SessionTranscript:
    config: SessionConfig
    events: tuple[Event, ...]
    records: tuple[ParticleRecord, ...]
    reflect_error_rate: dict[int, float]
    zmeasure_error_rate: dict[int, float | None]
    zmeasure_counts: dict[int, int]
    check_positions: dict[int, tuple[int, ...]]
    key_positions: dict[int, tuple[int, ...]]
    key_shares: dict[int, KeyShare]
    combined_key: tuple[int, ...] | None
    aborted: bool
    abort_reason: str | None

    def records_for(self, i: int) -> list[ParticleRecord]:
        return [r for r in self.records if r.receiver == i]

    def event_records(self) -> list[dict]:
        return [e.as_record() for e in self.events]

    def summary_record(self) -> dict:
        return {
            "d": self.config.d,
            "N": self.config.N,
            "n": self.config.n,
            "seed": self.config.seed,
            "attack": self.config.attack.kind,
            "attack_target": self.config.attack_target,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "reflect_error_rate": {str(i): r for i, r in self.reflect_error_rate.items()},
            "zmeasure_error_rate": {str(i): r for i, r in self.zmeasure_error_rate.items()},
            "zmeasure_counts": {str(i): c for i, c in self.zmeasure_counts.items()},
            "check_positions": {str(i): list(p) for i, p in self.check_positions.items()},
            "key_positions": {str(i): list(p) for i, p in self.key_positions.items()},
            "key_shares": {str(i): list(s.dits) for i, s in self.key_shares.items()},
            "combined_key": None if self.combined_key is None else list(self.combined_key),
        }


# ---------------------------------------------------------------------------
# single steps


def alice_prepare_sequence(config: SessionConfig, i: int, rng: np.random.Generator) -> list[tuple[Basis, int]]:
    """Bases and values of the ``8n`` particles Alice sends to receiver ``i``."""
    L = config.slots
    if config.count_mode == "balanced":
        is_z = rng.permutation(np.arange(L) < L // 2)
    else:
        is_z = rng.random(L) < 0.5
    values = rng.integers(config.d, size=L)
    return [(Basis.Z if z else Basis.X, int(v)) for z, v in zip(is_z, values)]


def receiver_turn(incoming: QuditState | JointState,
                  rng: np.random.Generator) -> tuple[ReceiverAction, QuditState | JointState]:
    """One classical receiver move on a received particle.

    When the particle arrives entangled with a probe the receiver still acts
    only on the particle: MEASURE collapses it and replaces it with a fresh
    ``|g>``, which is unentangled with whatever the probe was left in.
    """
    if rng.random() >= 0.5:
        return ReceiverAction(Action.REFLECT), incoming
    if isinstance(incoming, JointState):
        g, collapsed = partial_measure_particle_z(incoming, rng)
        return ReceiverAction(Action.MEASURE, g), collapsed
    v, _ = measure(incoming, Basis.Z, rng)
    return ReceiverAction(Action.MEASURE, v), prepare(incoming.d, Basis.Z, v)


def case_of(prepared_basis: Basis, action: Action) -> Case:
    if action is Action.REFLECT:
        return Case.REFLECTED
    return Case.Z_MEASURE if prepared_basis is Basis.Z else Case.IGNORED


def classify(records: Iterable[ParticleRecord]) -> dict[Case, list[ParticleRecord]]:
    out = {c: [] for c in Case}
    for r in records:
        out[case_of(r.prepared_basis, r.action.tag)].append(r)
    return out


def reflect_check(records: Sequence[ParticleRecord]) -> float:
    """Fraction of REFLECTED slots where Alice's measurement differs from what she prepared."""
    reflected = [r for r in records if r.case is Case.REFLECTED]
    if not reflected:
        return 0.0
    errors = sum(r.alice_return_value != r.prepared_value for r in reflected)
    return errors / len(reflected)


def zmeasure_mismatch(r: ParticleRecord) -> bool:
    return not (r.prepared_value == r.alice_return_value == r.action.measured_value)


def check_size(m: int, n: int, policy: str, rng: np.random.Generator) -> int:
    if policy == "exact-n":
        return n
    return m // 2 + (int(rng.integers(2)) if m % 2 else 0)


def zmeasure_check(records: Sequence[ParticleRecord], n: int, rng: np.random.Generator,
                   policy: str = "half") -> tuple[float, tuple[int, ...]]:
    """Check a random subset of ``Z_MEASURE`` slots; return ``(error rate, checked slots)``.

    Needs ``m >= 2n`` Z_MEASURE slots.
    """
    z = [r for r in records if r.case is Case.Z_MEASURE]
    m = len(z)
    if m < 2 * n:
        raise InsufficientZMeasureError(f"{m} Z_MEASURE slots, need at least {2 * n}")
    k = check_size(m, n, policy, rng)
    picked = np.sort(rng.choice(m, size=k, replace=False))
    errors = sum(zmeasure_mismatch(z[j]) for j in picked)
    return errors / k, tuple(z[j].slot for j in picked)


def extract_share(records: Sequence[ParticleRecord], checked: Iterable[int], n: int, d: int,
                  rng: np.random.Generator) -> tuple[tuple[int, ...], KeyShare]:
    """Pick ``n`` unchecked ``Z_MEASURE`` slots; Alice's values there form the share."""
    checked = set(checked)
    rest = [r for r in records if r.case is Case.Z_MEASURE and r.slot not in checked]
    if len(rest) < n:
        raise InsufficientZMeasureError(f"{len(rest)} unchecked Z_MEASURE slots, need {n}")
    if len(rest) > n:
        idx = np.sort(rng.choice(len(rest), size=n, replace=False))
        rest = [rest[j] for j in idx]
    return tuple(r.slot for r in rest), KeyShare(tuple(r.alice_return_value for r in rest), d)


def extract_shares(transcript: SessionTranscript) -> dict[int, KeyShare]:
    """The shares published in a completed session (empty when it aborted)."""
    return dict(transcript.key_shares)


def combine_key(shares: Sequence[Sequence[int] | KeyShare], d: int) -> tuple[int, ...]:
    """Position-wise sum of the shares modulo ``d``."""
    rows = [s.dits if isinstance(s, KeyShare) else tuple(int(x) for x in s) for s in shares]
    if not rows:
        raise ValueError("need at least one share")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("all shares must have the same length")
    return tuple(int(x) for x in np.sum(np.array(rows, dtype=np.int64), axis=0) % d)


def receiver_view(transcript: SessionTranscript, i: int) -> tuple[int, ...]:
    """What receiver ``i`` believes its share is: its own MEASURE results at the announced key slots."""
    by_slot = {r.slot: r for r in transcript.records_for(i)}
    return tuple(by_slot[j].action.measured_value for j in transcript.key_positions[i])


# ---------------------------------------------------------------------------
# full session


class _Log:
    def __init__(self):
        self.events: list[Event] = []

    def __call__(self, actor, kind, receiver, slot=None, payload=None):
        self.events.append(Event(len(self.events), actor, kind, receiver, slot, payload))


def _alice_measures(received: QuditState, basis: Basis, rng) -> int:
    return measure(received, basis, rng)[0]


def run_session(config: SessionConfig, tree: SeedTree | None = None) -> SessionTranscript:
    """Run Steps 1 to 5 for every receiver.

    ``tree`` roots the random streams; by default it is ``SeedTree(config.seed)``.
    Receiver ``i`` draws from ``tree.generator(i, purpose)`` for each purpose
    in :mod:`msqss.rng`, and the tap on its legs from ``tree.generator(i, EVE)``
    whoever mounts it.
    """
    tree = SeedTree(config.seed) if tree is None else tree
    d, N, n = config.d, config.N, config.n
    log = _Log()
    receivers = range(1, N + 1)

    prep = {i: alice_prepare_sequence(config, i, tree.generator(i, streams.ALICE_PREPARE)) for i in receivers}
    recv_rng = {i: tree.generator(i, streams.RECEIVER) for i in receivers}
    meas_rng = {i: tree.generator(i, streams.ALICE_MEASURE) for i in receivers}
    eve_rng = {i: tree.generator(i, streams.EVE) for i in receivers if config.tapped(i)}
    memory = {i: EveMemory() for i in eve_rng}
    eve = "eve" if not config.dishonest else "+".join(f"P{k}" for k in config.dishonest)
    partial_taps = config.tap_probability < 1.0

    records: dict[int, list[ParticleRecord]] = {i: [] for i in receivers}
    # tree-type transmission: one particle in flight per leg; legs advance in lockstep
    for j in range(1, config.slots + 1):
        for i in receivers:
            basis, value = prep[i][j - 1]
            particle = prepare(d, basis, value)
            log("alice", "send", i, j)
            tap = i in eve_rng and (not partial_taps or eve_rng[i].random() < config.tap_probability)
            if tap:
                particle = forward_tap(config.attack, j, particle, memory[i], eve_rng[i])
                log(eve, "tap-forward", i, j)
            log(f"P{i}", "receive", i, j)
            action, outgoing = receiver_turn(particle, recv_rng[i])
            if action.tag is Action.MEASURE:
                log(f"P{i}", "measure", i, j, {"value": action.measured_value})
            else:
                log(f"P{i}", "reflect", i, j)
            log(f"P{i}", "return", i, j)
            if tap:
                outgoing = backward_tap(config.attack, j, outgoing, memory[i], eve_rng[i])
                log(eve, "tap-backward", i, j)
            elif isinstance(outgoing, JointState):  # pragma: no cover - taps always come in pairs
                raise RuntimeError("untapped leg carried a joint state")
            log("alice", "receive-back", i, j)

            case = case_of(basis, action.tag)
            if case is Case.REFLECTED:
                ret_basis = basis
            elif case is Case.Z_MEASURE:
                ret_basis = Basis.Z
            else:
                ret_basis = None
            ret_value = None if ret_basis is None else _alice_measures(outgoing, ret_basis, meas_rng[i])
            records[i].append(ParticleRecord(i, j, basis, value, action, ret_basis, ret_value, case, tap))

    # Step 3
    reflect_rate = {}
    for i in receivers:
        log(f"P{i}", "announce-measure-slots", i, None,
            {"slots": [r.slot for r in records[i] if r.action.tag is Action.MEASURE]})
        reflect_rate[i] = reflect_check(records[i])
        log("alice", "reflect-check", i, None, {"error_rate": reflect_rate[i]})

    # Step 4
    z_rate: dict[int, float | None] = {}
    z_count: dict[int, int] = {}
    checked: dict[int, tuple[int, ...]] = {}
    short = []
    for i in receivers:
        z_count[i] = sum(r.case is Case.Z_MEASURE for r in records[i])
        try:
            z_rate[i], checked[i] = zmeasure_check(records[i], n, tree.generator(i, streams.CHECK),
                                                   config.check_policy)
        except InsufficientZMeasureError:
            z_rate[i], checked[i] = None, ()
            short.append(i)
            log("alice", "insufficient-zmeasure", i, None, {"count": z_count[i]})
            continue
        log("alice", "select-check-slots", i, None, {"slots": list(checked[i])})
        by_slot = {r.slot: r for r in records[i]}
        log(f"P{i}", "publish-values", i, None,
            {"values": [by_slot[s].action.measured_value for s in checked[i]]})
        log("alice", "zmeasure-check", i, None, {"error_rate": z_rate[i]})

    reason = None
    if any(r > config.threshold for r in reflect_rate.values()):
        reason = REFLECT_CHECK
    elif any(r is not None and r > config.threshold for r in z_rate.values()):
        reason = ZMEASURE_CHECK
    elif short:
        reason = INSUFFICIENT_ZMEASURE

    # Step 5
    key_pos: dict[int, tuple[int, ...]] = {}
    shares: dict[int, KeyShare] = {}
    combined = None
    if reason is None:
        try:
            for i in receivers:
                key_pos[i], shares[i] = extract_share(records[i], checked[i], n, d,
                                                      tree.generator(i, streams.KEY))
                log("alice", "announce-key-slots", i, None, {"slots": list(key_pos[i])})
        except InsufficientZMeasureError:
            reason, key_pos, shares = INSUFFICIENT_ZMEASURE, {}, {}
    if reason is None:
        combined = combine_key([shares[i] for i in receivers], d)
        log("alice", "key-established", 0, None, {"length": n})
    else:
        log("alice", "abort", 0, None, {"reason": reason})

    return SessionTranscript(
        config=config,
        events=tuple(log.events),
        records=tuple(r for i in receivers for r in records[i]),
        reflect_error_rate=reflect_rate,
        zmeasure_error_rate=z_rate,
        zmeasure_counts=z_count,
        check_positions=checked,
        key_positions=key_pos,
        key_shares=shares,
        combined_key=combined,
        aborted=reason is not None,
        abort_reason=reason,
    )
