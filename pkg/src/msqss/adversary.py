"""Eavesdropper models and the channel taps that realise them.

A tap sits on one receiver's two-way leg.  :func:`forward_tap` sees each
particle Alice sends before the receiver does; :func:`backward_tap` sees what
the receiver sends back before Alice does.  Per-slot state that must survive
between the two calls lives in :class:`EveMemory`.

Four models are supported:

``NoAttack``
    Both taps are the identity.
``InterceptResend``
    Keep the genuine particle, give the receiver a random Z-basis fake, and
    return the genuine particle to Alice.
``MeasureResend``
    Measure Alice's particle in Z and forward the collapsed state.
``EntangleMeasure``
    Couple a probe of dimension ``p`` with ``U_E`` on the way out and ``U_F``
    on the way back.  The pair is carried through the receiver's turn as a
    :class:`~msqss.qudit.JointState`.

Operators on the particle/probe pair use the row-major layout documented in
:mod:`msqss.qudit` (particle index major).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.linalg import expm
from scipy.stats import unitary_group

from msqss.qudit import (
    NORM_TOL,
    Basis,
    JointState,
    QuditState,
    apply_unitary,
    check_unitary,
    measure,
    measure_probe,
    particle_marginal,
    prepare,
    probe_given_particle,
    tensor,
)


class ProtocolMisuseError(RuntimeError):
    """A tap was driven out of order (e.g. backward before forward on a slot)."""


@dataclass(frozen=True)
class NoAttack:
    kind = "none"


@dataclass(frozen=True)
class InterceptResend:
    kind = "intercept-resend"


@dataclass(frozen=True)
class MeasureResend:
    kind = "measure-resend"


@dataclass(frozen=True, eq=False)
class EntangleMeasure:
    """General two-unitary attack with a shared probe.

    Parameters
    ----------
    forward : (d*p, d*p) complex array
        ``U_E``, applied to particle and probe on the Alice -> receiver leg.
    backward : (d*p, d*p) complex array
        ``U_F``, applied on the receiver -> Alice leg.
    probe : (p,) complex array
        Initial probe state ``|epsilon>``.
    d : int
        Particle dimension.
    """

    forward: np.ndarray
    backward: np.ndarray
    probe: np.ndarray
    d: int

    kind = "entangle-measure"

    def __post_init__(self):
        probe = np.array(self.probe, dtype=complex).reshape(-1)
        if abs(np.vdot(probe, probe).real - 1.0) > NORM_TOL:
            raise ValueError("probe state must have unit norm")
        probe.setflags(write=False)
        D = self.d * probe.size
        fwd = check_unitary(self.forward)
        bwd = check_unitary(self.backward)
        if fwd.shape != (D, D) or bwd.shape != (D, D):
            raise ValueError(
                f"U_E and U_F must be {D}x{D} for d={self.d}, p={probe.size}; "
                f"got {fwd.shape} and {bwd.shape}"
            )
        object.__setattr__(self, "probe", probe)
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "backward", bwd)

    @property
    def p(self) -> int:
        return self.probe.size


AttackModel = Union[NoAttack, InterceptResend, MeasureResend, EntangleMeasure]

ATTACK_KINDS = {
    NoAttack.kind: NoAttack,
    InterceptResend.kind: InterceptResend,
    MeasureResend.kind: MeasureResend,
    EntangleMeasure.kind: EntangleMeasure,
}


@dataclass
class EveMemory:
    """Per-slot stash kept by the eavesdropper for one receiver's leg.

    ``stash`` holds the genuine particle (intercept-resend), the measured
    value (measure-resend) or ``None`` as an in-flight marker
    (entangle-measure).  For entangle-measure the joint state after ``U_F``
    and Eve's probe reading are kept in ``final_joint`` and ``probe_outcome``.
    """

    stash: dict = field(default_factory=dict)
    final_joint: dict = field(default_factory=dict)
    probe_outcome: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# taps


def forward_tap(model: AttackModel, slot: int, incoming: QuditState, memory: EveMemory,
                rng: np.random.Generator) -> QuditState | JointState:
    """What the receiver gets in place of ``incoming``."""
    if isinstance(model, NoAttack):
        return incoming
    if isinstance(model, InterceptResend):
        memory.stash[slot] = incoming
        return prepare(incoming.d, Basis.Z, int(rng.integers(incoming.d)))
    if isinstance(model, MeasureResend):
        value, collapsed = measure(incoming, Basis.Z, rng)
        memory.stash[slot] = value
        return collapsed
    if isinstance(model, EntangleMeasure):
        memory.stash[slot] = None
        return apply_unitary(tensor(incoming, model.probe), model.forward)
    raise TypeError(f"unknown attack model {model!r}")


def backward_tap(model: AttackModel, slot: int, outgoing: QuditState | JointState, memory: EveMemory,
                 rng: np.random.Generator) -> QuditState:
    """What Alice gets in place of the receiver's ``outgoing`` particle."""
    if isinstance(model, NoAttack):
        return outgoing
    if slot not in memory.stash:
        raise ProtocolMisuseError(f"backward tap on slot {slot} without a forward tap")
    stashed = memory.stash.pop(slot)
    if isinstance(model, InterceptResend):
        return stashed
    if isinstance(model, MeasureResend):
        return outgoing
    if isinstance(model, EntangleMeasure):
        if not isinstance(outgoing, JointState):
            raise ProtocolMisuseError("entangle-measure backward tap needs the joint particle/probe state")
        joint = apply_unitary(outgoing, model.backward)
        memory.final_joint[slot] = joint
        outcome, particle = measure_probe(joint, rng)
        memory.probe_outcome[slot] = outcome
        return particle
    raise TypeError(f"unknown attack model {model!r}")


# ---------------------------------------------------------------------------
# constructing attacks


def _random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 1:
        return np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    return unitary_group.rvs(n, random_state=rng)


def _block_diagonal(blocks) -> np.ndarray:
    """``sum_t |t><t| (x) blocks[t]`` in the particle-major layout."""
    d = len(blocks)
    p = blocks[0].shape[0]
    U = np.zeros((d * p, d * p), dtype=complex)
    for t, B in enumerate(blocks):
        U[t * p:(t + 1) * p, t * p:(t + 1) * p] = B
    return U


def diagonal_attack(probe_unitaries, common, probe) -> EntangleMeasure:
    """Attack with ``U_E = sum_t |t><t| (x) V_t`` and ``U_F = sum_t |t><t| (x) W V_t^dag``.

    Every branch of the protocol leaves the probe in ``W|epsilon>``.
    """
    vs = [np.asarray(v, dtype=complex) for v in probe_unitaries]
    w = np.asarray(common, dtype=complex)
    return EntangleMeasure(
        forward=_block_diagonal(vs),
        backward=_block_diagonal([w @ v.conj().T for v in vs]),
        probe=probe,
        d=len(vs),
    )


def build_undetectable_attack(d: int, p: int | None = None, rng: np.random.Generator | None = None,
                              probe=None) -> EntangleMeasure:
    """Random member of the family that introduces no error in either check.

    ``U_E`` never moves the particle (only the probe rotates, by a random
    ``V_t`` that depends on the particle value), and ``U_F`` undoes each
    ``V_t`` before applying one shared random rotation ``W``.  ``p`` defaults
    to ``d``.
    """
    if p is None:
        p = d
    if p < 1:
        raise ValueError("probe dimension must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    if probe is None:
        probe = _random_unitary(p, rng)[:, 0]
    vs = [_random_unitary(p, rng) for _ in range(d)]
    return diagonal_attack(vs, _random_unitary(p, rng), probe)


def random_entangle_measure(d: int, p: int, rng: np.random.Generator) -> EntangleMeasure:
    """Haar-random ``U_E`` and ``U_F`` with a random initial probe."""
    return EntangleMeasure(
        forward=_random_unitary(d * p, rng),
        backward=_random_unitary(d * p, rng),
        probe=_random_unitary(p, rng)[:, 0],
        d=d,
    )


def perturb_attack(model: EntangleMeasure, strength: float, rng: np.random.Generator) -> EntangleMeasure:
    """Compose ``U_F`` with ``exp(i * strength * H)`` for a random Hermitian ``H`` of unit spectral norm."""
    D = model.d * model.p
    A = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    H = (A + A.conj().T) / 2
    H /= np.linalg.norm(H, 2)
    return EntangleMeasure(model.forward, expm(1j * strength * H) @ model.backward, model.probe, model.d)


def identity_attack(d: int, p: int = 1) -> EntangleMeasure:
    probe = np.zeros(p, dtype=complex)
    probe[0] = 1.0
    I = np.eye(d * p, dtype=complex)
    return EntangleMeasure(I, I, probe, d)


def _permutation(D: int, mapping) -> np.ndarray:
    U = np.zeros((D, D), dtype=complex)
    for src in range(D):
        U[mapping(src), src] = 1.0
    return U


def as_entangle_measure(model: AttackModel, d: int) -> EntangleMeasure:
    """Unitary dilation of any attack model.

    Measure-resend copies the particle value into a ``d``-level probe
    (``|k>|0> -> |k>|k>``) and leaves ``U_F`` as the identity.

    Intercept-resend uses a ``d*d``-level probe ``(store, ref)`` prepared as
    ``|0>_store (x) sum_v |v>_ref / sqrt(d)``.  ``U_E`` swaps the genuine
    particle into ``store`` and sets the travelling particle to ``|v>``
    correlated with ``ref`` (a uniformly random Z-basis fake); ``U_F`` swaps
    the genuine particle back.

    The receiver's and Alice's statistics under the dilation equal those of
    the original model.
    """
    if isinstance(model, EntangleMeasure):
        return model
    if isinstance(model, NoAttack):
        return identity_attack(d)
    if isinstance(model, MeasureResend):
        def copy(idx):
            k, e = divmod(idx, d)
            return k * d + (e + k) % d

        probe = np.zeros(d, dtype=complex)
        probe[0] = 1.0
        return EntangleMeasure(_permutation(d * d, copy), np.eye(d * d, dtype=complex), probe, d)
    if isinstance(model, InterceptResend):
        D = d * d * d

        def split(idx):
            k, rest = divmod(idx, d * d)
            s, r = divmod(rest, d)
            return k, s, r

        def fwd(idx):
            k, s, r = split(idx)
            return ((s + r) % d) * d * d + k * d + r

        def bwd(idx):
            a, b, c = split(idx)
            return b * d * d + a * d + c

        probe = np.zeros(d * d, dtype=complex)
        probe[:d] = 1.0 / np.sqrt(d)  # store = 0, ref uniform
        return EntangleMeasure(_permutation(D, fwd), _permutation(D, bwd), probe, d)
    raise TypeError(f"unknown attack model {model!r}")


# ---------------------------------------------------------------------------
# undetectability constraints and final probe states


@dataclass(frozen=True)
class ConstraintReport:
    """Residuals of the no-error conditions for an entangle-measure attack.

    eq7_violation
        ``max |beta_tg|`` over ``t != g``: how far ``U_E`` moves a Z-basis
        particle off its value.
    leak_violation
        How far ``U_F`` moves ``|t>|epsilon_tt>`` off particle value ``t``.
    eq21_violation
        Largest distance between ``beta_tt |F_tt>`` and their mean: the
        post-``U_F`` probe components must all coincide.
    """

    eq7_violation: float
    eq21_violation: float
    leak_violation: float
    undetectable: bool
    tol: float
    beta: np.ndarray = field(repr=False)


def _forward_branches(model: EntangleMeasure) -> np.ndarray:
    # psi[t] = U_E(|t>|eps>) as a (d, p) block
    d, p = model.d, model.p
    out = np.empty((d, d, p), dtype=complex)
    for t in range(d):
        out[t] = apply_unitary(tensor(prepare(d, Basis.Z, t), model.probe), model.forward).matrix
    return out


def check_constraints(model: EntangleMeasure, tol: float = 1e-10) -> ConstraintReport:
    d, p = model.d, model.p
    psi = _forward_branches(model)
    beta = np.linalg.norm(psi, axis=2)
    off = beta[~np.eye(d, dtype=bool)]
    eq7 = float(off.max()) if off.size else 0.0

    shared = np.empty((d, p), dtype=complex)
    leak = 0.0
    for t in range(d):
        # U_F applied to beta_tt |t>|eps_tt>, i.e. only the diagonal branch
        v = np.zeros((d, p), dtype=complex)
        v[t] = psi[t, t]
        chi = (model.backward @ v.reshape(-1)).reshape(d, p)
        shared[t] = chi[t]
        rest = np.delete(chi, t, axis=0)
        leak = max(leak, float(np.linalg.norm(rest)))
    mean = shared.mean(axis=0)
    eq21 = float(np.max(np.linalg.norm(shared - mean, axis=1)))
    ok = eq7 < tol and eq21 < tol and leak < tol
    return ConstraintReport(eq7, eq21, leak, ok, tol, beta)


@dataclass(frozen=True)
class ProbeScenario:
    """One branch of a slot: Alice's preparation, the receiver's move and the outcomes.

    ``receiver_outcome`` is ``None`` for REFLECT.  ``alice_outcome`` is
    Alice's measurement of the returned particle (in the preparation basis
    for REFLECT, in Z for MEASURE).  ``probe`` is Eve's normalised probe state
    conditioned on all of the above and ``probability`` is the branch weight
    given the preparation and the move.
    """

    basis: Basis
    value: int
    action: str
    receiver_outcome: int | None
    alice_outcome: int
    probability: float
    probe: np.ndarray = field(repr=False)


def final_probe_states(model: EntangleMeasure, min_probability: float = 1e-14) -> list[ProbeScenario]:
    """Exact conditional probe states for every reachable branch of a slot.

    For X-prepared MEASURE slots (which Alice discards) the returned particle
    is taken as measured in Z so that the probe state is pure.
    """
    d, p = model.d, model.p
    out = []
    for basis, t in itertools.product((Basis.Z, Basis.X), range(d)):
        sent = apply_unitary(tensor(prepare(d, basis, t), model.probe), model.forward)

        back = apply_unitary(sent, model.backward)
        probs = particle_marginal(back, basis)
        for a in range(d):
            if probs[a] > min_probability:
                out.append(ProbeScenario(basis, t, "REFLECT", None, a, float(probs[a]),
                                         probe_given_particle(back, a, basis)))

        g_probs = particle_marginal(sent, Basis.Z)
        for g in range(d):
            if g_probs[g] <= min_probability:
                continue
            fresh = tensor(prepare(d, Basis.Z, g), probe_given_particle(sent, g, Basis.Z))
            back = apply_unitary(fresh, model.backward)
            a_probs = particle_marginal(back, Basis.Z)
            for a in range(d):
                w = g_probs[g] * a_probs[a]
                if w > min_probability:
                    out.append(ProbeScenario(basis, t, "MEASURE", g, a, float(w),
                                             probe_given_particle(back, a, Basis.Z)))
    return out


def min_pairwise_fidelity(scenarios: list[ProbeScenario]) -> float:
    """Smallest ``|<a|b>|`` over all pairs of conditional probe states."""
    P = np.array([s.probe for s in scenarios])
    return float(np.abs(P.conj() @ P.T).min())


__all__ = [
    "ATTACK_KINDS",
    "AttackModel",
    "ConstraintReport",
    "EntangleMeasure",
    "EveMemory",
    "InterceptResend",
    "MeasureResend",
    "NoAttack",
    "ProbeScenario",
    "ProtocolMisuseError",
    "as_entangle_measure",
    "backward_tap",
    "build_undetectable_attack",
    "check_constraints",
    "diagonal_attack",
    "final_probe_states",
    "forward_tap",
    "identity_attack",
    "min_pairwise_fidelity",
    "perturb_attack",
    "random_entangle_measure",
]
