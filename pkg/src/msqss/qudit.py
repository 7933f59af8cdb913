"""Pure-state linear algebra for single qudits and qudit-probe pairs.

Conventions
-----------
* The Z basis is the computational basis ``|0>, ..., |d-1>``.
* The X basis is its discrete Fourier image, ``|T_t> = F|t>`` with
  ``F[k, j] = exp(2*pi*i*j*k/d) / sqrt(d)``.
* A :class:`JointState` on a particle of dimension ``d`` and a probe of
  dimension ``p`` stores ``d*p`` amplitudes in row-major order: the amplitude
  of ``|k>|e>`` lives at flat index ``k*p + e``.  Operators acting on the pair
  (``U_E``, ``U_F``) must use the same ordering, which is the ordering produced
  by ``np.kron(particle_op, probe_op)``.

All numbers are double-precision complex.  States are immutable; the arrays
they hold are marked read-only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

NORM_TOL = 1e-10
MATRIX_TOL = 1e-12


class QuditError(ValueError):
    pass


class InvalidDimensionError(QuditError):
    pass


class InvalidValueError(QuditError):
    pass


class DimensionMismatchError(QuditError):
    pass


class NotUnitaryError(QuditError):
    """Raised when a matrix fails the unitarity check.

    ``column_pair`` holds the ``(a, b)`` column indices where ``U^dag U``
    deviates most from the identity.
    """

    def __init__(self, message: str, column_pair: tuple[int, int], deviation: float):
        super().__init__(message)
        self.column_pair = column_pair
        self.deviation = deviation


class Basis(str, enum.Enum):
    Z = "Z"
    X = "X"

    def __str__(self) -> str:
        return self.value


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuditState:
    """Unit vector of ``d`` complex amplitudes."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if a.size < 2:
            raise InvalidDimensionError(f"qudit dimension must be >= 2, got {a.size}")
        norm = float(np.vdot(a, a).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise QuditError(f"state is not normalised (|psi|^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @classmethod
    def _trusted(cls, a: np.ndarray) -> QuditState:
        # skip validation for vectors built internally from validated inputs
        obj = object.__new__(cls)
        object.__setattr__(obj, "amplitudes", _frozen(a))
        return obj

    @property
    def d(self) -> int:
        return self.amplitudes.shape[0]

    def __repr__(self) -> str:
        return f"QuditState(d={self.d}, amplitudes={np.round(self.amplitudes, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class JointState:
    """Unit vector on particle (dimension ``d``) times probe (dimension ``p``)."""

    amplitudes: np.ndarray
    d: int
    p: int

    def __post_init__(self):
        if self.d < 2:
            raise InvalidDimensionError(f"particle dimension must be >= 2, got {self.d}")
        if self.p < 1:
            raise InvalidDimensionError(f"probe dimension must be >= 1, got {self.p}")
        a = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if a.size != self.d * self.p:
            raise DimensionMismatchError(
                f"expected {self.d * self.p} amplitudes for d={self.d}, p={self.p}, got {a.size}"
            )
        norm = float(np.vdot(a, a).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise QuditError(f"joint state is not normalised (|psi|^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @classmethod
    def _trusted(cls, a: np.ndarray, d: int, p: int) -> JointState:
        obj = object.__new__(cls)
        object.__setattr__(obj, "amplitudes", _frozen(a))
        object.__setattr__(obj, "d", d)
        object.__setattr__(obj, "p", p)
        return obj

    @property
    def matrix(self) -> np.ndarray:
        """Amplitudes as a ``(d, p)`` array: row = particle index, column = probe index."""
        return self.amplitudes.reshape(self.d, self.p)

    def __repr__(self) -> str:
        return f"JointState(d={self.d}, p={self.p})"


# ---------------------------------------------------------------------------
# bases and preparation


@lru_cache(maxsize=None)
def _fourier(d: int) -> np.ndarray:
    k = np.arange(d)
    # reduce j*k mod d before exponentiating to keep phases exact for large d
    return _frozen(np.exp(2j * np.pi * (np.outer(k, k) % d) / d) / np.sqrt(d))


def fourier_matrix(d: int) -> np.ndarray:
    """Discrete Fourier transform on a ``d``-level system.

    Entry ``(k, j)`` is ``exp(2*pi*i*j*k/d) / sqrt(d)``, so column ``j`` is the
    X-basis state ``|T_j>``.  The returned array is shared and read-only.
    """
    if int(d) != d or d < 2:
        raise InvalidDimensionError(f"dimension must be an integer >= 2, got {d!r}")
    return _fourier(int(d))


def _check_value(d: int, value: int) -> int:
    if int(value) != value or not 0 <= value < d:
        raise InvalidValueError(f"value must be in [0, {d - 1}], got {value!r}")
    return int(value)


def _as_basis(basis) -> Basis:
    return basis if basis.__class__ is Basis else Basis(basis)


def prepare(d: int, basis: Basis | str, value: int) -> QuditState:
    """Basis state ``|value>`` (Z) or ``F|value>`` (X).

    States are immutable, so repeated calls return one shared instance.
    """
    return _prepare(d, _as_basis(basis), value)


@lru_cache(maxsize=4096)
def _prepare(d: int, basis: Basis, value: int) -> QuditState:
    F = fourier_matrix(d)
    value = _check_value(d, value)
    if basis is Basis.Z:
        a = np.zeros(d, dtype=complex)
        a[value] = 1.0
    else:
        a = F[:, value].copy()
    return QuditState._trusted(a)


def basis_vectors(d: int, basis: Basis | str) -> np.ndarray:
    """Matrix whose columns are the states of ``basis``."""
    return np.eye(d, dtype=complex) if _as_basis(basis) is Basis.Z else fourier_matrix(d)


def _coefficients(amplitudes: np.ndarray, basis: Basis) -> np.ndarray:
    # <b_t|psi> along axis 0; works on vectors and on (d, p) blocks
    if basis is Basis.Z:
        return amplitudes
    return fourier_matrix(amplitudes.shape[0]).conj().T @ amplitudes


# ---------------------------------------------------------------------------
# measurement


def _distribution(state: QuditState, basis: Basis) -> tuple[float, ...]:
    # memoised on the (immutable) state; prepared basis states are shared
    cache = state.__dict__.setdefault("_probs", {})
    probs = cache.get(basis)
    if probs is None:
        c = _coefficients(state.amplitudes, basis)
        w = c.real**2 + c.imag**2
        probs = cache[basis] = tuple((w / w.sum()).tolist())
    return probs


def outcome_distribution(state: QuditState, basis: Basis | str) -> np.ndarray:
    """Born-rule probabilities of each outcome when measuring in ``basis``."""
    return np.array(_distribution(state, _as_basis(basis)))


def sample_index(probs, rng: np.random.Generator) -> int:
    """Draw an index from an (approximately) normalised probability vector."""
    probs = probs.tolist() if isinstance(probs, np.ndarray) else probs
    u = rng.random() * sum(probs)
    acc = 0.0
    last = 0
    for idx, q in enumerate(probs):
        if q > 0.0:
            acc += q
            last = idx
            if u < acc:
                return idx
    # u landed on the rounding gap at the top of the cdf
    return last


def measure(state: QuditState, basis: Basis | str, rng: np.random.Generator) -> tuple[int, QuditState]:
    basis = _as_basis(basis)
    outcome = sample_index(_distribution(state, basis), rng)
    return outcome, prepare(state.d, basis, outcome)


# ---------------------------------------------------------------------------
# joint particle/probe systems


def tensor(particle: QuditState, probe: QuditState | np.ndarray) -> JointState:
    """Product state ``|particle>|probe>``.

    ``probe`` may be a one-dimensional probe, which :class:`QuditState` cannot
    hold, so a raw unit vector is also accepted.
    """
    e = probe.amplitudes if isinstance(probe, QuditState) else _unit_vector(probe)
    a = np.kron(particle.amplitudes, e)
    return JointState._trusted(a, particle.d, e.shape[0])


def _unit_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size < 1:
        raise InvalidDimensionError("probe dimension must be >= 1")
    norm = float(np.vdot(v, v).real)
    if abs(norm - 1.0) > NORM_TOL:
        raise QuditError(f"probe state is not normalised (|e|^2 = {norm!r})")
    return v


def unitarity_defect(U: np.ndarray) -> tuple[float, tuple[int, int]]:
    """Largest entry of ``|U^dag U - I|`` and the column pair where it occurs."""
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {U.shape}")
    dev = np.abs(U.conj().T @ U - np.eye(U.shape[0]))
    a, b = np.unravel_index(int(np.argmax(dev)), dev.shape)
    return float(dev[a, b]), (int(a), int(b))


def check_unitary(U: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    """Return ``U`` as a read-only complex array, raising :class:`NotUnitaryError` otherwise."""
    U = np.array(U, dtype=complex)
    dev, pair = unitarity_defect(U)
    if dev > tol:
        raise NotUnitaryError(
            f"matrix is not unitary: |(U^dag U - I)[{pair[0]}, {pair[1]}]| = {dev:.3e}", pair, dev
        )
    return _frozen(U)


def apply_unitary(state: JointState, U: np.ndarray) -> JointState:
    D = state.d * state.p
    if U.shape != (D, D):
        raise DimensionMismatchError(f"operator shape {U.shape} does not match joint dimension {D}")
    return JointState._trusted(U @ state.amplitudes, state.d, state.p)


def particle_marginal(state: JointState, basis: Basis | str = Basis.Z) -> np.ndarray:
    """Outcome probabilities for measuring only the particle of ``state``."""
    c = _coefficients(state.matrix, _as_basis(basis))
    probs = np.sum(c.real**2 + c.imag**2, axis=1)
    return probs / probs.sum()


def probe_given_particle(state: JointState, outcome: int, basis: Basis | str = Basis.Z) -> np.ndarray:
    """Normalised probe vector left after the particle is found in basis state ``outcome``."""
    v = _coefficients(state.matrix, _as_basis(basis))[outcome]
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise InvalidValueError(f"particle outcome {outcome} has zero probability")
    return v / norm


def partial_measure_particle_z(state: JointState, rng: np.random.Generator) -> tuple[int, JointState]:
    """Measure the particle in Z, leaving ``|g>|probe_g>`` renormalised."""
    g = sample_index(particle_marginal(state, Basis.Z), rng)
    a = np.zeros((state.d, state.p), dtype=complex)
    a[g] = probe_given_particle(state, g, Basis.Z)
    return g, JointState._trusted(a.reshape(-1), state.d, state.p)


def measure_probe(state: JointState, rng: np.random.Generator) -> tuple[int, QuditState]:
    """Measure the probe in its computational basis and return the particle left behind.

    The particle statistics seen by anyone holding only the particle are
    unchanged by this (no-signalling), which is what lets a tap hand a pure
    particle state onward after entangling with it.
    """
    m = state.matrix
    weights = np.sum(m.real**2 + m.imag**2, axis=0)
    e = sample_index(weights / weights.sum(), rng)
    col = m[:, e]
    return e, QuditState._trusted(col / np.linalg.norm(col))


def fidelity(a, b) -> float:
    """Phase-insensitive overlap ``|<a|b>|`` of two unit vectors."""
    a = a.amplitudes if isinstance(a, (QuditState, JointState)) else np.asarray(a)
    b = b.amplitudes if isinstance(b, (QuditState, JointState)) else np.asarray(b)
    return float(abs(np.vdot(a, b)))
