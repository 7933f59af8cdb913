"""Text formats: experiment configs, attack matrix files and transcript logs.

Experiment config
-----------------
One ``key = value`` pair per line; ``#`` starts a comment; blank lines are
ignored.  Keys (defaults in brackets)::

    d               particle dimension                       (required)
    N               number of receivers                      (required)
    n               key length in dits                       (required)
    seed            master seed, unsigned 64-bit             [0]
    count_mode      stochastic | balanced                    [stochastic]
    check_policy    half | exact-n                           [half]
    attack          none | intercept-resend | measure-resend | entangle-measure  [none]
    attack_file     matrix file (entangle-measure only)      []
    attack_target   receiver index, or "all"                 [all]
    dishonest       comma-separated receiver indices         []
    tap_probability fraction of slots tapped                 [1.0]
    trials          number of sessions                       [100]
    min_slots       keep running until each attacked scenario
                    has this many qualifying slots (0 = off) [0]
    workers         worker processes                         [1]
    out             report path ("-" = stdout)               [-]
    format          table | records                          [records]

Attack matrix file
------------------
Whitespace separated; ``#`` comments allowed.  With ``D = d*p``::

    d p
    row col re im        # D*D lines: U_E
    row col re im        # D*D lines: U_F
    index re im          # p lines:   initial probe state

Rows and columns index the particle-major joint basis (``k*p + e``).  Every
entry must appear exactly once.

Transcript log
--------------
One JSON object per line, ``{"seq", "actor", "kind", "receiver", "slot",
"payload"}``, followed by a final ``{"summary": {...}}`` line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from msqss.adversary import (
    ATTACK_KINDS,
    AttackModel,
    EntangleMeasure,
)
from msqss.protocol import CHECK_POLICIES, COUNT_MODES, SessionConfig, SessionTranscript
from msqss.qudit import NORM_TOL, NotUnitaryError, check_unitary


class ConfigError(ValueError):
    pass


class AttackFileError(ValueError):
    """Malformed or non-unitary attack matrix file.

    ``location`` pinpoints the problem: ``(line,)`` for parse errors,
    ``(matrix_name, column_a, column_b)`` for unitarity failures.
    """

    def __init__(self, message: str, location: tuple = ()):
        super().__init__(message)
        self.location = location


# ---------------------------------------------------------------------------
# experiment config


@dataclass(frozen=True)
class ExperimentSpec:
    d: int
    N: int
    n: int
    seed: int = 0
    count_mode: str = "stochastic"
    check_policy: str = "half"
    attack: str = "none"
    attack_file: str = ""
    attack_target: int | None = None
    dishonest: tuple[int, ...] = ()
    tap_probability: float = 1.0
    trials: int = 100
    min_slots: int = 0
    workers: int = 1
    out: str = "-"
    format: str = "records"

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.min_slots < 0:
            raise ConfigError("min_slots must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.format not in ("table", "records"):
            raise ConfigError(f"format must be 'table' or 'records', got {self.format!r}")
        if self.attack not in ATTACK_KINDS:
            raise ConfigError(f"attack must be one of {sorted(ATTACK_KINDS)}, got {self.attack!r}")
        if self.attack == EntangleMeasure.kind and not self.attack_file:
            raise ConfigError("attack = entangle-measure needs attack_file")
        if self.count_mode not in COUNT_MODES:
            raise ConfigError(f"count_mode must be one of {COUNT_MODES}")
        if self.check_policy not in CHECK_POLICIES:
            raise ConfigError(f"check_policy must be one of {CHECK_POLICIES}")

    def with_overrides(self, **kw) -> ExperimentSpec:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentSpec(**values)

    def to_config_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "attack_target":
                v = "all" if v is None else v
            elif f.name == "dishonest":
                v = ",".join(str(i) for i in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def as_record(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    def session_config(self, base: Path | None = None) -> SessionConfig:
        try:
            return SessionConfig(
                d=self.d, N=self.N, n=self.n, seed=self.seed, count_mode=self.count_mode,
                attack=load_attack(self.attack, self.attack_file, self.d, base),
                attack_target=self.attack_target, dishonest=self.dishonest,
                check_policy=self.check_policy, tap_probability=self.tap_probability,
            )
        except AttackFileError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_INT_KEYS = {"d", "N", "n", "seed", "trials", "min_slots", "workers"}


def parse_config_text(text: str) -> ExperimentSpec:
    values: dict = {}
    names = {f.name for f in fields(ExperimentSpec)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in names:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(value, 0)
            elif key == "tap_probability":
                values[key] = float(value)
            elif key == "attack_target":
                values[key] = None if value in ("", "all", "none") else int(value)
            elif key == "dishonest":
                values[key] = tuple(int(v) for v in value.split(",") if v.strip())
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    missing = {"d", "N", "n"} - set(values)
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(sorted(missing))}")
    return ExperimentSpec(**values)


def read_config(path: str | Path) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


# ---------------------------------------------------------------------------
# attack matrix files


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if line:
            yield lineno, line


def parse_attack_text(text: str, tol: float = NORM_TOL) -> EntangleMeasure:
    lines = list(_tokens(text))
    if not lines:
        raise AttackFileError("empty attack file")
    lineno, head = lines[0]
    try:
        d, p = (int(x) for x in head)
    except ValueError:
        raise AttackFileError(f"line {lineno}: header must be 'd p'", (lineno,)) from None
    if d < 2 or p < 1:
        raise AttackFileError(f"line {lineno}: need d >= 2 and p >= 1", (lineno,))
    D = d * p
    expected = 1 + 2 * D * D + p
    if len(lines) != expected:
        raise AttackFileError(f"expected {expected} non-comment lines for d={d}, p={p}, found {len(lines)}")

    def matrix(block, name):
        M = np.full((D, D), np.nan, dtype=complex)
        for lineno, tok in block:
            try:
                r, c, re, im = int(tok[0]), int(tok[1]), float(tok[2]), float(tok[3])
                if len(tok) != 4:
                    raise ValueError
            except (ValueError, IndexError):
                raise AttackFileError(f"line {lineno}: {name} entries are 'row col re im'", (lineno,)) from None
            if not (0 <= r < D and 0 <= c < D):
                raise AttackFileError(f"line {lineno}: {name} index ({r}, {c}) out of range", (lineno,))
            if not np.isnan(M[r, c]):
                raise AttackFileError(f"line {lineno}: {name} entry ({r}, {c}) given twice", (lineno,))
            M[r, c] = complex(re, im)
        try:
            return check_unitary(M, tol)
        except NotUnitaryError as exc:
            a, b = exc.column_pair
            raise AttackFileError(
                f"{name} is not unitary: columns {a} and {b} deviate by {exc.deviation:.3e}", (name, a, b)
            ) from None

    UE = matrix(lines[1:1 + D * D], "U_E")
    UF = matrix(lines[1 + D * D:1 + 2 * D * D], "U_F")
    probe = np.full(p, np.nan, dtype=complex)
    for lineno, tok in lines[1 + 2 * D * D:]:
        try:
            if len(tok) != 3:
                raise ValueError
            e, re, im = int(tok[0]), float(tok[1]), float(tok[2])
        except ValueError:
            raise AttackFileError(f"line {lineno}: probe entries are 'index re im'", (lineno,)) from None
        if not 0 <= e < p or not np.isnan(probe[e]):
            raise AttackFileError(f"line {lineno}: bad or repeated probe index {e}", (lineno,))
        probe[e] = complex(re, im)
    norm = float(np.vdot(probe, probe).real)
    if abs(norm - 1.0) > tol:
        raise AttackFileError(f"probe state has squared norm {norm!r}, expected 1", ("probe",))
    return EntangleMeasure(UE, UF, probe, d)


def read_attack_file(path: str | Path, tol: float = NORM_TOL) -> EntangleMeasure:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise AttackFileError(f"cannot read attack file {path}: {exc}") from exc
    return parse_attack_text(text, tol)


def format_attack(model: EntangleMeasure) -> str:
    out = [f"{model.d} {model.p}"]
    for name, M in (("U_E", model.forward), ("U_F", model.backward)):
        out.append(f"# {name}")
        for r in range(M.shape[0]):
            for c in range(M.shape[1]):
                out.append(f"{r} {c} {float(M[r, c].real)!r} {float(M[r, c].imag)!r}")
    out.append("# initial probe state")
    for e, v in enumerate(model.probe):
        out.append(f"{e} {float(v.real)!r} {float(v.imag)!r}")
    return "\n".join(out) + "\n"


def write_attack_file(path: str | Path, model: EntangleMeasure) -> None:
    Path(path).write_text(format_attack(model))


def load_attack(kind: str, attack_file: str, d: int, base: Path | None = None) -> AttackModel:
    if kind == EntangleMeasure.kind:
        path = Path(attack_file)
        if base is not None and not path.is_absolute():
            path = base / path
        model = read_attack_file(path)
        if model.d != d:
            raise ConfigError(f"attack file is for d={model.d}, experiment uses d={d}")
        return model
    if kind not in ATTACK_KINDS:
        raise ConfigError(f"unknown attack {kind!r}")
    return ATTACK_KINDS[kind]()


# ---------------------------------------------------------------------------
# transcripts


def transcript_lines(transcript: SessionTranscript) -> list[str]:
    lines = [json.dumps(rec, sort_keys=True) for rec in transcript.event_records()]
    lines.append(json.dumps({"summary": transcript.summary_record()}, sort_keys=True))
    return lines


def write_transcript(path: str | Path, transcript: SessionTranscript) -> None:
    Path(path).write_text("\n".join(transcript_lines(transcript)) + "\n")


def read_transcript(path: str | Path) -> tuple[list[dict], dict]:
    """Events and summary from a transcript log."""
    events, summary = [], None
    for line in Path(path).read_text().splitlines():
        rec = json.loads(line)
        if "summary" in rec:
            summary = rec["summary"]
        else:
            events.append(rec)
    if summary is None:
        raise ValueError(f"{path}: no summary record")
    return events, summary
