"""Command-line front end.

::

    msqss run --config EXP.cfg [--seed S] [--trials T] [--out PATH] [--format table|records]
    msqss verify-attack ATTACK.txt [--tol 1e-10] [--format table|records]
    msqss efficiency [--max-receivers K] [--n N] [--format table|records]

Exit status: 0 on success, 1 on a configuration error, 2 when an attack
matrix file fails to parse or is not unitary.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from msqss.adversary import check_constraints
from msqss.analysis import (
    SCENARIOS,
    SimulationSummary,
    Stage,
    analytic_detection,
    exact_detection,
    expected_efficiency,
    has_closed_form,
    observed_receivers,
)
from msqss.formats import (
    AttackFileError,
    ConfigError,
    ExperimentSpec,
    read_attack_file,
    read_config,
    write_transcript,
)
from msqss.protocol import SessionConfig, run_session
from msqss.rng import trial_tree

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ATTACK_FILE = 2


@dataclass
class ReportRecord:
    spec: ExperimentSpec
    summary: SimulationSummary
    detection: list[dict]
    efficiency: dict
    key: dict | None
    wall_clock: float

    def records(self) -> list[dict]:
        out = [{"record": "experiment", "spec": self.spec.as_record(), "config_text": self.spec.to_config_text()}]
        s = self.summary
        out.append({
            "record": "aborts",
            "sessions": s.sessions,
            "by_reason": dict(sorted(s.aborts.items())),
            "abort_rate": s.abort_rate(),
            "check_abort_rate": s.check_abort_rate(),
        })
        out.extend(self.detection)
        out.append(self.efficiency)
        if self.key is not None:
            out.append(self.key)
        out.append({"record": "timing", "wall_clock_s": self.wall_clock})
        return out

    def numeric_lines(self) -> list[str]:
        """Every report line except the wall-clock one, serialised deterministically."""
        return [json.dumps(r, sort_keys=True) for r in self.records() if r["record"] != "timing"]

    def render(self, fmt: str) -> str:
        if fmt == "records":
            return "\n".join(json.dumps(r, sort_keys=True) for r in self.records()) + "\n"
        return self._table()

    def _table(self) -> str:
        sp, s = self.spec, self.summary
        lines = [
            f"experiment  d={sp.d} N={sp.N} n={sp.n} seed={sp.seed} attack={sp.attack} "
            f"target={'all' if sp.attack_target is None else sp.attack_target} mode={sp.count_mode}",
            f"sessions    {s.sessions}   aborts {dict(sorted(s.aborts.items()))}   "
            f"check-abort rate {s.check_abort_rate():.4f}",
            "",
            f"{'scenario':<22}{'estimate':>10}{'se':>10}{'slots':>9}{'analytic':>10}{'exact':>10}",
        ]
        for row in self.detection:
            a = "-" if row["analytic"] is None else f"{row['analytic']:.4f}"
            e = "-" if row["exact"] is None else f"{row['exact']:.4f}"
            se = "-" if row["se"] is None else f"{row['se']:.4f}"
            lines.append(f"{row['scenario']:<22}{row['estimate']:>10.4f}{se:>10}"
                         f"{row['trials']:>9}{a:>10}{e:>10}")
        ef = self.efficiency
        lines += [
            "",
            f"efficiency  expected eta={ef['expected']['eta']} (lambda={ef['expected']['lambda']})   "
            f"measured mean lambda={ef['measured_mean_lambda']:.2f} sd={ef['measured_lambda_sd']:.2f}",
        ]
        if self.key is not None:
            lines.append(f"key         trial {self.key['trial']}: {self.key['combined_key']}")
        lines.append(f"wall clock  {self.wall_clock:.3f} s")
        return "\n".join(lines) + "\n"


def _chunk(config: SessionConfig, count: int, first: int, min_slots: int):
    summary = SimulationSummary()
    receivers = observed_receivers(config)
    need = {sc: min_slots for sc in SCENARIOS if sc.stage is not Stage.IGNORED} if min_slots else {}
    key = None
    k = first
    while summary.sessions < count or any(summary.qualifying[sc] < v for sc, v in need.items()):
        tr = run_session(config, trial_tree(config.seed, k))
        summary.add(tr, receivers)
        if key is None and tr.combined_key is not None:
            key = (k, list(tr.combined_key))
        k += 1
    return summary, key


def _detection_rows(config: SessionConfig, summary: SimulationSummary) -> list[dict]:
    exact = exact_detection(config.attack, config.d)
    scale = config.tap_probability
    rows = []
    for sc in SCENARIOS:
        analytic = None
        if has_closed_form(config.attack) and scale == 1.0:
            analytic = float(analytic_detection(config.attack, config.d, sc))
        ex = exact[sc] * scale
        if sc.stage is Stage.STEP4 and config.check_policy != "half":
            ex = None  # the check rate is n/m, not 1/2
        est = summary.estimate(sc, analytic, ex)
        rows.append({
            "record": "detection",
            "scenario": sc.label,
            "basis": sc.basis.value,
            "action": sc.action.value,
            "stage": sc.stage.value,
            "estimate": est.estimate,
            "detections": est.detections,
            "trials": est.trials,
            "se": est.se if est.trials else None,
            "analytic": analytic,
            "exact": ex,
        })
    return rows


def run(spec: ExperimentSpec, base: Path | None = None, transcript: str | Path | None = None) -> ReportRecord:
    """Execute ``spec.trials`` sessions and build the report."""
    t0 = time.perf_counter()
    config = spec.session_config(base)
    if spec.workers > 1 and not spec.min_slots:
        per = -(-spec.trials // spec.workers)
        jobs = [(start, min(per, spec.trials - start)) for start in range(0, spec.trials, per)]
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            parts = list(pool.map(_chunk, [config] * len(jobs), [c for _, c in jobs],
                                  [s for s, _ in jobs], [0] * len(jobs)))
    else:
        parts = [_chunk(config, spec.trials, 0, spec.min_slots)]
    summary = SimulationSummary()
    for part, _ in parts:
        summary = summary.merge(part)
    keys = [k for _, k in parts if k is not None]

    if transcript is not None:
        write_transcript(transcript, run_session(config, trial_tree(config.seed, 0)))

    lam_mean = summary.lambda_total / summary.sessions
    lam_var = max(0.0, summary.lambda_sq_total / summary.sessions - lam_mean**2)
    eff = {
        "record": "efficiency",
        "expected": expected_efficiency(spec.N, spec.n).as_record(),
        "measured_mean_lambda": lam_mean,
        "measured_lambda_sd": lam_var**0.5,
        "expected_lambda": 12 * spec.n * spec.N,
    }
    key = None
    if spec.attack == "none" and keys:
        trial, combined = min(keys)
        key = {"record": "key", "trial": trial, "combined_key": combined}
    return ReportRecord(spec, summary, _detection_rows(config, summary), eff, key, time.perf_counter() - t0)


def verify_attack(path: str | Path, tol: float = 1e-10) -> dict:
    model = read_attack_file(path)
    rep = check_constraints(model, tol)
    return {
        "record": "constraints",
        "file": str(path),
        "d": model.d,
        "p": model.p,
        "eq7_violation": rep.eq7_violation,
        "eq21_violation": rep.eq21_violation,
        "leak_violation": rep.leak_violation,
        "tol": tol,
        "undetectable": rep.undetectable,
    }


def efficiency_table(max_receivers: int, n: int) -> list[dict]:
    return [{"record": "efficiency", "N": N, **expected_efficiency(N, n).as_record()}
            for N in range(1, max_receivers + 1)]


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="msqss", description="d-level multiparty semiquantum secret sharing simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment described by a config file")
    r.add_argument("--config", required=True, metavar="PATH")
    r.add_argument("--seed", type=int, metavar="U64")
    r.add_argument("--trials", type=int, metavar="INT")
    r.add_argument("--out", metavar="PATH")
    r.add_argument("--format", choices=("table", "records"))
    r.add_argument("--workers", type=int, metavar="INT")
    r.add_argument("--transcript", metavar="PATH", help="write the event log of trial 0")

    v = sub.add_parser("verify-attack", help="check an entangle-measure attack file for undetectability")
    v.add_argument("path")
    v.add_argument("--tol", type=float, default=1e-10)
    v.add_argument("--out", metavar="PATH")
    v.add_argument("--format", choices=("table", "records"), default="table")

    e = sub.add_parser("efficiency", help="expected qudit efficiency for N = 1..K")
    e.add_argument("--max-receivers", "-k", type=int, default=8, metavar="K")
    e.add_argument("--n", type=int, default=1, metavar="N", help="key length (eta does not depend on it)")
    e.add_argument("--out", metavar="PATH")
    e.add_argument("--format", choices=("table", "records"), default="table")
    return p


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.command == "run":
            spec = read_config(args.config).with_overrides(
                seed=args.seed, trials=args.trials, out=args.out, format=args.format, workers=args.workers
            )
            report = run(spec, base=Path(args.config).resolve().parent, transcript=args.transcript)
            _emit(report.render(spec.format), spec.out)
        elif args.command == "verify-attack":
            rec = verify_attack(args.path, args.tol)
            if args.format == "records":
                text = json.dumps(rec, sort_keys=True) + "\n"
            else:
                text = "".join(f"{k:<16}{v}\n" for k, v in rec.items() if k != "record")
            _emit(text, args.out)
        else:
            if args.max_receivers < 1 or args.n < 1:
                raise ConfigError("--max-receivers and --n must be >= 1")
            rows = efficiency_table(args.max_receivers, args.n)
            if args.format == "records":
                text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
            else:
                text = f"{'N':>3}{'gamma':>8}{'lambda':>9}{'eta':>10}{'eta_float':>14}\n" + "".join(
                    f"{r['N']:>3}{r['gamma']:>8}{r['lambda']:>9}{r['eta']:>10}{r['eta_float']:>14.6f}\n"
                    for r in rows
                )
            _emit(text, args.out)
    except AttackFileError as exc:
        print(f"msqss: attack file error: {exc}", file=sys.stderr)
        return EXIT_ATTACK_FILE
    except ConfigError as exc:
        print(f"msqss: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
