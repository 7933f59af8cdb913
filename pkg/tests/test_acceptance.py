"""Acceptance experiments, one test per criterion.

Each experiment is a function returning a JSON-serialisable record.  The
criterion tests assert on that record; the determinism criterion reruns
every experiment with the same seeds and compares the serialised records.
``conftest.py`` prints one PASS/FAIL line per criterion at the end of the run.
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from msqss.adversary import (
    InterceptResend,
    MeasureResend,
    build_undetectable_attack,
    check_constraints,
    final_probe_states,
    min_pairwise_fidelity,
    perturb_attack,
)
from msqss.analysis import (
    SCENARIOS,
    Scenario,
    Stage,
    exact_detection,
    exact_receiver_detection,
    exact_session_detection,
    expected_efficiency,
    measured_efficiency,
    simulate,
)
from msqss.cli import run
from msqss.formats import ExperimentSpec
from msqss.protocol import REFLECT_CHECK, ZMEASURE_CHECK, SessionConfig, run_session
from msqss.qudit import Basis, fourier_matrix, outcome_distribution, prepare
from msqss.rng import SeedTree, trial_tree

ZM = Scenario.of("Z", "MEASURE")
ZR = Scenario.of("Z", "REFLECT")
XR = Scenario.of("X", "REFLECT")
XM = Scenario.of("X", "MEASURE")
REFLECTED = (ZR, XR)

_first_run: dict[str, str] = {}


def _record(name, fn):
    """Run an experiment; keep its first serialisation for the determinism check."""
    rec = fn()
    _first_run.setdefault(name, json.dumps(rec, sort_keys=True))
    return rec


# --- experiments ----------------------------------------------------------------------------


def honest_matrix():
    rows = []
    for d in (2, 3, 5, 7):
        for N in (1, 2, 3, 4):
            for n in (2, 8):
                cfg = SessionConfig(d=d, N=N, n=n, seed=1000 + 100 * d + 10 * N + n, count_mode="balanced")
                check_aborts = nonzero_rates = bad_keys = completed = 0
                first_key = None
                for k in range(200):
                    tr = run_session(cfg, trial_tree(cfg.seed, k))
                    check_aborts += tr.abort_reason in (REFLECT_CHECK, ZMEASURE_CHECK)
                    nonzero_rates += any(r != 0 for r in tr.reflect_error_rate.values())
                    nonzero_rates += any(r not in (None, 0) for r in tr.zmeasure_error_rate.values())
                    if tr.aborted:
                        continue
                    completed += 1
                    shares = [tr.key_shares[i].dits for i in range(1, N + 1)]
                    expected = tuple(sum(col) % d for col in zip(*shares))
                    ok = tr.combined_key == expected and all(len(s) == n for s in shares)
                    ok = ok and all(0 <= x < d for s in shares for x in s)
                    bad_keys += not ok
                    if first_key is None:
                        first_key = list(tr.combined_key)
                rows.append({"d": d, "N": N, "n": n, "check_aborts": check_aborts, "nonzero_rates": nonzero_rates,
                             "bad_keys": bad_keys, "completed": completed, "first_key": first_key})
    return rows


def intercept_resend_profile():
    rows = []
    for d in (2, 3, 5):
        attack = InterceptResend()
        ex = exact_detection(attack, d)
        cfg = SessionConfig(d=d, N=1, n=8, seed=2000 + d, attack=attack)
        s = simulate(cfg, 1, min_slots={ZM: 10_000, ZR: 10_000, XR: 10_000})
        rows.append({
            "d": d,
            "exact": {sc.label: ex[sc] for sc in SCENARIOS},
            "mc": {sc.label: [s.detected[sc], s.qualifying[sc]] for sc in SCENARIOS},
        })
    return rows


def measure_resend_profile():
    rows = []
    for d in (2, 3, 5):
        attack = MeasureResend()
        ex = exact_detection(attack, d)
        cfg = SessionConfig(d=d, N=1, n=8, seed=3000 + d, attack=attack)
        s = simulate(cfg, 1, min_slots={XR: 10_000})
        rows.append({
            "d": d,
            "exact": {sc.label: ex[sc] for sc in SCENARIOS},
            "mc": {sc.label: [s.detected[sc], s.qualifying[sc]] for sc in SCENARIOS},
        })
    cfg = SessionConfig(d=2, N=1, n=8, seed=3100, attack=MeasureResend())
    s = simulate(cfg, 1000)
    return {
        "per_d": rows,
        "session": {
            "sessions": s.sessions,
            "check_aborts": s.aborts.get(REFLECT_CHECK, 0) + s.aborts.get(ZMEASURE_CHECK, 0),
            "aborts": dict(sorted(s.aborts.items())),
            "exact_abort": exact_session_detection(cfg),
            "exact_reflect": exact_receiver_detection(cfg)["reflect"],
            "naive_bound": 1 - 0.5 ** (2 * cfg.n),
        },
    }


def theorem_one_suite():
    tree = SeedTree(4000)
    undetectable = []
    for k in range(50):
        d = (2, 3, 5)[k % 3]
        model = build_undetectable_attack(d, p=d, rng=tree.generator(0, k))
        ex = exact_detection(model, d)
        undetectable.append({
            "d": d,
            "max_detection": max(ex.values()),
            "min_fidelity": min_pairwise_fidelity(final_probe_states(model)),
            "constraints_ok": check_constraints(model).undetectable,
        })
    perturbed = []
    k = 0
    while len(perturbed) < 100:
        rng = tree.generator(1, k)
        d = (2, 3, 5)[k % 3]
        k += 1
        base = build_undetectable_attack(d, p=d, rng=rng)
        model = perturb_attack(base, float(rng.uniform(0.3, 1.5)), rng)
        rep = check_constraints(model)
        if rep.eq21_violation <= 0.1:
            continue
        ex = exact_detection(model, d)
        cfg = SessionConfig(d=d, N=1, n=2, attack=model)
        perturbed.append({"d": d, "eq21": rep.eq21_violation, "max_detection": max(ex.values()),
                          "session_detection": exact_session_detection(cfg)})
    return {"undetectable": undetectable, "perturbed": perturbed, "draws": k}


def efficiency_profile():
    expected = {N: expected_efficiency(N, 10 * N).eta for N in range(1, 9)}
    cfg = SessionConfig(d=3, N=3, n=100, seed=5000)
    lams = [measured_efficiency(run_session(cfg, trial_tree(cfg.seed, k))).lam for k in range(100)]
    return {
        "expected": {str(N): f"{e.numerator}/{e.denominator}" for N, e in expected.items()},
        "lambdas": lams,
    }


def basis_invariants():
    rows = []
    for d in range(2, 17):
        F = fourier_matrix(d)
        unitary = float(np.abs(F.conj().T @ F - np.eye(d)).max())
        inverse = 0.0
        expansion = 0.0
        unbiased = 0.0
        for t in range(d):
            inverse = max(inverse, float(np.abs(F.conj().T @ prepare(d, Basis.X, t).amplitudes
                                                - prepare(d, Basis.Z, t).amplitudes).max()))
            v = sum(np.exp(-2j * np.pi * j * t / d) * prepare(d, Basis.X, j).amplitudes for j in range(d))
            expansion = max(expansion, float(np.abs(v / math.sqrt(d) - prepare(d, Basis.Z, t).amplitudes).max()))
            for a, b in ((Basis.X, Basis.Z), (Basis.Z, Basis.X)):
                p = outcome_distribution(prepare(d, a, t), b)
                unbiased = max(unbiased, float(np.abs(p - 1 / d).max()))
        rows.append({"d": d, "unitary": unitary, "inverse": inverse, "expansion": expansion, "unbiased": unbiased})
    return rows


def cli_reports():
    specs = [
        ExperimentSpec(d=3, N=2, n=4, trials=100, count_mode="balanced", seed=6000),
        ExperimentSpec(d=2, N=1, n=8, attack="intercept-resend", trials=1, min_slots=10_000, seed=6001),
        ExperimentSpec(d=2, N=1, n=8, attack="measure-resend", trials=1000, seed=6002),
    ]
    return [run(s).numeric_lines() for s in specs]


EXPERIMENTS = {
    "honest_matrix": honest_matrix,
    "intercept_resend_profile": intercept_resend_profile,
    "measure_resend_profile": measure_resend_profile,
    "theorem_one_suite": theorem_one_suite,
    "efficiency_profile": efficiency_profile,
    "basis_invariants": basis_invariants,
    "cli_reports": cli_reports,
}


def _within(detected, trials, p, k=3.0):
    p_hat = detected / trials
    se = math.sqrt(p_hat * (1 - p_hat) / trials)
    return abs(p_hat - p) <= k * se + 1e-12


# --- criteria ----------------------------------------------------------------------------------


def test_criterion_1_honest_run_soundness():
    t0 = time.perf_counter()
    rows = _record("honest_matrix", honest_matrix)
    elapsed = time.perf_counter() - t0
    assert len(rows) == 32
    for r in rows:
        assert r["check_aborts"] == 0, r
        assert r["nonzero_rates"] == 0, r
        assert r["bad_keys"] == 0, r
        assert r["completed"] > 0, r
    print(f"criterion 1: {sum(r['completed'] for r in rows)} keys established, {elapsed:.1f} s")
    assert elapsed < 30


def test_criterion_2_intercept_resend_detection():
    for r in _record("intercept_resend_profile", intercept_resend_profile):
        d = r["d"]
        assert abs(r["exact"][ZM.label] - (d - 1) / (2 * d)) < 1e-12
        hits, slots = r["mc"][ZM.label]
        assert slots >= 10_000
        assert _within(hits, slots, (d - 1) / (2 * d)), r
        for sc in REFLECTED:
            assert r["exact"][sc.label] == 0
            assert r["mc"][sc.label][0] == 0 and r["mc"][sc.label][1] >= 10_000


def test_criterion_3_measure_resend_profile():
    rec = _record("measure_resend_profile", measure_resend_profile)
    for r in rec["per_d"]:
        d = r["d"]
        for sc in (ZM, XM, ZR):
            assert r["exact"][sc.label] == 0
        assert abs(r["exact"][XR.label] - (d - 1) / d) < 1e-12
        hits, slots = r["mc"][XR.label]
        assert slots >= 10_000
        assert _within(hits, slots, (d - 1) / d), r
        assert r["mc"][ZM.label][0] == 0 and r["mc"][ZR.label][0] == 0
    s = rec["session"]
    rate = s["check_aborts"] / s["sessions"]
    print(f"criterion 3: abort rate {rate:.4f} over {s['sessions']} sessions, exact {s['exact_abort']:.6f}")
    assert s["sessions"] == 1000
    assert s["exact_abort"] >= 0.95
    assert rate >= 0.95
    assert abs(rate - s["exact_abort"]) <= 4 * math.sqrt(s["exact_abort"] * (1 - s["exact_abort"]) / 1000) + 1e-3


def test_criterion_4_theorem_one_property_suite():
    t0 = time.perf_counter()
    rec = _record("theorem_one_suite", theorem_one_suite)
    elapsed = time.perf_counter() - t0
    assert len(rec["undetectable"]) == 50
    for r in rec["undetectable"]:
        assert r["constraints_ok"]
        assert r["max_detection"] < 1e-10, r
        assert r["min_fidelity"] > 1 - 1e-10, r
    assert len(rec["perturbed"]) == 100
    for r in rec["perturbed"]:
        assert r["eq21"] > 0.1
        assert r["max_detection"] > 0, r
        assert r["session_detection"] > 0, r
    print(f"criterion 4: min perturbed slot detection {min(r['max_detection'] for r in rec['perturbed']):.3e}, "
          f"{elapsed:.1f} s")
    assert elapsed < 60


def test_criterion_5_efficiency():
    rec = _record("efficiency_profile", efficiency_profile)
    for N in range(1, 9):
        assert Fraction(rec["expected"][str(N)]) == Fraction(1, 12 * N)
    lams = rec["lambdas"]
    assert len(lams) == 100
    mean = sum(lams) / len(lams)
    # lambda = 2400 + three independent Binomial(800, 1/2) counts
    sigma_mean = math.sqrt(3 * 800 * 0.25 / len(lams))
    print(f"criterion 5: mean lambda {mean:.2f}, 3 sigma = {3 * sigma_mean:.2f}")
    assert abs(mean - 3600) <= 3 * sigma_mean


def test_criterion_6_basis_invariants():
    for r in _record("basis_invariants", basis_invariants):
        assert r["unitary"] < 1e-12, r
        assert r["inverse"] < 1e-10, r
        assert r["expansion"] < 1e-10, r
        assert r["unbiased"] < 1e-10, r


def test_criterion_7_determinism():
    _record("cli_reports", cli_reports)
    for name, fn in EXPERIMENTS.items():
        if name not in _first_run:
            _first_run[name] = json.dumps(fn(), sort_keys=True)
        assert json.dumps(fn(), sort_keys=True) == _first_run[name], name
    one = run(ExperimentSpec(d=2, N=2, n=2, attack="intercept-resend", trials=60, seed=7000))
    two = run(ExperimentSpec(d=2, N=2, n=2, attack="intercept-resend", trials=60, seed=7000, workers=2))
    strip = [ln for ln in one.numeric_lines() if '"experiment"' not in ln]
    assert strip == [ln for ln in two.numeric_lines() if '"experiment"' not in ln]
