import json
import math

import numpy as np
import pytest

from msqss.adversary import EntangleMeasure, build_undetectable_attack, identity_attack
from msqss.cli import EXIT_ATTACK_FILE, EXIT_CONFIG, EXIT_OK, main, run, verify_attack
from msqss.formats import (
    AttackFileError,
    ConfigError,
    ExperimentSpec,
    format_attack,
    parse_attack_text,
    parse_config_text,
    read_transcript,
    write_attack_file,
    write_transcript,
)
from msqss.protocol import SessionConfig, run_session
from msqss.qudit import fourier_matrix


def gen(seed):
    return np.random.Generator(np.random.Philox(seed))


# --- config text ---------------------------------------------------------------------------


def test_parse_config_defaults():
    spec = parse_config_text("d = 3\nN = 2  # receivers\n\nn = 4\n")
    assert (spec.d, spec.N, spec.n, spec.seed, spec.attack, spec.trials) == (3, 2, 4, 0, "none", 100)
    assert spec.attack_target is None and spec.dishonest == ()


def test_parse_config_all_keys():
    spec = parse_config_text(
        "d=2\nN=3\nn=1\nseed=0xff\ncount_mode=balanced\ncheck_policy=exact-n\nattack=measure-resend\n"
        "attack_target=2\ndishonest=1,3\ntap_probability=0.5\ntrials=7\nmin_slots=10\nworkers=2\n"
        "out=report.jsonl\nformat=table\n"
    )
    assert spec.seed == 255 and spec.dishonest == (1, 3) and spec.attack_target == 2
    assert spec.tap_probability == 0.5 and spec.format == "table"


@pytest.mark.parametrize("text", [
    "d = 2\nN = 1\n",
    "d = 2\nN = 1\nn = 1\ncolour = red\n",
    "d = 2\nN = 1\nn = 1\nn = 2\n",
    "d = 2\nN = 1\nn = one\n",
    "d 2\nN = 1\nn = 1\n",
    "d = 2\nN = 1\nn = 1\ntrials = 0\n",
    "d = 2\nN = 1\nn = 1\nseed = -1\n",
    "d = 2\nN = 1\nn = 1\nattack = entangle-measure\n",
    "d = 2\nN = 1\nn = 1\nattack = photon-number\n",
])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_config_round_trip():
    spec = parse_config_text("d=5\nN=2\nn=3\nseed=12\nattack=intercept-resend\nattack_target=1\n")
    assert parse_config_text(spec.to_config_text()) == spec


def test_session_config_error_surfaces_as_config_error():
    spec = ExperimentSpec(d=2, N=2, n=1, attack_target=5)
    with pytest.raises(ConfigError):
        spec.session_config()


# --- attack files --------------------------------------------------------------------------------


def test_attack_file_round_trip():
    model = build_undetectable_attack(3, rng=gen(0))
    back = parse_attack_text(format_attack(model))
    np.testing.assert_array_equal(back.forward, model.forward)
    np.testing.assert_array_equal(back.backward, model.backward)
    np.testing.assert_array_equal(back.probe, model.probe)


def test_attack_file_rejects_non_unitary():
    model = identity_attack(2, 2)
    lines = format_attack(model).splitlines()
    # U_E entry (1, 1) -> 2
    i = lines.index("1 1 1.0 0.0")
    lines[i] = "1 1 2.0 0.0"
    with pytest.raises(AttackFileError) as info:
        parse_attack_text("\n".join(lines))
    assert info.value.location[0] == "U_E"
    assert 1 in info.value.location[1:]


@pytest.mark.parametrize("mutate, fragment", [
    (lambda ls: ls[:-1], "expected"),
    (lambda ls: ["two 2"] + ls[1:], "header"),
    (lambda ls: ls[:2] + ["0 0 x 0"] + ls[3:], "row col re im"),
    (lambda ls: ls[:2] + ["9 0 1 0"] + ls[3:], "out of range"),
])
def test_attack_file_parse_errors(mutate, fragment):
    lines = [ln for ln in format_attack(identity_attack(2, 2)).splitlines() if not ln.startswith("#")]
    with pytest.raises(AttackFileError) as info:
        parse_attack_text("\n".join(mutate(lines)))
    assert fragment in str(info.value)


def test_attack_file_probe_norm():
    text = format_attack(identity_attack(2, 1)).replace("0 1.0 0.0\n", "0 0.5 0.0\n")
    with pytest.raises(AttackFileError):
        parse_attack_text(text)


# --- transcripts -----------------------------------------------------------------------------------


def test_transcript_round_trip(tmp_path):
    tr = run_session(SessionConfig(d=3, N=2, n=2, seed=4))
    path = tmp_path / "t.jsonl"
    write_transcript(path, tr)
    events, summary = read_transcript(path)
    assert events == tr.event_records()
    assert summary == json.loads(json.dumps(tr.summary_record()))
    assert [e["seq"] for e in events] == list(range(len(events)))


# --- run / verify-attack -----------------------------------------------------------------------------


def test_run_honest_example():
    rep = run(ExperimentSpec(d=3, N=2, n=4, trials=100, count_mode="balanced"))
    assert rep.summary.check_abort_rate() == 0
    assert rep.key is not None and len(rep.key["combined_key"]) == 4
    assert rep.efficiency["expected"]["eta"] == "1/24"
    for row in rep.detection:
        assert row["estimate"] == 0 and row["trials"] > 0


def test_run_intercept_resend_example():
    rep = run(ExperimentSpec(d=2, N=1, n=8, attack="intercept-resend", trials=1, min_slots=10_000, seed=3))
    row = next(r for r in rep.detection if r["scenario"] == "Z+MEASURE@step4")
    assert row["trials"] >= 10_000 and row["analytic"] == 0.25
    assert abs(row["estimate"] - 0.25) <= 3 * row["se"]
    assert rep.key is None


def test_run_is_deterministic_and_worker_independent():
    spec = ExperimentSpec(d=3, N=2, n=2, attack="measure-resend", trials=40, seed=11)
    a, b = run(spec), run(spec)
    assert a.numeric_lines() == b.numeric_lines()
    c = run(spec.with_overrides(workers=2))
    assert [ln for ln in c.numeric_lines() if '"experiment"' not in ln] == \
           [ln for ln in a.numeric_lines() if '"experiment"' not in ln]


def test_verify_attack_examples(tmp_path):
    ident = tmp_path / "id.txt"
    write_attack_file(ident, identity_attack(3, 3))
    rec = verify_attack(ident)
    assert rec["undetectable"] and rec["eq7_violation"] == 0 and rec["eq21_violation"] == 0

    d = 3
    eps = np.zeros(d, dtype=complex)
    eps[0] = 1
    rot = tmp_path / "fourier.txt"
    write_attack_file(rot, EntangleMeasure(np.kron(fourier_matrix(d), np.eye(d)), np.eye(d * d), eps, d))
    rec = verify_attack(rot)
    assert not rec["undetectable"]
    assert rec["eq7_violation"] >= 1 / math.sqrt(d) - 1e-10


# --- command line ----------------------------------------------------------------------------------


def test_cli_run(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("d = 2\nN = 2\nn = 2\ntrials = 5\nformat = table\n")
    trans = tmp_path / "t.jsonl"
    assert main(["run", "--config", str(cfg), "--seed", "9", "--transcript", str(trans)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Z+MEASURE@step4" in out and "seed=9" in out
    assert trans.exists()

    out_path = tmp_path / "r.jsonl"
    assert main(["run", "--config", str(cfg), "--format", "records", "--out", str(out_path)]) == EXIT_OK
    records = [json.loads(ln) for ln in out_path.read_text().splitlines()]
    assert records[0]["record"] == "experiment" and records[-1]["record"] == "timing"
    assert all("trials" in r for r in records if r["record"] == "detection")
    # the echoed spec re-parses to the same spec
    assert parse_config_text(records[0]["config_text"]).as_record() == records[0]["spec"]


def test_cli_entangle_measure_relative_path(tmp_path, capsys):
    write_attack_file(tmp_path / "att.txt", build_undetectable_attack(2, rng=gen(1)))
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("d = 2\nN = 1\nn = 2\ntrials = 20\nattack = entangle-measure\nattack_file = att.txt\n")
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    rows = [json.loads(ln) for ln in capsys.readouterr().out.splitlines()]
    det = [r for r in rows if r["record"] == "detection"]
    assert all(r["estimate"] == 0 and r["exact"] < 1e-10 for r in det)


def test_cli_config_errors(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["bogus"]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("d = 2\n")
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["efficiency", "-k", "0"]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_cli_attack_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("2 1\n0 0 1 0\n0 1 1 0\n1 0 0 0\n1 1 1 0\n" + "0 0 1 0\n0 1 0 0\n1 0 0 0\n1 1 1 0\n0 1 0\n")
    assert main(["verify-attack", str(bad)]) == EXIT_ATTACK_FILE
    assert "columns" in capsys.readouterr().err
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("d = 2\nN = 1\nn = 1\nattack = entangle-measure\nattack_file = bad.txt\n")
    assert main(["run", "--config", str(cfg)]) == EXIT_ATTACK_FILE


def test_cli_verify_attack_output(tmp_path, capsys):
    path = tmp_path / "a.txt"
    write_attack_file(path, build_undetectable_attack(3, rng=gen(2)))
    assert main(["verify-attack", str(path), "--format", "records"]) == EXIT_OK
    rec = json.loads(capsys.readouterr().out)
    assert rec["undetectable"] is True


def test_cli_efficiency(capsys):
    assert main(["efficiency", "-k", "4", "--format", "records"]) == EXIT_OK
    rows = [json.loads(ln) for ln in capsys.readouterr().out.splitlines()]
    assert [r["eta"] for r in rows] == ["1/12", "1/24", "1/36", "1/48"]
    assert main(["efficiency"]) == EXIT_OK
    assert "1/96" in capsys.readouterr().out
