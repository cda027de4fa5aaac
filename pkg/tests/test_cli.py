import json
import subprocess
import sys

from nsadapt.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_plan_baseline(capsys):
    code, out = run_cli(capsys, "plan")
    assert code == 0
    assert json.loads(out.out)["plan"] == ["goto(Q0,Q1)", "pick(can,Q1)", "goto(Q1,Q3)", "place(can,bin,Q3)"]


def test_missing_domain_file_is_config_error(capsys, tmp_path):
    code, out = run_cli(capsys, "plan", "--domain", str(tmp_path / "none.pddl"))
    assert code == 1 and "error" in out.err


def test_parse_error_is_config_error(capsys, tmp_path):
    bad = tmp_path / "bad.pddl"
    bad.write_text("(define (domain broken)")
    code, _ = run_cli(capsys, "plan", "--domain", str(bad))
    assert code == 1


def test_invalid_config_is_config_error(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"eval_every": 0}))
    code, _ = run_cli(capsys, "run", "--config", str(cfg))
    assert code == 1


def test_unknown_scenario_is_config_error(capsys):
    code, _ = run_cli(capsys, "run", "--scenario", "earthquake", "--seed", "0")
    assert code == 1


def test_run_then_aggregate_and_plot(capsys, tmp_path):
    code, out = run_cli(capsys, "run", "--scenario", "door", "--seed", "0", "--output", str(tmp_path))
    assert code == 0
    summary = json.loads(out.out.splitlines()[0])
    assert summary["scenario"] == "door" and summary["T_adapt"] != "not-converged"
    assert (tmp_path / "door" / "seed-0" / "metrics.csv").exists()

    code, out = run_cli(capsys, "aggregate", "--dir", str(tmp_path), "--out", str(tmp_path / "agg.json"))
    assert code == 0
    assert json.loads((tmp_path / "agg.json").read_text())["door"]["converged"] == 1

    code, out = run_cli(capsys, "plot", "--csv", str(tmp_path / "door" / "seed-0" / "metrics.csv"))
    assert code == 0
    assert (tmp_path / "door" / "seed-0" / "metrics.svg").read_text().startswith("<svg")


def test_zero_step_run_does_not_converge(capsys, tmp_path):
    code, out = run_cli(capsys, "run", "--scenario", "door", "--seed", "0", "--max-steps", "0",
                        "--output", str(tmp_path))
    assert code == 0 and json.loads(out.out)["T_adapt"] == "not-converged"


def test_aggregate_empty_dir(capsys, tmp_path):
    code, _ = run_cli(capsys, "aggregate", "--dir", str(tmp_path))
    assert code == 1


def test_eval_scripted_and_empty(capsys):
    code, out = run_cli(capsys, "eval", "--episodes", "3")
    assert code == 0 and json.loads(out.out)["success_rate"] == 1.0
    code, out = run_cli(capsys, "eval", "--empty-library")
    assert json.loads(out.out)["success_rate"] == 0.0


def test_induce_from_logged_run(capsys, tmp_path):
    run_cli(capsys, "run", "--scenario", "door", "--seed", "0", "--output", str(tmp_path))
    log = tmp_path / "door" / "seed-0" / "transitions.jsonl"
    code, out = run_cli(capsys, "induce", "--log", str(log))
    assert code == 0 and "(door-open)" in out.out


def test_failed_check_exits_two(capsys, monkeypatch):
    from nsadapt import acceptance

    monkeypatch.setitem(acceptance.CHECKS, "gradients", lambda **kw: {"passed": False})
    code, out = run_cli(capsys, "check", "gradients")
    assert code == 2 and out.out.startswith("FAIL gradients")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nsadapt.cli", "check", "round-trip"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("PASS round-trip")
