import csv
import json
import subprocess
import sys

import pytest

from asyncevo import scaling as S
from asyncevo.cli import degradation_checkpoint, main
from asyncevo.config import ConfigError, experiment_from_dict


def write_config(tmp_path, **doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"budget": 8, **doc}))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_minimal(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out-dir", str(out)]) == 0
    for name in ("report.json", "trajectory.csv", "events.jsonl", "evaluations.jsonl", "resolved_config.json"):
        assert (out / name).exists()


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, n_wrokers=3)
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "o")]) == 2
    assert "n_wrokers" in capsys.readouterr().err


def test_nested_unknown_key(tmp_path, capsys):
    cfg = write_config(tmp_path, operator={"max_step": 3})
    assert main(["run", str(cfg)]) == 2
    assert "max_step" in capsys.readouterr().err


def test_bad_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_usage_error_exit_2():
    assert main(["run"]) == 2
    assert main(["nonsense"]) == 2


def test_run_is_byte_deterministic(tmp_path):
    cfg = write_config(tmp_path)
    for d in ("a", "b"):
        assert main(["run", str(cfg), "--seed", "5", "--out-dir", str(tmp_path / d)]) == 0
    for name in ("trajectory.csv", "events.jsonl", "evaluations.jsonl", "population.jsonl", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_resolved_config_round_trips(tmp_path):
    cfg = write_config(tmp_path, task={"preset": "smooth-unimodal", "dim": 3}, checkpoints=[2, 4, 8])
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "a")]) == 0
    resolved = tmp_path / "a" / "resolved_config.json"
    assert main(["run", str(resolved), "--out-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()
    a = json.loads(resolved.read_text())
    b = json.loads((tmp_path / "b" / "resolved_config.json").read_text())
    assert a.pop("out_dir") != b.pop("out_dir") and a == b


def test_checkpoint_flag(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["run", str(cfg), "--checkpoints", "2,4,8", "--out-dir", str(tmp_path / "o")]) == 0
    assert [float(r["time"]) for r in read_csv(tmp_path / "o" / "trajectory.csv")] == [2.0, 4.0, 8.0]
    assert main(["run", str(cfg), "--checkpoints", "3", "--out-dir", str(tmp_path / "p")]) == 0
    assert len(read_csv(tmp_path / "p" / "trajectory.csv")) == 3


def test_ablate_gpus(tmp_path):
    cfg = write_config(tmp_path, seeds=[0, 1], checkpoints=2, ablation={"n_values": [1, 8]})
    out = tmp_path / "abl"
    assert main(["ablate", "gpus", str(cfg), "--out-dir", str(out)]) == 0
    rows = read_csv(out / "ablation_gpus.csv")
    assert {r["arm"] for r in rows} == {"n8", "n1"} and len(rows) == 4
    deltas = read_csv(out / "ablation_gpus_deltas.csv")
    assert len(deltas) == 2 * 2  # seeds x checkpoints
    d = deltas[0]
    assert float(d["delta"]) == pytest.approx(float(d["base"]) - float(d["ablation"]))


def test_ablate_hce_has_degradation_marker(tmp_path):
    cfg = write_config(tmp_path, seeds=[0], budget=12)
    out = tmp_path / "abl"
    assert main(["ablate", "hce", str(cfg), "--out-dir", str(out)]) == 0
    assert {r["arm"] for r in read_csv(out / "ablation_hce.csv")} == {"hce", "self_reported"}
    assert [r["seed"] for r in read_csv(out / "ablation_hce_degradation.csv")] == ["0"]


@pytest.mark.parametrize("suite,arms", [("evolution", {"evolution", "best_of_k"}), ("operators", {"multi_step", "single_turn"})])
def test_ablate_other_suites(tmp_path, suite, arms):
    cfg = write_config(tmp_path, seeds=[0], checkpoints=1)
    out = tmp_path / suite
    assert main(["ablate", suite, str(cfg), "--out-dir", str(out)]) == 0
    assert {r["arm"] for r in read_csv(out / f"ablation_{suite}.csv")} == arms


def test_degradation_marker():
    assert degradation_checkpoint([1, 2, 3, 4], [0.1, 0.5, 0.4, 0.6]) == 3.0
    assert degradation_checkpoint([1, 2, 3], [None, 0.2, 0.2]) is None


def test_fit_with_frozen_beta(tmp_path, capsys):
    path = tmp_path / "pts.csv"
    S.write_points_csv(S.synthetic_points(S.REFERENCE_TRANSFER, [1, 2], [1, 3, 6, 12, 24, 48, 72]), path)
    assert main(["fit", str(path), "--freeze-beta", "4.854", "--out-dir", str(tmp_path / "f")]) == 0
    out = capsys.readouterr().out
    assert "beta=4.854 (frozen)" in out
    report = json.loads((tmp_path / "f" / "fit_report.json").read_text())
    assert report["frozen"] == {"beta": 4.854}
    assert report["alpha"] == pytest.approx(2.673, rel=1e-6) and report["gamma"] == pytest.approx(0.481, rel=1e-6)


def test_fit_insufficient_and_malformed(tmp_path):
    path = tmp_path / "two.csv"
    path.write_text("n_agents,time,performance\n1,1,50\n2,2,60\n")
    assert main(["fit", str(path)]) == 2
    path.write_text("n_agents,time\n1,1\n")
    assert main(["fit", str(path)]) == 2


def test_frontier_table(tmp_path, capsys):
    assert main(["frontier", "--budgets", "8,24,72,192,576", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "frontier.csv")
    assert len(rows) == 5
    ps = [float(r["p_star"]) for r in rows]
    assert ps == sorted(ps)
    assert capsys.readouterr().out.startswith("budget,n_star")


def test_frontier_bad_params():
    assert main(["frontier", "--alpha", "-1"]) == 2
    assert main(["frontier", "--budgets", "0"]) == 2


def test_verify(tmp_path):
    assert main(["verify", "--out-dir", str(tmp_path)]) == 0
    checks = json.loads((tmp_path / "verify.json").read_text())
    assert all(c["ok"] for c in checks)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "asyncevo", "frontier", "--budgets", "8"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.count("\n") == 2


def test_config_defaults_resolve():
    exp = experiment_from_dict({})
    r = exp.resolved()
    assert r["selection"]["temperature"] == 0.2 and r["selection"]["crossover_prob"] == 0.15
    assert r["split_spec"]["fractions"] == [0.8, 0.1, 0.1]
    with pytest.raises(ConfigError):
        experiment_from_dict({"seeds": []})
    with pytest.raises(ConfigError):
        experiment_from_dict({"task": {"preset": "nope"}})
