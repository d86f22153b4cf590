import csv
import io
import json
import subprocess
import sys

import pytest

from metaopt.checkpoint import CheckpointStore
from metaopt.cli import DEFAULT_RESET_P, main, name_lock, report_table
from metaopt.tsp import CityGraph, generate_instance, instance_bytes, load_instance

from oracles import M4, cycle_cost


@pytest.fixture
def ckpt(tmp_path):
    return tmp_path / "ckpt"


@pytest.fixture
def m4_file(tmp_path):
    path = tmp_path / "m4.json"
    path.write_text(json.dumps({"n": 4, "matrix": M4}))
    return path


@pytest.fixture
def inst20(tmp_path):
    path = tmp_path / "inst20.json"
    assert main(["gen", "--n", "20", "--seed", "3", "--out", str(path)]) == 0
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def record(out):
    return json.loads(out.strip().splitlines()[-1])


def test_gen_writes_matrix(tmp_path):
    out = tmp_path / "inst.json"
    assert main(["gen", "--n", "200", "--seed", "42", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["n"] == 200
    assert len(data["matrix"]) == 200 and all(len(r) == 200 for r in data["matrix"])
    assert load_instance(out) == generate_instance(200, seed=42)


def test_gen_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["gen", "--n", "30", "--seed", "1", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_one_city(tmp_path):
    out = tmp_path / "one.json"
    assert main(["gen", "--n", "1", "--seed", "0", "--out", str(out)]) == 0
    assert load_instance(out).dist.tolist() == [[0.0]]


@pytest.mark.parametrize("argv", [
    ["gen", "--n", "0", "--seed", "1", "--out", "x.json"],
    ["gen", "--n", "3", "--seed", "1"],
    ["gen", "--n", "three", "--seed", "1", "--out", "x.json"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_run_sa_successive_runs(capsys, inst20, ckpt):
    records = []
    for _ in range(3):
        code, out = run(capsys, "run", "sa", "--instance", inst20, "--name", "o-sa2",
                        "--iters", 3000, "--seed", 1, "--checkpoint-dir", ckpt, "--persist")
        assert code == 0
        records.append(record(out))
    assert [r["run_index"] for r in records] == [1, 2, 3]
    assert [r["resumed"] for r in records] == [False, True, True]
    bests = [r["best_cost"] for r in records]
    assert bests == sorted(bests, reverse=True)
    assert all(r["best_cost"] <= r["initial_cost"] for r in records)
    assert records[1]["initial_cost"] == records[0]["best_cost"]
    assert records[0]["config"]["reset_p"] == DEFAULT_RESET_P == 1 / 1_500_000
    assert records[-1]["total_iterations"] == 9000
    assert len(CheckpointStore(ckpt).list("o-sa2")) == 3


def test_without_persist_no_checkpoint(capsys, inst20, ckpt):
    code, out = run(capsys, "run", "sa", "--instance", inst20, "--name", "nop",
                    "--iters", 100, "--checkpoint-dir", ckpt)
    assert code == 0
    assert CheckpointStore(ckpt).list("nop") == []
    assert record(out)["run_index"] == 1


def test_modified_instance_is_rejected(capsys, inst20, ckpt, tmp_path):
    assert run(capsys, "run", "sa", "--instance", inst20, "--name", "a", "--iters", 100,
               "--checkpoint-dir", ckpt, "--persist")[0] == 0
    other = tmp_path / "other.json"
    other.write_bytes(instance_bytes(generate_instance(20, seed=4)))
    code = main(["run", "sa", "--instance", str(other), "--name", "a", "--iters", "100",
                 "--checkpoint-dir", str(ckpt), "--persist"])
    captured = capsys.readouterr()
    assert code == 3
    assert captured.out == ""
    assert "mismatch" in captured.err
    assert len(CheckpointStore(ckpt).list("a")) == 1
    assert main(["report", "--checkpoint-dir", str(ckpt), "--format", "csv"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 2 and len(rows[0]) == 3


def test_engine_or_strategy_change_is_rejected(capsys, m4_file, ckpt):
    base = ["--instance", m4_file, "--checkpoint-dir", ckpt, "--persist", "--iters-limit", 2]
    assert run(capsys, "run", "bnb", "--name", "b", "--strategy", "dfbef", *base)[0] == 0
    assert run(capsys, "run", "bnb", "--name", "b", "--strategy", "befdf", *base)[0] == 3
    assert run(capsys, "run", "sa", "--name", "b", "--instance", m4_file,
               "--checkpoint-dir", ckpt)[0] == 3


def test_run_bnb_m4(capsys, m4_file, ckpt):
    code, out = run(capsys, "run", "bnb", "--instance", m4_file, "--name", "dfbef-la",
                    "--strategy", "dfbef", "--type", "lookahead", "--checkpoint-dir", ckpt)
    rec = record(out)
    assert code == 0
    assert (rec["best_cost"], rec["status"]) == (10.0, "exhausted")
    assert cycle_cost(M4, rec["best_solution"]) == 10.0


@pytest.mark.parametrize("strategy", ["df", "dfbef", "befdf"])
@pytest.mark.parametrize("bnb_type", ["traditional", "lookahead"])
def test_initial_none_and_identity_agree(capsys, inst_small, ckpt, strategy, bnb_type):
    bests = []
    for initial in ("none", "identity"):
        code, out = run(capsys, "run", "bnb", "--instance", inst_small, "--name", f"x-{initial}",
                        "--strategy", strategy, "--type", bnb_type, "--initial", initial,
                        "--checkpoint-dir", ckpt)
        assert code == 0
        rec = record(out)
        assert rec["status"] == "exhausted"
        bests.append(rec["best_cost"])
    assert bests[0] == bests[1]


@pytest.fixture
def inst_small(tmp_path):
    path = tmp_path / "small.json"
    path.write_bytes(instance_bytes(generate_instance(7, seed=5)))
    return path


def test_bnb_single_traditional_iteration_reports_absent(capsys, inst_small, ckpt):
    code, out = run(capsys, "run", "bnb", "--instance", inst_small, "--name", "t",
                    "--iters-limit", 1, "--type", "traditional", "--initial", "none",
                    "--checkpoint-dir", ckpt)
    rec = record(out)
    assert code == 0
    assert rec["best_cost"] is None and rec["best_solution"] is None
    assert rec["initial_cost"] is None
    assert rec["status"] == "iters-limit"


def test_bnb_initial_from_file(capsys, m4_file, ckpt, tmp_path):
    tour = tmp_path / "tour.json"
    tour.write_text(json.dumps({"tour": [1, 2, 3, 0]}))
    code, out = run(capsys, "run", "bnb", "--instance", m4_file, "--name", "f",
                    "--initial", tour, "--checkpoint-dir", ckpt)
    rec = record(out)
    assert code == 0
    assert rec["best_solution"] == [1, 2, 3, 0] and rec["initial_cost"] == 10.0


@pytest.mark.parametrize("extra", [["--strategy", "bfs"], ["--type", "greedy"],
                                   ["--iters-limit", "0"], ["--time-limit", "-1"],
                                   ["--name", "../escape"]])
def test_bnb_bad_flags(capsys, m4_file, ckpt, extra):
    argv = ["run", "bnb", "--instance", str(m4_file), "--name", "n",
            "--checkpoint-dir", str(ckpt)] + extra
    assert main(argv) == 2


def test_missing_instance_is_usage_error(ckpt, tmp_path):
    assert main(["run", "sa", "--instance", str(tmp_path / "nope.json"), "--name", "n",
                 "--checkpoint-dir", str(ckpt)]) == 2


def test_reported_cost_matches_checkpoint_solution(capsys, inst20, ckpt):
    code, out = run(capsys, "run", "sa", "--instance", inst20, "--name", "s", "--iters", 2000,
                    "--checkpoint-dir", ckpt, "--persist")
    rec = record(out)
    state = json.loads(CheckpointStore(ckpt).load_latest("s").state_blob)
    graph = load_instance(inst20)
    assert state["best"] == rec["best_solution"]
    assert cycle_cost(graph.rows, state["best"]) == rec["best_cost"] == state["best_cost"]


def test_checkpoint_dir_precedence(capsys, inst20, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    env_dir, flag_dir = tmp_path / "env", tmp_path / "flag"
    base = ["run", "sa", "--instance", inst20, "--name", "p", "--iters", 10, "--persist"]
    assert run(capsys, *base)[0] == 0
    assert CheckpointStore(tmp_path / "checkpoints").list("p")
    monkeypatch.setenv("METAOPT_CKPT_DIR", str(env_dir))
    assert run(capsys, *base)[0] == 0
    assert CheckpointStore(env_dir).list("p")
    assert run(capsys, *base, "--checkpoint-dir", flag_dir)[0] == 0
    assert CheckpointStore(flag_dir).list("p")
    assert len(CheckpointStore(env_dir).list("p")) == 1


def test_locked_name_refuses_to_run(capsys, inst20, ckpt):
    with name_lock(ckpt, "busy"):
        code = main(["run", "sa", "--instance", str(inst20), "--name", "busy", "--iters", "10",
                     "--checkpoint-dir", str(ckpt)])
    assert code == 1
    assert "lock" in capsys.readouterr().err


def _seed_records(capsys, ckpt, m4_file, inst20):
    for _ in range(3):
        run(capsys, "run", "sa", "--instance", inst20, "--name", "O-SA2", "--iters", 500,
            "--checkpoint-dir", ckpt, "--persist")
    run(capsys, "run", "bnb", "--instance", inst20, "--name", "DFBeF-LA-BnB2", "--iters-limit", 50,
        "--checkpoint-dir", ckpt, "--persist")


def test_report_csv_shape(capsys, ckpt, m4_file, inst20):
    _seed_records(capsys, ckpt, m4_file, inst20)
    code, out = run(capsys, "report", "--checkpoint-dir", ckpt, "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0
    assert rows[0] == ["Opt. Alg.", "Init.", "Run 1", "Run 2", "Run 3"]
    assert [r[0] for r in rows[1:]] == ["O-SA2", "DFBeF-LA-BnB2"]
    assert rows[2][3:] == ["-", "-"]
    for cell in rows[1][1:]:
        assert len(cell.split(".")[1]) == 3
    # successive runs never get worse
    assert [float(c) for c in rows[1][2:]] == sorted((float(c) for c in rows[1][2:]), reverse=True)


def test_report_md_and_purity(capsys, ckpt, m4_file, inst20):
    _seed_records(capsys, ckpt, m4_file, inst20)
    first = run(capsys, "report", "--checkpoint-dir", ckpt)[1]
    second = run(capsys, "report", "--checkpoint-dir", ckpt)[1]
    assert first == second
    lines = first.strip().splitlines()
    assert lines[0].startswith("| Opt. Alg. | Init. | Run 1")
    assert set(lines[1]) <= set("|-")
    assert len(lines) == 4 and all(line.startswith("|") and line.endswith("|") for line in lines)


def test_report_unknown_name_omitted(capsys, ckpt, m4_file, inst20, caplog):
    _seed_records(capsys, ckpt, m4_file, inst20)
    code, out = run(capsys, "report", "--checkpoint-dir", ckpt, "--format", "csv",
                    "--names", "O-SA2", "ghost")
    assert code == 0
    assert [r[0] for r in csv.reader(io.StringIO(out))] == ["Opt. Alg.", "O-SA2"]
    assert "ghost" in caplog.text


def test_report_empty_store(capsys, ckpt):
    code, out = run(capsys, "report", "--checkpoint-dir", ckpt, "--format", "csv")
    assert code == 0
    assert out == "Opt. Alg.,Init.\n"


def test_report_table_fills_missing_initial():
    rows = report_table([
        {"name": "a", "run_index": 1, "initial_cost": None, "best_cost": None},
        {"name": "a", "run_index": 2, "initial_cost": None, "best_cost": 3.14159},
    ])
    assert rows == [["Opt. Alg.", "Init.", "Run 1", "Run 2"], ["a", "-", "-", "3.142"]]


def test_console_script_exit_codes(tmp_path, m4_file):
    cmd = [sys.executable, "-m", "metaopt.cli"]
    ok = subprocess.run(cmd + ["run", "bnb", "--instance", str(m4_file), "--name", "m",
                               "--checkpoint-dir", str(tmp_path / "c")],
                        capture_output=True, text=True)
    assert ok.returncode == 0
    assert json.loads(ok.stdout)["best_cost"] == 10.0
    bad = subprocess.run(cmd + ["run", "bnb", "--strategy", "nope"], capture_output=True, text=True)
    assert bad.returncode == 2 and bad.stdout == ""
