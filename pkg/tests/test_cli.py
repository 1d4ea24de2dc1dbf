import json
import os
import subprocess
import sys

import pytest

from laser.cli import EXIT_CAP, EXIT_OK, EXIT_PARSE, main
from laser.fact_db import FactDatabase, PredicateDecl, Schema

from conftest import fixture_path

DB = fixture_path("climb_walk.json")
SPEC = fixture_path("climb_walk.spec")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_check(capsys):
    code, out = run(capsys, "check", DB, SPEC)
    assert code == EXIT_OK
    assert out["score"] == pytest.approx(0.72, abs=1e-12)
    assert out["proofs"]


def test_oracle(capsys):
    code, out = run(capsys, "--k", "0", "oracle", DB, SPEC)
    assert code == EXIT_OK
    assert out["delta"] < 1e-9
    assert out["score"] == pytest.approx(0.72)


def test_gradcheck(capsys):
    code, out = run(capsys, "gradcheck", DB, SPEC)
    assert code == EXIT_OK and out["ok"]
    grads = {row["fact"]: row["analytic"] for row in out["gradients"]}
    assert grads == {0: pytest.approx(0.8), 1: pytest.approx(0.9)}


def test_tautology_has_zero_gradients(capsys):
    code, out = run(capsys, "gradcheck", DB, fixture_path("tautology.spec"))
    assert code == EXIT_OK
    assert all(abs(row["analytic"]) < 1e-12 for row in out["gradients"])


def test_malformed_spec_exit_code(capsys):
    code, out = run(capsys, "check", DB, fixture_path("malformed.spec"))
    assert code == EXIT_PARSE and out is None


def test_oracle_cap_exit_code(capsys, tmp_path):
    schema = Schema([PredicateDecl("p", 1)])
    db = FactDatabase.from_clip_scores(schema, ["a"], 30,
                                       {("p", t, ("a",)): 0.5 for t in range(1, 31)})
    path = tmp_path / "big.json"
    path.write_text(db.dumps())
    spec = tmp_path / "f.spec"
    spec.write_text("F p(a)\n")
    assert main(["oracle", str(path), str(spec)]) == EXIT_CAP
    assert main(["gradcheck", str(path), str(spec)]) == EXIT_CAP


def _pipeline(root, capsys):
    gen_cfg = root / "gen.json"
    gen_cfg.write_text(json.dumps({"regime": "mugen_like", "num_episodes": 6, "seed": 1,
                                   "m": 4}))
    train_cfg = root / "train.json"
    train_cfg.write_text(json.dumps({"epochs": 2, "batch_size": 3}))
    assert main(["gen", str(gen_cfg), "--output", str(root / "data")]) == EXIT_OK
    assert main(["train", str(root / "data"), "--config", str(train_cfg),
                 "--output", str(root / "model")]) == EXIT_OK
    assert main(["eval", str(root / "data"), "--checkpoint",
                 str(root / "model" / "checkpoint.json"), "--task", "retrieval",
                 "--output", str(root / "eval.json")]) == EXIT_OK
    capsys.readouterr()


def _tree(root):
    files = {}
    for dirpath, _, names in os.walk(root):
        for n in names:
            path = os.path.join(dirpath, n)
            with open(path, "rb") as fh:
                files[os.path.relpath(path, root)] = fh.read()
    return files


def test_pipeline_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        _pipeline(tmp_path / name, capsys)
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a.keys() == b.keys() and "model/checkpoint.json" in a
    assert a == b


def test_single_episode_training_reduces_loss(tmp_path, capsys):
    gen_cfg = tmp_path / "gen.json"
    gen_cfg.write_text(json.dumps({"regime": "bn20_like", "num_episodes": 1, "seed": 3}))
    train_cfg = tmp_path / "train.json"
    train_cfg.write_text(json.dumps({"epochs": 20, "learning_rate": 0.01}))
    main(["gen", str(gen_cfg), "--output", str(tmp_path / "data")])
    capsys.readouterr()
    code, out = run(capsys, "train", str(tmp_path / "data"), "--config", str(train_cfg),
                    "--output", str(tmp_path / "model"))
    assert code == EXIT_OK
    assert out["final_loss"] < out["initial_loss"]


def test_ground_truth_retrieval(tmp_path, capsys):
    gen_cfg = tmp_path / "gen.json"
    gen_cfg.write_text(json.dumps({"regime": "mugen_like", "num_episodes": 60, "seed": 2}))
    main(["gen", str(gen_cfg), "--output", str(tmp_path / "data")])
    capsys.readouterr()
    code, out = run(capsys, "eval", str(tmp_path / "data"), "--task", "retrieval")
    assert code == EXIT_OK
    assert out["spec_retrieval_acc"] >= 0.8 and out["video_retrieval_acc"] >= 0.8


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "laser", "check", DB, SPEC],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["score"] == pytest.approx(0.72)
