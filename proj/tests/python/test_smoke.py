import json
from pathlib import Path

import pytest

import etcon

ROOT = Path(__file__).resolve().parents[2]


def test_fixture_grades():
    for line in (ROOT / "data" / "judge_fixtures.jsonl").read_text().splitlines():
        f = json.loads(line)
        grade, _ = etcon.grade(f["question"], f["gold"], f["predicted"])
        assert grade == f["grade"], f["id"]


def test_perfect_rollout():
    text = "<think> the ceo of acme is alice </think> <answer> \\boxed{alice} </answer> <eos>"
    r = etcon.rewards("who is the ceo of acme ?", "alice", text, length=14)
    assert r["total"] == 1.0


def test_extract_and_normalize():
    ex = etcon.extract("so <answer>\\boxed{Paris}</answer> and <answer>\\boxed{The Lima}</answer>")
    assert ex["status"] == "found"
    assert etcon.normalize(ex["candidate"]) == "lima"


def test_advantages():
    assert etcon.group_advantages([1.0, 0.5, 0.0, 0.5]) == pytest.approx([0.5, 0.0, -0.5, 0.0])
    with pytest.raises(ValueError):
        etcon.group_advantages([])


def test_config_errors():
    cfg = etcon.default_config()
    assert cfg["consolidate"]["group_size"] == 8
    assert etcon.effective_config(overrides=["edit.learning_rate=0.5"])["edit"]["learning_rate"] == 0.5
    with pytest.raises(etcon.ConfigError):
        etcon.effective_config(overrides=["edit.nope=1"])


def test_small_run(tmp_path):
    overrides = [
        "world.n_entities=20",
        "edits.n_edits=2",
        "checkpoint_every=1",
        "model.n_layers=2",
        "model.d_model=16",
        "model.n_heads=2",
        "model.d_ffn=32",
        "model.context_len=96",
        "model.band=[1, 1]",
        "pretrain.steps=10",
        "pretrain.warmup_steps=1",
        "edit.max_steps_per_edit=1",
        "edit.epochs=1",
        "consolidate.steps=1",
        "consolidate.group_size=2",
        "consolidate.rollout_batch=1",
        "consolidate.validation_size=1",
        "consolidate.decode.max_new_tokens=4",
        "eval.max_new_tokens=4",
    ]
    out = etcon.run("", tmp_path / "run", overrides)
    assert out["complete"]
    assert [row["edits_done"] for row in out["metrics"]] == [0, 1, 2]
    csv = (tmp_path / "run" / "report.csv").read_text().splitlines()
    assert csv[0] == "stage,edits_done,reliability,generalization,locality,general_capability"
    assert len(csv) == 4

    m = etcon.Model.load(str(tmp_path / "run" / "checkpoints" / "ckpt_2"), str(tmp_path / "run" / "vocab.json"))
    assert m.parameter_count > 0
    assert isinstance(m.answer("who is the ceo of acme ?", 4), str)
