"""End-to-end tests for the command-line pipeline.

Each stage is exercised through click's CliRunner against a small scene
written to a temp directory, plus the bundled scenes where convenient.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest
from click.testing import CliRunner

from eqakit.cli import RunConfig, main
from eqakit.tasks import EqaTask
from eqakit.trajectory import Trajectory, export_sft, sample_for_training

from conftest import make_scene_dict

PIN = "2026-08-16T00:00:00Z"


def _invoke(*args: str) -> object:
    runner = CliRunner()
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


def _read_records(path: Path) -> list[dict]:
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        doc = json.loads(line)
        if "_meta" not in doc:
            records.append(doc)
    return records


def _read_meta(path: Path) -> dict:
    first = path.read_text(encoding="utf-8").splitlines()[0]
    return json.loads(first)["_meta"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory) -> Path:
    """One shared pipeline run: scene dir, tasks, trajectories."""
    root = tmp_path_factory.mktemp("cli")
    scene_dir = root / "scenes"
    scene_dir.mkdir()
    (scene_dir / "testbox.json").write_text(json.dumps(make_scene_dict()), encoding="utf-8")

    result = _invoke(
        "generate",
        scene_dir / "testbox.json",
        "--count", "8",
        "--mcq-ratio", "0.5",
        "--seed", "11",
        "--out", root / "tasks.jsonl",
        "--generated-at", PIN,
    )
    assert result.exit_code == 0, result.output
    result = _invoke(
        "synthesize",
        root / "tasks.jsonl",
        "--scene-dir", scene_dir,
        "--seed", "11",
        "--out", root / "trajs.jsonl",
        "--generated-at", PIN,
    )
    assert result.exit_code == 0, result.output
    return root


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------


def test_generate_writes_meta_header_first(workdir):
    lines = (workdir / "tasks.jsonl").read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    assert set(header) == {"_meta"}
    meta = header["_meta"]
    assert meta["kind"] == "tasks"
    assert meta["generated_at"] == PIN
    assert meta["seed"] == 11
    assert meta["count"] == len(lines) - 1 == 8


def test_generate_records_parse_as_tasks(workdir):
    records = _read_records(workdir / "tasks.jsonl")
    tasks = [EqaTask.from_dict(doc) for doc in records]
    assert len(tasks) == 8
    assert all(task.scene_id == "testbox" for task in tasks)


def test_generate_is_byte_stable_for_pinned_timestamp(workdir, tmp_path):
    out = tmp_path / "again.jsonl"
    result = _invoke(
        "generate",
        workdir / "scenes" / "testbox.json",
        "--count", "8",
        "--mcq-ratio", "0.5",
        "--seed", "11",
        "--out", out,
        "--generated-at", PIN,
    )
    assert result.exit_code == 0
    assert out.read_bytes() == (workdir / "tasks.jsonl").read_bytes()


def test_generate_accepts_bundled_scene_ids(tmp_path):
    out = tmp_path / "box.jsonl"
    result = _invoke(
        "generate", "boxroom", "--count", "4", "--seed", "1",
        "--out", out, "--generated-at", PIN,
    )
    assert result.exit_code == 0
    assert len(_read_records(out)) == 4


def test_generate_rejects_unknown_scene(tmp_path):
    result = _invoke("generate", "nowhere", "--count", "1", "--out", tmp_path / "x.jsonl")
    assert result.exit_code != 0
    assert "neither a file nor a bundled id" in result.output


def test_generate_without_scenes_is_a_usage_error(tmp_path):
    result = _invoke("generate", "--count", "1", "--out", tmp_path / "x.jsonl")
    assert result.exit_code != 0
    assert "no scenes" in result.output


def test_generate_reads_config_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenes": ["boxroom"], "seed": 3, "task": {"count": 2}}))
    out = tmp_path / "from_config.jsonl"
    result = _invoke("generate", "--config", cfg, "--out", out, "--generated-at", PIN)
    assert result.exit_code == 0, result.output
    assert len(_read_records(out)) == 2
    assert _read_meta(out)["seed"] == 3


# --------------------------------------------------------------------------
# verify stages
# --------------------------------------------------------------------------


def test_verify_tasks_accepts_generated_tasks(workdir, tmp_path):
    out = tmp_path / "verdicts.jsonl"
    result = _invoke(
        "verify-tasks", workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--out", out, "--generated-at", PIN,
    )
    assert result.exit_code == 0, result.output
    verdicts = _read_records(out)
    assert len(verdicts) == 8
    assert all(v["accepted"] for v in verdicts)
    assert "8/8 tasks accepted" in result.output


def test_verify_tasks_exits_nonzero_on_rejection(workdir, tmp_path):
    records = _read_records(workdir / "tasks.jsonl")
    records[0]["question"] = "Is the moonbeam generator humming?"
    bad = tmp_path / "bad_tasks.jsonl"
    with open(bad, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": {"kind": "tasks"}}) + "\n")
        for doc in records:
            fh.write(json.dumps(doc) + "\n")
    result = _invoke(
        "verify-tasks", bad,
        "--scene-dir", workdir / "scenes",
        "--out", tmp_path / "verdicts.jsonl",
    )
    assert result.exit_code == 1


def test_verify_traj_accepts_synthesized(workdir, tmp_path):
    out = tmp_path / "tverdicts.jsonl"
    result = _invoke("verify-traj", workdir / "trajs.jsonl", "--out", out, "--generated-at", PIN)
    assert result.exit_code == 0, result.output
    verdicts = _read_records(out)
    assert len(verdicts) == 8
    assert all(v["accepted"] for v in verdicts)


def test_verify_traj_exits_nonzero_on_tampered_answer(workdir, tmp_path):
    docs = _read_records(workdir / "trajs.jsonl")
    final = docs[0]["steps"][-1]
    final["code"] = 'FinalAnswer(answer="wrong on purpose")'
    bad = tmp_path / "bad_trajs.jsonl"
    with open(bad, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc) + "\n")
    result = _invoke("verify-traj", bad, "--out", tmp_path / "v.jsonl")
    assert result.exit_code == 1


# --------------------------------------------------------------------------
# sample / export-sft
# --------------------------------------------------------------------------


def test_sample_keeps_key_steps_and_counts(workdir, tmp_path):
    out = tmp_path / "sampled.jsonl"
    result = _invoke(
        "sample", workdir / "trajs.jsonl", "--seed", "5", "--out", out, "--generated-at", PIN
    )
    assert result.exit_code == 0, result.output
    originals = {t.task_id: t for t in map(Trajectory.from_dict, _read_records(workdir / "trajs.jsonl"))}
    for doc in _read_records(out):
        sampled = Trajectory.from_dict(doc)
        source = originals[sampled.task_id]
        expected = sample_for_training(source, seed=5)
        assert [s.index for s in sampled.steps] == [s.index for s in expected]
        key_indices = {s.index for s in source.steps if s.is_key}
        assert key_indices <= {s.index for s in sampled.steps}
        assert doc["sampling"]["source_steps"] == len(source.steps)


def test_export_sft_matches_library_export(workdir, tmp_path):
    out = tmp_path / "sft.jsonl"
    result = _invoke("export-sft", workdir / "trajs.jsonl", "--out", out, "--generated-at", PIN)
    assert result.exit_code == 0, result.output
    records = _read_records(out)
    expected: list[dict] = []
    for doc in _read_records(workdir / "trajs.jsonl"):
        expected.extend(export_sft(Trajectory.from_dict(doc)))
    # JSON round-trip the expectation so tuples/floats compare like-for-like
    assert records == json.loads(json.dumps(expected))
    assert all(r["meta"]["answer_supervision"] == "inline_final_answer_call_only" for r in records)


def test_export_sft_with_seed_matches_sampler(workdir, tmp_path):
    out = tmp_path / "sft_sampled.jsonl"
    result = _invoke(
        "export-sft", workdir / "trajs.jsonl", "--seed", "5", "--out", out, "--generated-at", PIN
    )
    assert result.exit_code == 0
    expected = sum(
        len(sample_for_training(Trajectory.from_dict(doc), seed=5))
        for doc in _read_records(workdir / "trajs.jsonl")
    )
    assert len(_read_records(out)) == expected


# --------------------------------------------------------------------------
# run / eval
# --------------------------------------------------------------------------


def test_run_oracle_with_trajectories_is_perfect(workdir, tmp_path):
    episodes = tmp_path / "episodes.jsonl"
    result = _invoke(
        "run", workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--controller", "builtin:oracle",
        "--trajectories", workdir / "trajs.jsonl",
        "--out", episodes, "--generated-at", PIN,
    )
    assert result.exit_code == 0, result.output
    assert "8/8 episodes reached a final answer" in result.output

    report_path = tmp_path / "report.json"
    result = _invoke(
        "eval", episodes, workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--d", "5,10",
        "--out", report_path,
    )
    assert result.exit_code == 0, result.output
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert set(report) == {"n", "success_rate", "recall", "e_path", "avg_steps", "avg_traveled_m"}
    assert report["n"] == 8
    assert report["success_rate"] == 100.0
    assert set(report["e_path"]) == {"5", "10"}


def test_run_oracle_missing_trajectory_fails(workdir, tmp_path):
    docs = _read_records(workdir / "trajs.jsonl")
    partial = tmp_path / "partial.jsonl"
    with open(partial, "w", encoding="utf-8") as fh:
        for doc in docs[:-1]:
            fh.write(json.dumps(doc) + "\n")
    result = _invoke(
        "run", workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--controller", "builtin:oracle",
        "--trajectories", partial,
        "--out", tmp_path / "x.jsonl",
    )
    assert result.exit_code != 0
    assert "no trajectory for task" in result.output


def test_run_oracle_synthesizes_when_no_trajectory_file(workdir, tmp_path):
    result = _invoke(
        "run", workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--controller", "builtin:oracle",
        "--seed", "11",
        "--out", tmp_path / "episodes.jsonl", "--generated-at", PIN,
    )
    assert result.exit_code == 0, result.output
    assert "8/8 episodes reached a final answer" in result.output


def test_run_heuristic_and_eval(workdir, tmp_path):
    episodes = tmp_path / "episodes.jsonl"
    result = _invoke(
        "run", workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--max-steps", "40",
        "--out", episodes, "--generated-at", PIN,
    )
    assert result.exit_code == 0, result.output
    report_path = tmp_path / "report.json"
    result = _invoke(
        "eval", episodes, workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--out", report_path,
    )
    assert result.exit_code == 0, result.output
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert set(report["e_path"]) == {"5", "10", "15"}
    assert report["success_rate"] >= 50.0


def test_run_with_wire_controller_subprocess(workdir, tmp_path):
    script = tmp_path / "ctl.py"
    script.write_text(
        "import json, sys\n"
        "for line in sys.stdin:\n"
        "    req = json.loads(line)\n"
        "    n = len(req['history'])\n"
        "    if n < 1:\n"
        "        doc = {'thought': 'look around', 'code': 'GoNextPoint(direction=\"turn_left\")'}\n"
        "    else:\n"
        "        doc = {'thought': 'guessing', 'code': 'FinalAnswer(answer=\"wire\")'}\n"
        "    print(json.dumps(doc), flush=True)\n",
        encoding="utf-8",
    )
    episodes = tmp_path / "episodes.jsonl"
    result = _invoke(
        "run", workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--controller", f"exec:{sys.executable} -u {script}",
        "--out", episodes, "--generated-at", PIN,
    )
    assert result.exit_code == 0, result.output
    records = _read_records(episodes)
    assert all(r["terminated_by"] == "final_answer" for r in records)
    assert all(r["answer"] == "wire" for r in records)
    assert all(r["steps_used"] == 2 for r in records)


def test_eval_rejects_episode_for_unknown_task(workdir, tmp_path):
    episodes = tmp_path / "episodes.jsonl"
    result = _invoke(
        "run", workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--controller", "builtin:oracle",
        "--trajectories", workdir / "trajs.jsonl",
        "--out", episodes,
    )
    assert result.exit_code == 0
    docs = _read_records(episodes)
    docs[0]["task_id"] = "phantom-task"
    with open(episodes, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc) + "\n")
    result = _invoke(
        "eval", episodes, workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--out", tmp_path / "r.json",
    )
    assert result.exit_code != 0
    assert "unknown task" in result.output


# --------------------------------------------------------------------------
# stats / validate
# --------------------------------------------------------------------------


def test_stats_reports_corpus_shape(workdir, tmp_path):
    out = tmp_path / "stats.json"
    result = _invoke("stats", workdir / "trajs.jsonl", "--out", out)
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert doc["n"] == 8
    assert doc["avg_steps"] > 0
    assert doc["avg_length_m"] > 0
    assert "GoNextPoint" in doc["tool_histogram"]
    assert "FinalAnswer" in doc["tool_histogram"]
    assert sum(doc["steps_histogram"].values()) == 8
    # tool calls exclude motion and the closing answer
    assert doc["avg_tool_calls"] < doc["avg_steps"]


def test_validate_clean_corpus_passes(workdir, tmp_path):
    out = tmp_path / "validation.json"
    result = _invoke(
        "validate",
        "--tasks", workdir / "tasks.jsonl",
        "--trajectories", workdir / "trajs.jsonl",
        "--scene-dir", workdir / "scenes",
        "--out", out,
    )
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert doc["n_failures"] == 0
    assert doc["n_tasks"] == 8
    assert doc["n_trajectories"] == 8


def test_validate_reports_line_numbers_for_faults(workdir, tmp_path):
    task_docs = _read_records(workdir / "tasks.jsonl")
    task_docs[1]["related_object_ids"] = ["ghost_9"]
    bad_tasks = tmp_path / "tasks.jsonl"
    with open(bad_tasks, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": {"kind": "tasks"}}) + "\n")
        for doc in task_docs:
            fh.write(json.dumps(doc) + "\n")

    traj_docs = _read_records(workdir / "trajs.jsonl")
    traj_docs[0]["steps"][0]["observation"] = '{"kind":"view","payload":{"forged":true}}'
    bad_trajs = tmp_path / "trajs.jsonl"
    with open(bad_trajs, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": {"kind": "trajectories"}}) + "\n")
        for doc in traj_docs:
            fh.write(json.dumps(doc) + "\n")
        fh.write("{not json at all\n")

    out = tmp_path / "validation.json"
    result = _invoke(
        "validate",
        "--tasks", bad_tasks,
        "--trajectories", bad_trajs,
        "--scene-dir", workdir / "scenes",
        "--out", out,
    )
    assert result.exit_code == 1
    doc = json.loads(out.read_text(encoding="utf-8"))
    problems = {(f["file"], f["line"], f["problem"].split(":")[0]) for f in doc["failures"]}
    # meta line is line 1, so the corrupted second task sits on line 3
    assert (str(bad_tasks), 3, "unknown-object") in problems
    assert (str(bad_trajs), 2, "replay-mismatch") in problems
    assert (str(bad_trajs), len(traj_docs) + 2, "malformed-json") in problems


def test_validate_flags_trajectory_for_unknown_task(workdir, tmp_path):
    traj_docs = _read_records(workdir / "trajs.jsonl")
    traj_docs[0]["task_id"] = "phantom-task"
    bad = tmp_path / "trajs.jsonl"
    with open(bad, "w", encoding="utf-8") as fh:
        for doc in traj_docs:
            fh.write(json.dumps(doc) + "\n")
    result = _invoke(
        "validate",
        "--tasks", workdir / "tasks.jsonl",
        "--trajectories", bad,
        "--scene-dir", workdir / "scenes",
    )
    assert result.exit_code == 1
    assert "unknown-task" in result.output


# --------------------------------------------------------------------------
# config object
# --------------------------------------------------------------------------


def test_run_config_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown config fields"):
        RunConfig.from_dict({"speed": 9})


def test_run_config_rejects_bad_threshold():
    with pytest.raises(ValueError, match="threshold"):
        RunConfig.from_dict({"thresholds": {"llm": 1.5}})
    with pytest.raises(ValueError, match="unknown threshold"):
        RunConfig.from_dict({"thresholds": {"vibes": 0.5}})


def test_run_config_rejects_bad_controller_spec():
    with pytest.raises(ValueError):
        RunConfig.from_dict({"controller": "carrier-pigeon:coop"})


def test_run_config_parses_metric_block():
    cfg = RunConfig.from_dict({"metric": {"d_values": [3, 7], "hfov_deg": 60}})
    assert cfg.metric.d_values == (3.0, 7.0)
    assert abs(cfg.metric.hfov - 1.0471975511965976) < 1e-12


def test_bad_config_file_is_a_clean_cli_error(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{broken", encoding="utf-8")
    result = _invoke("generate", "boxroom", "--config", cfg, "--out", tmp_path / "x.jsonl")
    assert result.exit_code != 0
    assert "bad config" in result.output


def test_bad_d_values_are_a_clean_cli_error(workdir, tmp_path):
    episodes = tmp_path / "episodes.jsonl"
    _invoke(
        "run", workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--controller", "builtin:oracle",
        "--trajectories", workdir / "trajs.jsonl",
        "--out", episodes,
    )
    result = _invoke(
        "eval", episodes, workdir / "tasks.jsonl",
        "--scene-dir", workdir / "scenes",
        "--d", "5,banana",
        "--out", tmp_path / "r.json",
    )
    assert result.exit_code != 0
    assert "bad --d value" in result.output
