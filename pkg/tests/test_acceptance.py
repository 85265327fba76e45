"""Acceptance suite: ten go/no-go gates over the whole package.

Each criterion is one test that ends by printing a single PASS line
(visible with ``pytest -v -s``; the pytest result line itself is the
pass/fail verdict).  Oracles here are written independently of the
library code they check: recall and path lengths are recomputed with
plain double loops, Dijkstra, and permutation search.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import random
import time
from pathlib import Path

import pytest
from click.testing import CliRunner

from eqakit.bundles import SUITE_MAX_STEPS, load_suite
from eqakit.cli import main
from eqakit.controllers import HeuristicController
from eqakit.metrics import (
    EpisodeSample,
    JudgeScore,
    e_path_at_d,
    llm_match_score,
    mcq_success,
    path_efficiency_factor,
    recall_at_d,
)
from eqakit.planning import NoPathError, astar, multi_target_route
from eqakit.runtime import run_episode
from eqakit.scene import Pose, SceneObject
from eqakit.tasks import EqaTask, QUESTION_TYPES
from eqakit.trajectory import Trajectory, sample_for_training, verify_trajectory

PIPELINE_SCENES = ("studio-loft", "reading-den", "galley-flat")
CORPUS_SEED = 20260816


# --------------------------------------------------------------------------
# independent oracles
# --------------------------------------------------------------------------


def _oracle_recall(poses, objects, d, hfov):
    """Brute-force double loop; forward vector derived from scratch
    (yaw 0 faces -z, so forward = (sin yaw, 0, -cos yaw))."""
    if not poses:
        return 0.0
    gate = math.cos(hfov / 2.0)
    total = 0.0
    for obj in objects:
        ox, oy, oz = obj.center
        best = 0.0
        for pose in poses:
            px, py, pz = pose.position
            dx, dy, dz = ox - px, oy - py, oz - pz
            dist = math.sqrt(dx * dx + dy * dy + dz * dz)
            if dist > d:
                continue
            if dist > 0.0:
                fx, fy, fz = math.sin(pose.yaw), 0.0, -math.cos(pose.yaw)
                if (fx * dx + fy * dy + fz * dz) / dist < gate:
                    continue
            weight = 1.0 - dist / d
            if weight > best:
                best = weight
        total += best
    return total / len(objects)


def _dijkstra_hops(grid, source):
    """Hop counts from source over free (0) 4-connected cells."""
    rows, cols = len(grid), len(grid[0])
    dist = {source: 0}
    heap = [(0, source)]
    while heap:
        d0, (r, c) = heapq.heappop(heap)
        if d0 > dist.get((r, c), math.inf):
            continue
        for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if 0 <= nr < rows and 0 <= nc < cols and grid[nr][nc] == 0:
                nd = d0 + 1
                if nd < dist.get((nr, nc), math.inf):
                    dist[(nr, nc)] = nd
                    heapq.heappush(heap, (nd, (nr, nc)))
    return dist


def _random_episode(rng, max_poses=50, max_objects=10):
    poses = [
        Pose(
            position=(rng.uniform(-15, 15), rng.uniform(0, 3), rng.uniform(-15, 15)),
            yaw=rng.uniform(0, 2 * math.pi),
        )
        for _ in range(rng.randint(1, max_poses))
    ]
    objects = [
        SceneObject(
            id=f"obj_{i}",
            category="box",
            center=(rng.uniform(-15, 15), rng.uniform(0, 3), rng.uniform(-15, 15)),
            extents=(0.5, 0.5, 0.5),
        )
        for i in range(rng.randint(1, max_objects))
    ]
    return poses, objects


# --------------------------------------------------------------------------
# shared corpus: the CLI pipeline over the three bundled scenes
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """generate -> verify-tasks -> synthesize -> verify-traj -> validate,
    driven through the CLI exactly as a user would."""
    root = tmp_path_factory.mktemp("corpus")
    runner = CliRunner()
    t0 = time.monotonic()

    def invoke(*args):
        result = runner.invoke(main, [str(a) for a in args], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return result

    tasks = root / "tasks.jsonl"
    trajs = root / "trajs.jsonl"
    invoke(
        "generate", *PIPELINE_SCENES,
        "--count", "110", "--mcq-ratio", "0.5", "--seed", CORPUS_SEED,
        "--out", tasks,
    )
    invoke("verify-tasks", tasks, "--out", root / "task_verdicts.jsonl")
    invoke("synthesize", tasks, "--seed", CORPUS_SEED, "--out", trajs)
    invoke("verify-traj", trajs, "--out", root / "traj_verdicts.jsonl")
    invoke("validate", "--tasks", tasks, "--trajectories", trajs)
    elapsed = time.monotonic() - t0

    def records(path):
        docs = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            doc = json.loads(line)
            if "_meta" not in doc:
                docs.append(doc)
        return docs

    return {
        "root": root,
        "tasks_path": tasks,
        "trajs_path": trajs,
        "tasks": records(tasks),
        "task_verdicts": records(root / "task_verdicts.jsonl"),
        "trajs": records(trajs),
        "traj_verdicts": records(root / "traj_verdicts.jsonl"),
        "elapsed_s": elapsed,
    }


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------


def test_criterion_01_recall_matches_brute_force_oracle():
    rng = random.Random(101)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(100):
        poses, objects = _random_episode(rng)
        d = rng.choice((2.0, 5.0, 7.5, 10.0, 15.0))
        hfov = rng.uniform(0.6, 2.8)
        got = recall_at_d(poses, objects, d, hfov)
        want = _oracle_recall(poses, objects, d, hfov)
        worst = max(worst, abs(got - want))
    elapsed = time.monotonic() - t0
    assert worst < 1e-12, f"max abs error {worst}"
    assert elapsed < 5.0, f"took {elapsed:.2f}s"
    print(f"ACCEPTANCE 01 recall oracle equivalence: PASS (err {worst:.2e}, {elapsed:.2f}s)")


def test_criterion_02_e_path_verbatim_and_bound():
    rng = random.Random(202)
    episodes = []
    for i in range(1000):
        poses, objects = _random_episode(rng, max_poses=12, max_objects=4)
        shortest = rng.choice((0.0, rng.uniform(0, 30)))
        traveled = rng.choice((shortest, rng.uniform(0, 40), 0.0))
        episodes.append(
            EpisodeSample(
                episode_id=f"ep-{i:04d}",
                success=rng.random(),
                poses=poses,
                objects=objects,
                shortest_path_m=shortest,
                traveled_m=traveled,
                steps_used=rng.randint(1, 50),
            )
        )
    for d in (5.0, 12.0):
        got = e_path_at_d(episodes, d)
        total = 0.0
        base = 0.0
        for ep in sorted(episodes, key=lambda e: e.episode_id):
            recall = _oracle_recall(ep.poses, ep.objects, d, ep.hfov)
            denom = max(ep.traveled_m, ep.shortest_path_m)
            exponent = 1.0 if denom == 0.0 else ep.shortest_path_m / denom
            total += ep.success * recall * math.exp(exponent)
            base += ep.success * recall
        want = total / len(episodes)
        assert abs(got - want) <= 1e-9, f"d={d}: {got} vs {want}"
        assert got <= math.e * (base / len(episodes)) + 1e-12, f"bound broken at d={d}"
    print("ACCEPTANCE 02 e_path verbatim + upper bound: PASS (1000 tuples)")


def test_criterion_03_planner_matches_dijkstra_and_permutations():
    rng = random.Random(303)
    t0 = time.monotonic()
    for _ in range(50):
        grid = [[1 if rng.random() < 0.3 else 0 for _ in range(64)] for _ in range(64)]
        free = [(r, c) for r in range(64) for c in range(64) if grid[r][c] == 0]
        start, goal = rng.sample(free, 2)
        hops = _dijkstra_hops(grid, start)
        if goal not in hops:
            with pytest.raises(NoPathError):
                astar(grid, 0.5, start, goal)
        else:
            assert astar(grid, 0.5, start, goal).length_m == hops[goal] * 0.5

    for _ in range(20):
        grid = [[1 if rng.random() < 0.25 else 0 for _ in range(16)] for _ in range(16)]
        free = [(r, c) for r in range(16) for c in range(16) if grid[r][c] == 0]
        start = rng.choice(free)
        hops_from_start = _dijkstra_hops(grid, start)
        reachable = [c for c in hops_from_start if c != start]
        if len(reachable) < 4:
            continue
        targets = rng.sample(reachable, rng.randint(1, 4))
        route = multi_target_route(grid, 0.5, start, targets)
        hops = {cell: _dijkstra_hops(grid, cell) for cell in [start, *targets]}
        best = math.inf
        for order in itertools.permutations(targets):
            total, prev = 0, start
            for cell in order:
                total += hops[prev][cell]
                prev = cell
            best = min(best, total)
        assert route.length_m == best * 0.5
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0, f"took {elapsed:.2f}s"
    print(f"ACCEPTANCE 03 planner optimality: PASS ({elapsed:.2f}s)")


def test_criterion_04_pipeline_closure(corpus):
    tasks = corpus["tasks"]
    assert len(tasks) >= 300, f"only {len(tasks)} tasks"
    assert {doc["qtype"] for doc in tasks} == set(QUESTION_TYPES)
    assert all(v["accepted"] for v in corpus["task_verdicts"])
    assert len(corpus["trajs"]) == len(tasks)
    assert all(v["accepted"] for v in corpus["traj_verdicts"])
    assert corpus["elapsed_s"] < 60.0, f"pipeline took {corpus['elapsed_s']:.1f}s"
    print(
        f"ACCEPTANCE 04 pipeline closure: PASS ({len(tasks)} tasks, "
        f"100% accepted, {corpus['elapsed_s']:.1f}s)"
    )


def test_criterion_05_oracle_replay_is_perfect(corpus):
    runner = CliRunner()
    episodes_path = corpus["root"] / "oracle_episodes.jsonl"
    result = runner.invoke(
        main,
        [
            "run", str(corpus["tasks_path"]),
            "--controller", "builtin:oracle",
            "--trajectories", str(corpus["trajs_path"]),
            "--out", str(episodes_path),
        ],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    tasks = {doc["task_id"]: EqaTask.from_dict(doc) for doc in corpus["tasks"]}
    episodes = [
        json.loads(line)
        for line in episodes_path.read_text(encoding="utf-8").splitlines()
        if "_meta" not in json.loads(line)
    ]
    assert len(episodes) == len(tasks)
    mcq_total = mcq_hit = 0
    for doc in episodes:
        task = tasks[doc["task_id"]]
        assert doc["terminated_by"] == "final_answer", doc["task_id"]
        assert abs(doc["traveled_m"] - task.shortest_path_m) <= 1e-9, doc["task_id"]
        factor = path_efficiency_factor(task.shortest_path_m, doc["traveled_m"])
        assert factor == math.e, f"{doc['task_id']}: factor {factor!r}"
        if task.format == "mcq":
            mcq_total += 1
            mcq_hit += mcq_success(doc["answer"], task.answer, task.options)
    assert mcq_total > 0 and mcq_hit == mcq_total
    print(
        f"ACCEPTANCE 05 oracle replay: PASS ({len(episodes)} episodes, "
        f"{mcq_hit}/{mcq_total} MCQ, factor == e)"
    )


def _mutate_r1_teleport(doc):
    for step in doc["steps"]:
        if step["code"].startswith("GoNextPoint") and '"kind":"error"' not in step["observation"]:
            x, y, z = step["pose_after"]["position"]
            step["pose_after"]["position"] = [x + 7.0, y, z + 7.0]
            return True
    return False


def _mutate_r2_unknown_tool(doc):
    for step in doc["steps"][:-1]:
        if step["is_key"]:
            step["code"] = 'FlyToMoon(object="cheese")'
            return True
    return False


def _mutate_r3_broken_syntax(doc):
    for step in doc["steps"][:-1]:
        if step["is_key"]:
            step["code"] = 'ObjectLocation3D(object='
            return True
    return False


def _mutate_r4_drop_final(doc):
    if len(doc["steps"]) < 2:
        return False
    doc["steps"] = doc["steps"][:-1]
    return True


def test_criterion_06_mutations_killed_by_designated_rules(corpus):
    operators = {
        "R1": _mutate_r1_teleport,
        "R2": _mutate_r2_unknown_tool,
        "R3": _mutate_r3_broken_syntax,
        "R4": _mutate_r4_drop_final,
    }
    docs = corpus["trajs"][:50]
    assert len(docs) == 50
    for doc in docs:
        verdict = verify_trajectory(Trajectory.from_dict(doc))
        assert verdict.accepted and not verdict.violations, f"control fails: {doc['task_id']}"
    kills = {rule: 0 for rule in operators}
    for rule, operate in operators.items():
        for doc in docs:
            mutated = json.loads(json.dumps(doc))
            assert operate(mutated), f"{rule} mutation not applicable to {doc['task_id']}"
            verdict = verify_trajectory(Trajectory.from_dict(mutated))
            fired = {v["rule"] for v in verdict.violations}
            assert not verdict.accepted, f"{rule} mutation survived on {doc['task_id']}"
            assert rule in fired, f"{rule} mutation caught by {fired} on {doc['task_id']}"
            kills[rule] += 1
    assert all(count == 50 for count in kills.values())
    print("ACCEPTANCE 06 mutation suite: PASS (4 operators x 50, 100% kill, clean controls)")


def test_criterion_07_sampling_contract(corpus):
    docs = corpus["trajs"][:200]
    assert len(docs) == 200
    first_dump = []
    for doc in docs:
        traj = Trajectory.from_dict(doc)
        kept = sample_for_training(traj, seed=777)
        key = [s.index for s in traj.steps if s.is_key]
        non_key = [s.index for s in traj.steps if not s.is_key]
        kept_idx = [s.index for s in kept]
        assert set(key) <= set(kept_idx)
        assert sum(1 for s in kept if not s.is_key) == min(len(key), len(non_key))
        assert kept_idx == sorted(kept_idx)
        first_dump.append(json.dumps([s.to_dict() for s in kept], sort_keys=True))
    second_dump = [
        json.dumps(
            [s.to_dict() for s in sample_for_training(Trajectory.from_dict(doc), seed=777)],
            sort_keys=True,
        )
        for doc in docs
    ]
    assert first_dump == second_dump
    print("ACCEPTANCE 07 sampling contract: PASS (200 trajectories, byte-stable)")


def test_criterion_08_recall_monotonicity():
    rng = random.Random(808)
    for _ in range(1000):
        poses, objects = _random_episode(rng, max_poses=12, max_objects=4)
        d1 = rng.uniform(0.5, 12.0)
        d2 = d1 + rng.uniform(0.1, 10.0)
        hfov = rng.uniform(0.6, 2.8)
        assert recall_at_d(poses, objects, d1, hfov) <= recall_at_d(poses, objects, d2, hfov) + 1e-12
        cut = rng.randint(0, len(poses))
        assert (
            recall_at_d(poses[:cut], objects, d2, hfov)
            <= recall_at_d(poses, objects, d2, hfov) + 1e-12
        )
    print("ACCEPTANCE 08 recall monotonicity: PASS (1000 episodes, 0 violations)")


def test_criterion_09_heuristic_controller_floor():
    scene, tasks = load_suite()
    assert len(tasks) == 10
    hits = 0
    for task in tasks:
        result = run_episode(scene, task, HeuristicController(), max_steps=SUITE_MAX_STEPS)
        hits += mcq_success(result.answer, task.answer, task.options)
    assert hits >= 8, f"only {hits}/10"
    print(f"ACCEPTANCE 09 heuristic floor: PASS ({hits}/10 with max_steps={SUITE_MAX_STEPS})")


def test_criterion_10_llm_match_arithmetic():
    class ScriptedJudge:
        def __init__(self, sigmas):
            self._it = iter(sigmas)

        def judge(self, predicted, reference):
            return JudgeScore(sigma=next(self._it))

    pairs3 = [("a", "b")] * 3
    assert llm_match_score(pairs3, ScriptedJudge([5, 5, 5])) == 100.0
    assert llm_match_score(pairs3, ScriptedJudge([0, 0, 0])) == 0.0
    got = llm_match_score(pairs3, ScriptedJudge([5, 3, 2]))
    assert abs(got - 66.6667) <= 1e-4
    print("ACCEPTANCE 10 llm-match arithmetic: PASS")
