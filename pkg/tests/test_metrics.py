from __future__ import annotations

import math
import random

import numpy as np
import pytest

from eqakit.metrics import (
    EpisodeSample,
    EvalReport,
    JudgeScore,
    MetricConfig,
    MetricError,
    TokenF1Judge,
    build_report,
    e_path_at_d,
    llm_match_score,
    mcq_success,
    path_efficiency_factor,
    recall_at_d,
)
from eqakit.scene import Pose, SceneObject


def obj(center, oid="o0"):
    return SceneObject(id=oid, category="box", center=center, extents=(0.2, 0.2, 0.2))


# --------------------------------------------------------------------------
# independent recall oracle: vectorized, written from the formula directly
# --------------------------------------------------------------------------


def oracle_recall(poses, objects, d, hfov):
    positions = np.array([p.position for p in poses])  # (T, 3)
    yaws = np.array([p.yaw for p in poses])
    forwards = np.stack([np.sin(yaws), np.zeros_like(yaws), -np.cos(yaws)], axis=1)
    centers = np.array([o.center for o in objects])  # (J, 3)
    diff = centers[None, :, :] - positions[:, None, :]  # (T, J, 3)
    dist = np.linalg.norm(diff, axis=2)  # (T, J)
    with np.errstate(divide="ignore", invalid="ignore"):
        cosang = np.einsum("tjk,tk->tj", diff, forwards) / np.where(dist == 0, 1.0, dist)
    gate = (dist <= d) & ((cosang >= math.cos(hfov / 2.0)) | (dist == 0))
    weight = np.where(gate, 1.0 - dist / d, 0.0)
    return float(weight.max(axis=0).mean())


def random_episode(rng, n_poses, n_objects):
    poses = [
        Pose(
            position=(rng.uniform(-10, 10), rng.uniform(0, 2), rng.uniform(-10, 10)),
            yaw=rng.uniform(0, 2 * math.pi),
        )
        for _ in range(n_poses)
    ]
    objects = [
        obj(
            (rng.uniform(-12, 12), rng.uniform(0, 2.5), rng.uniform(-12, 12)),
            oid=f"o{k}",
        )
        for k in range(n_objects)
    ]
    return poses, objects


def test_recall_frozen_single_pose_example():
    # 4 m dead ahead with D = 5: weight 1 - 4/5 = 0.2
    poses = [Pose(position=(0.0, 1.5, 0.0), yaw=0.0)]
    assert recall_at_d(poses, [obj((0.0, 1.5, -4.0))], 5.0, math.pi / 2) == pytest.approx(0.2)


def test_recall_zero_when_behind():
    poses = [Pose(position=(0.0, 1.5, 0.0), yaw=0.0)]
    assert recall_at_d(poses, [obj((0.0, 1.5, 4.0))], 5.0, math.pi / 2) == 0.0


def test_recall_zero_distance_counts_full():
    poses = [Pose(position=(1.0, 1.0, 1.0), yaw=0.3)]
    assert recall_at_d(poses, [obj((1.0, 1.0, 1.0))], 5.0, math.pi / 2) == 1.0


def test_recall_best_pose_wins():
    poses = [
        Pose(position=(0.0, 1.5, 0.0), yaw=0.0),  # 4 m away -> 0.2
        Pose(position=(0.0, 1.5, -3.0), yaw=0.0),  # 1 m away -> 0.8
    ]
    assert recall_at_d(poses, [obj((0.0, 1.5, -4.0))], 5.0, math.pi / 2) == pytest.approx(0.8)


def test_recall_mean_over_objects():
    poses = [Pose(position=(0.0, 1.5, 0.0), yaw=0.0)]
    objects = [obj((0.0, 1.5, -4.0), "a"), obj((0.0, 1.5, 4.0), "b")]  # 0.2 and 0
    assert recall_at_d(poses, objects, 5.0, math.pi / 2) == pytest.approx(0.1)


def test_recall_requires_objects():
    with pytest.raises(MetricError):
        recall_at_d([Pose(position=(0, 0, 0), yaw=0)], [], 5.0)


def test_recall_matches_oracle_on_random_episodes():
    rng = random.Random(99)
    for _ in range(40):
        poses, objects = random_episode(rng, rng.randint(1, 20), rng.randint(1, 6))
        d = rng.choice([5.0, 10.0, 15.0])
        got = recall_at_d(poses, objects, d, math.pi / 2)
        want = oracle_recall(poses, objects, d, math.pi / 2)
        assert abs(got - want) < 1e-12


def test_recall_monotone_in_d():
    rng = random.Random(5)
    poses, objects = random_episode(rng, 12, 4)
    values = [recall_at_d(poses, objects, d, math.pi / 2) for d in (5.0, 10.0, 15.0)]
    assert values[0] <= values[1] <= values[2]


# --------------------------------------------------------------------------
# path efficiency / e_path
# --------------------------------------------------------------------------


def test_factor_is_e_on_shortest_route():
    assert path_efficiency_factor(4.0, 4.0) == math.e
    assert path_efficiency_factor(0.0, 0.0) == math.e


def test_factor_decays_with_detours_but_stays_above_one():
    f = path_efficiency_factor(4.0, 8.0)
    assert 1.0 < f < math.e
    assert f == pytest.approx(math.exp(0.5))


def test_e_path_frozen_example():
    # success 1, recall 0.2 (4 m sighting at D=5), l=4, p=6
    ep = EpisodeSample(
        episode_id="e0",
        success=1.0,
        poses=[Pose(position=(0.0, 1.5, 0.0), yaw=0.0)],
        objects=[obj((0.0, 1.5, -4.0))],
        shortest_path_m=4.0,
        traveled_m=6.0,
        steps_used=9,
    )
    value = e_path_at_d([ep], 5.0)
    assert value == pytest.approx(0.2 * math.exp(4.0 / 6.0), abs=1e-12)
    assert value == pytest.approx(0.38954, abs=1e-4)


def test_e_path_requires_episodes():
    with pytest.raises(MetricError):
        e_path_at_d([], 5.0)


def test_e_path_verbatim_formula_random_tuples():
    # formula-level check against an independently written evaluation
    rng = random.Random(31337)
    for _ in range(200):
        success = rng.choice([0.0, 0.2, 0.5, 1.0])
        l = rng.uniform(0.0, 30.0)
        p = l + rng.uniform(0.0, 20.0)
        if rng.random() < 0.1:
            l = p = 0.0
        denom = max(p, l)
        want = success * math.exp(1.0 if denom == 0 else l / denom)
        got = success * path_efficiency_factor(l, p)
        assert abs(got - want) < 1e-12


# --------------------------------------------------------------------------
# answer scoring
# --------------------------------------------------------------------------


def test_mcq_success_normalizes():
    assert mcq_success("  Blue ", "blue", ["blue", "red"]) == 1
    assert mcq_success("BLUE", "blue", ["blue", "red"]) == 1
    assert mcq_success("light  blue", "light blue", ["light blue", "red"]) == 1
    assert mcq_success("red", "blue", ["blue", "red"]) == 0
    assert mcq_success(None, "blue", ["blue", "red"]) == 0


def test_mcq_gold_must_be_an_option():
    with pytest.raises(MetricError):
        mcq_success("x", "green", ["blue", "red"])


def test_judge_scores():
    judge = TokenF1Judge()
    assert judge.judge("the red chair", "The  Red Chair").sigma == 5
    assert judge.judge("red chair", "red chair please").sigma == 4
    assert judge.judge("entirely wrong", "blue sofa").sigma == 0


def test_judge_score_validation():
    with pytest.raises(MetricError):
        JudgeScore(sigma=6)
    with pytest.raises(MetricError):
        JudgeScore(sigma=-1)


class _FixedJudge:
    def __init__(self, sigmas):
        self.sigmas = list(sigmas)
        self.i = 0

    def judge(self, predicted, reference):
        s = self.sigmas[self.i]
        self.i += 1
        return JudgeScore(sigma=s)


def test_llm_match_frozen_values():
    pairs = [("a", "a")] * 3
    assert llm_match_score(pairs, _FixedJudge([5, 5, 5])) == pytest.approx(100.0)
    assert llm_match_score(pairs, _FixedJudge([0, 0, 0])) == pytest.approx(0.0)
    assert llm_match_score(pairs, _FixedJudge([5, 3, 2])) == pytest.approx(66.6667, abs=1e-4)


def test_llm_match_requires_pairs():
    with pytest.raises(MetricError):
        llm_match_score([])


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


def _sample(i, success, l, p):
    rng = random.Random(i)
    poses, objects = random_episode(rng, 8, 3)
    return EpisodeSample(
        episode_id=f"ep{i:03d}",
        success=success,
        poses=poses,
        objects=objects,
        shortest_path_m=l,
        traveled_m=p,
        steps_used=10 + i,
    )


def test_report_shape_and_bound():
    episodes = [_sample(i, 1.0 if i % 2 else 0.0, 4.0, 6.0) for i in range(10)]
    report = build_report(episodes, MetricConfig(d_values=(5.0, 10.0, 15.0)))
    data = report.to_dict()
    assert set(data) == {"n", "success_rate", "recall", "e_path", "avg_steps", "avg_traveled_m"}
    assert set(data["recall"]) == {"5", "10", "15"}
    assert set(data["e_path"]) == {"5", "10", "15"}
    assert data["n"] == 10
    assert data["success_rate"] == pytest.approx(50.0)
    for key in ("5", "10", "15"):
        assert data["e_path"][key] <= math.e * data["recall"][key] + 1e-9


def test_report_order_independent():
    episodes = [_sample(i, 1.0, 4.0, 6.0) for i in range(6)]
    a = build_report(episodes)
    b = build_report(list(reversed(episodes)))
    assert a.to_dict() == b.to_dict()


def test_report_rejects_empty():
    with pytest.raises(MetricError):
        build_report([])


def test_metric_config_validation():
    with pytest.raises(MetricError):
        MetricConfig(d_values=())
    with pytest.raises(MetricError):
        MetricConfig(d_values=(5.0, -1.0))
