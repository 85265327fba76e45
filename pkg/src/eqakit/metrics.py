"""Evaluation metrics: path-weighted recall, path efficiency, answer scores.

recall@D rewards an episode for getting close to each related object while
it was inside the view cone: per object the best pose contributes
``1 - d/D`` (zero if never both near and facing), and the episode recall
is the mean over objects.

e_path@D multiplies per-episode success by recall@D and by the path
efficiency factor ``exp(l / max(p, l))`` where l is the shortest-route
length and p the traveled length; the factor lives in (1, e] and equals e
exactly when the agent travels the shortest route (the degenerate
l = p = 0 case is defined as e).  The reported metric is the mean over
episodes, reduced in sorted-episode-id order so reports are byte-stable.

LLM-Match maps judged answer quality sigma in {0..5} to a percentage:
mean(sigma / 5) * 100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Protocol, Sequence

from .language import normalize_answer, token_f1
from .scene import Pose, SceneObject, forward_vector

DEFAULT_D_VALUES = (5.0, 10.0, 15.0)


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricConfig:
    d_values: tuple[float, ...] = DEFAULT_D_VALUES
    hfov: float = math.pi / 2

    def __post_init__(self) -> None:
        if not self.d_values or any(d <= 0 for d in self.d_values):
            raise MetricError("d_values must be positive and non-empty")


@dataclass(frozen=True)
class JudgeScore:
    """A judged answer: integer quality sigma in 0..5, optional note."""

    sigma: int
    note: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.sigma, int) or not 0 <= self.sigma <= 5:
            raise MetricError(f"sigma must be an integer in 0..5, got {self.sigma!r}")


class MatchJudge(Protocol):
    def judge(self, predicted: str, reference: str) -> JudgeScore: ...


# --------------------------------------------------------------------------
# recall
# --------------------------------------------------------------------------


def recall_at_d(
    poses: Sequence[Pose],
    objects: Sequence[SceneObject],
    d: float,
    hfov: float = math.pi / 2,
) -> float:
    """Mean over objects of the best distance-weighted sighting.

    An object's best pose is the one minimizing its distance among poses
    where it passed both gates (within ``d`` and inside the hfov cone);
    it contributes ``1 - dist/d``, or 0 if no pose qualifies.  A pose
    coincident with the object center counts as a full-weight sighting.
    """
    if d <= 0:
        raise MetricError("d must be positive")
    if not objects:
        raise MetricError("recall needs at least one object")
    if not poses:
        return 0.0
    cos_gate = math.cos(hfov / 2.0)
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
                fx, fy, fz = forward_vector(pose.yaw)
                if (fx * dx + fy * dy + fz * dz) / dist < cos_gate:
                    continue
            weight = 1.0 - dist / d
            if weight > best:
                best = weight
        total += best
    return total / len(objects)


# --------------------------------------------------------------------------
# path efficiency
# --------------------------------------------------------------------------


def path_efficiency_factor(shortest_m: float, traveled_m: float) -> float:
    """exp(l / max(p, l)); equals e on a shortest-route traversal and for
    the degenerate l = p = 0 episode."""
    if shortest_m < 0 or traveled_m < 0:
        raise MetricError("path lengths cannot be negative")
    denom = max(traveled_m, shortest_m)
    exponent = 1.0 if denom == 0.0 else shortest_m / denom
    return math.exp(exponent)


@dataclass
class EpisodeSample:
    """Everything the aggregate metrics need from one finished episode."""

    episode_id: str
    success: float  # in [0, 1]
    poses: list[Pose]
    objects: list[SceneObject]
    shortest_path_m: float
    traveled_m: float
    steps_used: int
    hfov: float = math.pi / 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.success <= 1.0:
            raise MetricError(f"success must be in [0, 1], got {self.success}")


def e_path_at_d(episodes: Sequence[EpisodeSample], d: float) -> float:
    """Mean over episodes of success * recall@D * path efficiency factor."""
    if not episodes:
        raise MetricError("e_path needs at least one episode")
    ordered = sorted(episodes, key=lambda e: e.episode_id)
    total = 0.0
    for ep in ordered:
        recall = recall_at_d(ep.poses, ep.objects, d, ep.hfov)
        total += ep.success * recall * path_efficiency_factor(ep.shortest_path_m, ep.traveled_m)
    return total / len(ordered)


# --------------------------------------------------------------------------
# answer scoring
# --------------------------------------------------------------------------


def mcq_success(predicted: str | None, gold: str, options: Sequence[str]) -> int:
    """Normalized exact match for multiple choice: 1 or 0.

    ``gold`` must be one of ``options``; matching trims, casefolds, and
    collapses whitespace on both sides.
    """
    if gold not in options:
        raise MetricError(f"gold answer {gold!r} is not among the options")
    if predicted is None:
        return 0
    return int(normalize_answer(predicted) == normalize_answer(gold))


class TokenF1Judge:
    """Deterministic stand-in judge: exact normalized match scores 5,
    otherwise bag-of-tokens F1 is bucketed at 0.8/0.6/0.4/0.2."""

    def judge(self, predicted: str, reference: str) -> JudgeScore:
        if normalize_answer(predicted) == normalize_answer(reference):
            return JudgeScore(sigma=5, note="exact")
        f1 = token_f1(predicted, reference)
        for sigma, floor in ((4, 0.8), (3, 0.6), (2, 0.4), (1, 0.2)):
            if f1 >= floor:
                return JudgeScore(sigma=sigma, note=f"f1={f1:.3f}")
        return JudgeScore(sigma=0, note=f"f1={f1:.3f}")


def llm_match_score(
    pairs: Sequence[tuple[str, str]], judge: MatchJudge | None = None
) -> float:
    """Judged answer quality as a percentage: mean(sigma / 5) * 100."""
    if not pairs:
        raise MetricError("llm_match_score needs at least one pair")
    judge = judge or TokenF1Judge()
    total = 0.0
    for predicted, reference in pairs:
        total += judge.judge(predicted, reference).sigma / 5.0
    return total / len(pairs) * 100.0


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


def _d_key(d: float) -> str:
    return str(int(d)) if float(d).is_integer() else str(d)


@dataclass
class EvalReport:
    n: int
    success_rate: float
    recall: dict[str, float]
    e_path: dict[str, float]
    avg_steps: float
    avg_traveled_m: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "success_rate": self.success_rate,
            "recall": dict(self.recall),
            "e_path": dict(self.e_path),
            "avg_steps": self.avg_steps,
            "avg_traveled_m": self.avg_traveled_m,
        }


def build_report(
    episodes: Sequence[EpisodeSample], config: MetricConfig | None = None
) -> EvalReport:
    """Aggregate episode samples into the standard report.

    Episodes are reduced in sorted-id order.  The e_path upper bound
    ``e_path@D <= e * mean(success * recall@D)`` is asserted for every D;
    a violation means a metric implementation bug, so it raises.
    """
    if not episodes:
        raise MetricError("cannot build a report from zero episodes")
    config = config or MetricConfig()
    ordered = sorted(episodes, key=lambda e: e.episode_id)
    n = len(ordered)

    recall_by_d: dict[str, float] = {}
    e_path_by_d: dict[str, float] = {}
    for d in config.d_values:
        recalls = [recall_at_d(ep.poses, ep.objects, d, ep.hfov) for ep in ordered]
        recall_by_d[_d_key(d)] = sum(recalls) / n
        e_path = e_path_at_d(ordered, d)
        bound = math.e * sum(ep.success * r for ep, r in zip(ordered, recalls)) / n
        if e_path > bound + 1e-12:
            raise MetricError(
                f"e_path@{d} = {e_path} exceeds its bound e * mean(success * recall) = {bound}"
            )
        e_path_by_d[_d_key(d)] = e_path

    return EvalReport(
        n=n,
        success_rate=sum(ep.success for ep in ordered) / n * 100.0,
        recall=recall_by_d,
        e_path=e_path_by_d,
        avg_steps=sum(ep.steps_used for ep in ordered) / n,
        avg_traveled_m=sum(ep.traveled_m for ep in ordered) / n,
    )
