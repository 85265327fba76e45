"""Built-in controllers: an oracle replayer and a heuristic explorer.

The oracle replays a synthesized trajectory verbatim, which is how
episode replay and evaluation plumbing get exercised end to end.  The
heuristic is a deterministic policy that recomputes everything it needs
from the visible history each call, so it carries no hidden state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .language import (
    extract_mentions,
    landmark_mention,
    question_intent,
    token_f1,
    wants_location_phrase,
)
from .runtime import HistoryStep, Observation, Plan
from .scene import relation_between
from .trajectory import Trajectory

OPTIONS_MARKER = " Options: "

# The answer phase starts no later than this many steps in, leaving
# room to issue the closing tool calls within a 40-step budget.
EXPLORE_STEP_LIMIT = 26
FORCE_ANSWER_STEP = 36
NO_DISCOVERY_WINDOW = 12
MIN_SWEEP_MOTIONS = 16
SWEEP_PERIOD = 5

_FALLBACK_DIRECTIONS = ("move_forward", "turn_left", "turn_right", "turn_around")


def parse_prompt(prompt: str) -> tuple[str, list[str]]:
    """Split a composed prompt back into question text and options."""
    if OPTIONS_MARKER in prompt:
        question, _, tail = prompt.rpartition(OPTIONS_MARKER)
        return question, [o.strip() for o in tail.split(" | ") if o.strip()]
    return prompt, []


class OracleController:
    """Replays a synthesized trajectory step for step."""

    def __init__(self, trajectory: Trajectory) -> None:
        if not trajectory.steps:
            raise ValueError("cannot replay an empty trajectory")
        self._steps = trajectory.steps

    def decide(
        self,
        question: str,
        plan: Plan,
        history: Sequence[HistoryStep],
        observation: Observation,
    ) -> tuple[str, str]:
        i = len(history)
        if i < len(self._steps):
            step = self._steps[i]
            return step.thought, step.code
        return "Nothing left to replay; answering once more.", self._steps[-1].code


@dataclass
class _Knowledge:
    """Everything the heuristic has learned so far, rebuilt every call."""

    pose: dict | None
    view_objects: list[dict]
    seen: dict[str, str]
    first_seen_at: dict[str, int]
    centers: dict[str, list[dict]]
    qa_texts: list[str]
    located: set[str]
    blocked_streak: int
    motion_steps: int
    motions_since_qa: float

    def may_ask(self) -> bool:
        # a failed VisualQA costs at least two moves before a retry
        return self.motions_since_qa >= 2


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _gather(history: Sequence[HistoryStep], observation: Observation) -> _Knowledge:
    knowledge = _Knowledge(
        pose=None,
        view_objects=[],
        seen={},
        first_seen_at={},
        centers={},
        qa_texts=[],
        located=set(),
        blocked_streak=0,
        motion_steps=0,
        motions_since_qa=math.inf,
    )

    def note(object_id: str, category: str) -> None:
        if object_id not in knowledge.seen:
            knowledge.first_seen_at[object_id] = knowledge.motion_steps
        knowledge.seen[object_id] = category

    def ingest(obs: Observation) -> None:
        if obs.kind == "view":
            knowledge.pose = obs.payload.get("pose", knowledge.pose)
            knowledge.view_objects = obs.payload.get("objects", [])
            for entry in knowledge.view_objects:
                note(entry["id"], entry["category"])
        elif obs.kind == "boxes2d":
            for entry in obs.payload.get("objects", []):
                note(entry["id"], obs.payload["category"])
        elif obs.kind == "boxes3d":
            category = obs.payload["category"]
            knowledge.located.add(category)
            rows = knowledge.centers.setdefault(category, [])
            for entry in obs.payload.get("objects", []):
                if all(r["id"] != entry["id"] for r in rows):
                    rows.append(entry)
                note(entry["id"], category)
        elif obs.kind == "text":
            knowledge.qa_texts.append(obs.payload.get("text", ""))

    for step in history:
        ingest(step.observation)
        if step.code.startswith("GoNextPoint"):
            if step.observation.kind == "error":
                knowledge.blocked_streak += 1
            else:
                knowledge.blocked_streak = 0
                knowledge.motion_steps += 1
                knowledge.motions_since_qa += 1
        else:
            knowledge.blocked_streak = 0
            if step.code.startswith("VisualQA"):
                knowledge.motions_since_qa = 0
    ingest(observation)
    return knowledge


def _snap(derived: str, options: Sequence[str]) -> str:
    if not options:
        return derived
    best = max(options, key=lambda o: (token_f1(o, derived), -options.index(o)))
    return best


def _snap_count(count: int, options: Sequence[str]) -> str:
    """Snap a tally to the numerically closest option.

    Sweeps can only miss instances, never invent them, so ties between
    equally distant options resolve upward.
    """
    if not options:
        return str(count)
    try:
        values = [int(o) for o in options]
    except ValueError:
        return _snap(str(count), options)
    best = min(values, key=lambda v: (abs(v - count), -v))
    return str(best)


def _visible_categories(knowledge: _Knowledge) -> set[str]:
    return {entry["category"] for entry in knowledge.view_objects}


class HeuristicController:
    """Deterministic explore-then-answer policy.

    Exploration walks forward, falls back through left/right/around on
    blocked moves, and turns periodically to sweep the room.  Answering
    is intent-specific: attribute-style questions go through VisualQA
    while the target is in frame; geometric questions collect 3D boxes
    and compute the answer locally; counting tallies distinct instance
    ids after the room has been swept.
    """

    def decide(
        self,
        question: str,
        plan: Plan,
        history: Sequence[HistoryStep],
        observation: Observation,
    ) -> tuple[str, str]:
        text, options = parse_prompt(question)
        mentions = extract_mentions(text)
        intent = question_intent(text)
        knowledge = _gather(history, observation)
        step_no = len(history)

        if step_no >= FORCE_ANSWER_STEP:
            return self._final(text, options, mentions, intent, knowledge, forced=True)

        answer = self._try_answer(text, options, mentions, intent, knowledge, step_no)
        if answer is not None:
            return answer
        return self._explore(knowledge)

    # -- answering ---------------------------------------------------------

    def _try_answer(
        self,
        text: str,
        options: Sequence[str],
        mentions: list[str],
        intent: str,
        knowledge: _Knowledge,
        step_no: int,
    ) -> tuple[str, str] | None:
        if intent == "counting":
            return self._counting(text, options, mentions, knowledge, step_no)
        if intent in ("status", "attribute-color", "attribute-special", "location"):
            return self._via_qa(text, options, mentions, knowledge)
        if intent in ("relationship", "distance", "attribute-size"):
            return self._via_3d(text, options, mentions, intent, knowledge)
        if knowledge.qa_texts and knowledge.qa_texts[-1] not in ("", "unknown"):
            return self._final(text, options, mentions, intent, knowledge)
        if mentions and mentions[0] in _visible_categories(knowledge) and knowledge.may_ask():
            code = f"VisualQA(question={_quote(text)}, target={_quote(mentions[0])})"
            return ("The target is in frame; asking about it directly.", code)
        return None

    def _counting(
        self,
        text: str,
        options: Sequence[str],
        mentions: list[str],
        knowledge: _Knowledge,
        step_no: int,
    ) -> tuple[str, str] | None:
        if not mentions:
            return self._final(text, options, mentions, "counting", knowledge, forced=True)
        target = mentions[0]
        count = sum(1 for cat in knowledge.seen.values() if cat == target)
        last_new = max(
            (
                at
                for oid, at in knowledge.first_seen_at.items()
                if knowledge.seen.get(oid) == target
            ),
            default=0,
        )
        stale_for = knowledge.motion_steps - last_new
        done_exploring = step_no >= EXPLORE_STEP_LIMIT or (
            count > 0
            and stale_for >= NO_DISCOVERY_WINDOW
            and knowledge.motion_steps >= MIN_SWEEP_MOTIONS
        )
        if not done_exploring:
            return None
        return (
            f"The sweep found {count} distinct {target} instances; answering.",
            f"FinalAnswer(answer={_quote(_snap_count(count, options))})",
        )

    def _via_qa(
        self,
        text: str,
        options: Sequence[str],
        mentions: list[str],
        knowledge: _Knowledge,
    ) -> tuple[str, str] | None:
        for qa in reversed(knowledge.qa_texts):
            if qa and qa != "unknown":
                return (
                    "The inspection answered the question; reporting it.",
                    f"FinalAnswer(answer={_quote(_snap(qa, options))})",
                )
        if mentions and mentions[0] in _visible_categories(knowledge) and knowledge.may_ask():
            code = f"VisualQA(question={_quote(text)}, target={_quote(mentions[0])})"
            return ("The target is in frame; asking about it directly.", code)
        return None

    def _via_3d(
        self,
        text: str,
        options: Sequence[str],
        mentions: list[str],
        intent: str,
        knowledge: _Knowledge,
    ) -> tuple[str, str] | None:
        needed = mentions[:3] if intent == "distance" else mentions[:2]
        needed = [c for c in needed if c]
        landmark = None
        if intent == "relationship" and len(needed) >= 2:
            landmark = landmark_mention(text, needed)
            if landmark and needed[1] != landmark:
                needed = [c for c in needed if c != landmark] + [landmark]
                needed = needed[:2]
        if not needed:
            return None
        visible = _visible_categories(knowledge)
        for category in needed:
            if category not in knowledge.located and category in visible:
                return (
                    f"Pinning down the {category} in 3D while it is visible.",
                    f"ObjectLocation3D(category={_quote(category)})",
                )
        have = [c for c in needed if knowledge.centers.get(c)]
        if len(have) < len(needed):
            return None
        derived = self._compute(intent, needed, knowledge)
        if derived is None:
            return None
        if landmark and wants_location_phrase(text):
            derived = f"{derived} the {landmark}"
        return (
            "Both positions are measured; computing the answer.",
            f"FinalAnswer(answer={_quote(_snap(derived, options))})",
        )

    def _compute(
        self, intent: str, needed: list[str], knowledge: _Knowledge
    ) -> str | None:
        def closest(category: str) -> dict:
            return min(knowledge.centers[category], key=lambda e: (e["distance"], e["id"]))

        entries = [closest(c) for c in needed]
        if intent == "relationship":
            return relation_between(tuple(entries[0]["center"]), tuple(entries[1]["center"]))
        if intent == "attribute-size":
            volumes = [math.prod(e["extents"]) for e in entries]
            return needed[0] if volumes[0] >= volumes[1] else needed[1]
        if len(needed) >= 3:
            anchor, first, second = entries[0], entries[1], entries[2]
            d1 = math.dist(anchor["center"], first["center"])
            d2 = math.dist(anchor["center"], second["center"])
            return needed[1] if d1 <= d2 else needed[2]
        d = math.dist(entries[0]["center"], entries[1]["center"])
        return f"{d:.1f} m"

    # -- exploring -----------------------------------------------------------

    def _explore(self, knowledge: _Knowledge) -> tuple[str, str]:
        if knowledge.blocked_streak:
            direction = _FALLBACK_DIRECTIONS[
                min(knowledge.blocked_streak, len(_FALLBACK_DIRECTIONS) - 1)
            ]
            thought = "That way is blocked, so I try a different turn."
        elif knowledge.motion_steps and knowledge.motion_steps % SWEEP_PERIOD == 0:
            # alternate the sweep turn so the walk zigzags instead of orbiting
            if (knowledge.motion_steps // SWEEP_PERIOD) % 2:
                direction = "turn_left"
                thought = "Sweeping the room: turn left to change heading."
            else:
                direction = "turn_right"
                thought = "Sweeping the room: turn right to change heading."
        else:
            direction = "move_forward"
            thought = "Nothing new here; keep moving forward."
        return thought, f'GoNextPoint(direction="{direction}")'

    # -- last resort -----------------------------------------------------------

    def _final(
        self,
        text: str,
        options: Sequence[str],
        mentions: list[str],
        intent: str,
        knowledge: _Knowledge,
        forced: bool = False,
    ) -> tuple[str, str]:
        thought = (
            "Out of budget; giving the best answer available."
            if forced
            else "Reporting the collected answer."
        )
        derived = ""
        for qa in reversed(knowledge.qa_texts):
            if qa and qa != "unknown":
                derived = qa
                break
        if not derived and intent == "counting" and mentions:
            tally = sum(1 for c in knowledge.seen.values() if c == mentions[0])
            return thought, f"FinalAnswer(answer={_quote(_snap_count(tally, options))})"
        if not derived and options:
            derived = options[0]
        if not derived:
            derived = "unknown"
        return thought, f"FinalAnswer(answer={_quote(_snap(derived, options))})"
