"""Agent runtime: tool executor, observations, and the episode loop.

The loop follows a plan-then-act shape: a planner runs exactly once per
episode, after which a controller proposes one (thought, action code)
pair per step.  The executor parses the code, runs the tool against the
scene, and returns an observation; the executor reads the scene but never
mutates it, so the only mutable episode state is the agent pose plus the
step history.

Observations serialize to canonical JSON (sorted keys, no whitespace),
which is what trajectory records store and what replay compares
byte-for-byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, Sequence

from .actions import ActionProgram, ActionParseError, ObsRef, parse_action, render_args
from .actions import normalize_direction
from .language import (
    extract_mentions,
    landmark_mention,
    question_intent,
    wants_location_phrase,
)
from .planning import DIRECTION_YAW_DELTA, Direction, traveled_length
from .scene import (
    DEFAULT_VISIBILITY_DIST_M,
    Pose,
    Scene,
    SceneObject,
    forward_vector,
    is_visible,
    project_bbox,
    relation_between,
)

TERMINATED_FINAL = "final_answer"
TERMINATED_BUDGET = "budget"
TERMINATED_ERROR = "error"


# --------------------------------------------------------------------------
# observations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    """One tool result.  ``kind`` is one of view, boxes2d, boxes3d,
    crop_ref, masks, text, answer, error."""

    kind: str
    payload: dict[str, Any]

    def to_canonical_json(self) -> str:
        return json.dumps(
            {"kind": self.kind, "payload": self.payload},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_canonical_json(cls, text: str) -> Observation:
        data = json.loads(text)
        return cls(kind=data["kind"], payload=data["payload"])


def error_observation(code: str, message: str) -> Observation:
    return Observation(kind="error", payload={"code": code, "message": message})


@dataclass(frozen=True)
class Plan:
    """Planner output: a short text plus at least one subgoal."""

    text: str
    subgoals: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.subgoals:
            raise ValueError("a plan needs at least one subgoal")


@dataclass
class HistoryStep:
    thought: str
    code: str
    observation: Observation
    pose_after: Pose


@dataclass
class EpisodeResult:
    task_id: str
    answer: str | None
    steps_used: int
    visited_poses: list[Pose]
    traveled_m: float
    terminated_by: str
    tool_log: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "answer": self.answer,
            "steps_used": self.steps_used,
            "visited_poses": [p.to_dict() for p in self.visited_poses],
            "traveled_m": self.traveled_m,
            "terminated_by": self.terminated_by,
            "tool_log": self.tool_log,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EpisodeResult:
        return cls(
            task_id=data["task_id"],
            answer=data["answer"],
            steps_used=data["steps_used"],
            visited_poses=[Pose.from_dict(p) for p in data["visited_poses"]],
            traveled_m=data["traveled_m"],
            terminated_by=data["terminated_by"],
            tool_log=list(data.get("tool_log", [])),
        )


class Controller(Protocol):
    """Per-step policy: history in, one (thought, action code) pair out."""

    def decide(
        self,
        question: str,
        plan: Plan,
        history: Sequence[HistoryStep],
        observation: Observation,
    ) -> tuple[str, str]: ...


class Planner(Protocol):
    def plan(self, question: str) -> Plan: ...


# --------------------------------------------------------------------------
# episode state and the executor
# --------------------------------------------------------------------------


class EpisodeState:
    """Mutable per-episode state: pose, history, and the (read-only) scene."""

    def __init__(
        self,
        scene: Scene,
        initial_pose: Pose,
        view_dist_m: float = DEFAULT_VISIBILITY_DIST_M,
    ) -> None:
        self.scene = scene
        self.pose = initial_pose
        self.view_dist_m = view_dist_m
        self.history: list[HistoryStep] = []
        self.visited_poses: list[Pose] = [initial_pose]

    # -- perception helpers --------------------------------------------------

    def visible_objects(self, category: str | None = None) -> list[SceneObject]:
        out = [
            obj
            for obj in self.scene.objects
            if (category is None or obj.category == category)
            and is_visible(self.pose, obj, self.view_dist_m, self.scene.camera.hfov)
        ]
        out.sort(key=lambda o: o.id)
        return out

    def view_observation(self) -> Observation:
        entries = []
        for obj in self.visible_objects():
            box = project_bbox(self.pose, self.scene.camera, obj)
            entries.append(
                {
                    "id": obj.id,
                    "category": obj.category,
                    "box": [round(v, 2) for v in box] if box else None,
                }
            )
        return Observation(
            kind="view",
            payload={"pose": self.pose.to_dict(), "objects": entries},
        )

    # -- bookkeeping ----------------------------------------------------------

    def append(self, thought: str, code: str, observation: Observation) -> HistoryStep:
        step = HistoryStep(
            thought=thought, code=code, observation=observation, pose_after=self.pose
        )
        self.history.append(step)
        self.visited_poses.append(self.pose)
        return step

    def resolve_ref(self, ref: ObsRef) -> Any:
        if not 0 <= ref.step < len(self.history):
            raise KeyError(f"{ref.render()}: no such step")
        node: Any = self.history[ref.step].observation.payload
        for seg in ref.path:
            if isinstance(seg, int):
                if not isinstance(node, list) or not 0 <= seg < len(node):
                    raise KeyError(f"{ref.render()}: index {seg} out of range")
                node = node[seg]
            else:
                if not isinstance(node, dict) or seg not in node:
                    raise KeyError(f"{ref.render()}: no field {seg!r}")
                node = node[seg]
        return node


def execute_tool(program: ActionProgram, state: EpisodeState) -> Observation:
    """Run one validated action against the episode state.

    Runtime failures (blocked motion, unresolvable references, malformed
    boxes) come back as error observations rather than exceptions; only
    the pose may change, and only for a successful GoNextPoint.
    """
    call = program.call
    args: dict[str, Any] = {}
    for name, value in call.args.items():
        if isinstance(value, ObsRef):
            try:
                args[name] = state.resolve_ref(value)
            except KeyError as exc:
                return error_observation("unresolved-reference", str(exc))
        else:
            args[name] = value

    handler = _TOOL_HANDLERS[call.tool]
    return handler(state, args)


# -- individual tools ---------------------------------------------------------


def _tool_go_next_point(state: EpisodeState, args: dict[str, Any]) -> Observation:
    token = normalize_direction(str(args["direction"]))
    direction = Direction(token)
    new_yaw = (state.pose.yaw + DIRECTION_YAW_DELTA[direction]) % (2 * math.pi)
    fx, _, fz = forward_vector(new_yaw)
    x, y, z = state.pose.position
    step = state.scene.cell_size_m
    nx, nz = x + fx * step, z + fz * step
    cell = state.scene.world_to_cell(nx, nz)
    if not state.scene.is_free(cell):
        reason = "out of bounds" if not state.scene.in_bounds(cell) else "occupied"
        return error_observation(
            "blocked", f"cannot {direction.value}: cell {cell} is {reason}"
        )
    wx, wz = state.scene.cell_to_world(cell)
    state.pose = Pose(position=(wx, y, wz), yaw=new_yaw)
    return state.view_observation()


def _tool_object_location_2d(state: EpisodeState, args: dict[str, Any]) -> Observation:
    category = str(args["category"])
    entries = []
    for obj in state.visible_objects(category):
        box = project_bbox(state.pose, state.scene.camera, obj)
        entries.append({"id": obj.id, "box": [round(v, 2) for v in box] if box else None})
    return Observation(kind="boxes2d", payload={"category": category, "objects": entries})


def _tool_object_location_3d(state: EpisodeState, args: dict[str, Any]) -> Observation:
    category = str(args["category"])
    px, py, pz = state.pose.position
    entries = []
    for obj in state.visible_objects(category):
        entries.append(
            {
                "id": obj.id,
                "center": list(obj.center),
                "extents": list(obj.extents),
                "distance": math.dist((px, py, pz), obj.center),
            }
        )
    entries.sort(key=lambda e: (e["distance"], e["id"]))
    return Observation(kind="boxes3d", payload={"category": category, "objects": entries})


def _tool_object_crop(state: EpisodeState, args: dict[str, Any]) -> Observation:
    raw = args["box"]
    values: list[float] = []
    if isinstance(raw, str):
        parts = [p.strip() for p in raw.split(",")]
        try:
            values = [float(p) for p in parts]
        except ValueError:
            values = []
    elif isinstance(raw, (list, tuple)):
        values = [v for v in raw if isinstance(v, (int, float))]
    if len(values) != 4:
        return error_observation("malformed-box", f"expected 4 numbers, got {raw!r}")
    n_prior = sum(1 for h in state.history if h.observation.kind == "crop_ref")
    return Observation(
        kind="crop_ref",
        payload={"crop_id": f"crop_{n_prior}", "box": values},
    )


def _tool_segment_instance(state: EpisodeState, args: dict[str, Any]) -> Observation:
    entries = [{"id": o.id, "mask_id": f"mask_{o.id}"} for o in state.visible_objects()]
    return Observation(kind="masks", payload={"objects": entries})


def _tool_final_answer(state: EpisodeState, args: dict[str, Any]) -> Observation:
    return Observation(kind="answer", payload={"answer": str(args["answer"])})


def _nearest(state: EpisodeState, objects: list[SceneObject]) -> SceneObject:
    return min(objects, key=lambda o: (math.dist(state.pose.position, o.center), o.id))


def _tool_visual_qa(state: EpisodeState, args: dict[str, Any]) -> Observation:
    """Ground-truth QA over currently visible objects.

    Answers are read straight from scene attributes; anything the view
    cannot support comes back as the literal text "unknown".
    """
    question = str(args["question"])
    target = args.get("target")
    mentions = extract_mentions(question, tuple(state.scene.categories()))
    if target is not None:
        target = str(target)
        if target not in mentions:
            mentions.insert(0, target)
    seen = {c: state.visible_objects(c) for c in mentions}
    present = [c for c in mentions if seen.get(c)]
    intent = question_intent(question)
    text = "unknown"

    if intent == "counting" and mentions:
        text = str(len(seen.get(mentions[0], [])))
    elif intent in ("attribute-color", "status", "attribute-special") and present:
        key = {"attribute-color": "color", "status": "status", "attribute-special": "special"}[
            intent
        ]
        text = _nearest(state, seen[present[0]]).attributes.get(key, "unknown")
    elif intent == "location" and present:
        obj = _nearest(state, seen[present[0]])
        region = state.scene.enclosing_region(obj.center[0], obj.center[2])
        text = region.name if region else "unknown"
    elif intent == "attribute-size" and len(present) >= 2:
        a = _nearest(state, seen[present[0]])
        b = _nearest(state, seen[present[1]])
        text = a.category if a.volume() >= b.volume() else b.category
    elif intent == "distance" and len(present) >= 2:
        a = _nearest(state, seen[present[0]])
        b = _nearest(state, seen[present[1]])
        text = f"{math.dist(a.center, b.center):.1f} m"
    elif intent == "relationship" and len(present) >= 2:
        landmark = landmark_mention(question, present)
        if landmark in present[:2] and landmark != present[0]:
            subject, reference = present[0], landmark
        elif landmark == present[0]:
            subject, reference = present[1], landmark
        else:
            subject, reference = present[0], present[1]
        a = _nearest(state, seen[subject])
        b = _nearest(state, seen[reference])
        relation = relation_between(a.center, b.center)
        if landmark and wants_location_phrase(question):
            text = f"{relation} the {b.category}"
        else:
            text = relation

    return Observation(kind="text", payload={"text": text})


_TOOL_HANDLERS: dict[str, Callable[[EpisodeState, dict[str, Any]], Observation]] = {
    "GoNextPoint": _tool_go_next_point,
    "ObjectLocation2D": _tool_object_location_2d,
    "ObjectLocation3D": _tool_object_location_3d,
    "ObjectCrop": _tool_object_crop,
    "SegmentInstance": _tool_segment_instance,
    "VisualQA": _tool_visual_qa,
    "FinalAnswer": _tool_final_answer,
}


# --------------------------------------------------------------------------
# planning
# --------------------------------------------------------------------------


class TemplatePlanner:
    """Keyword planner: name the things to find, then what to do with them."""

    def plan(self, question: str) -> Plan:
        mentions = extract_mentions(question)
        intent = question_intent(question)
        subgoals: list[str] = []
        if mentions:
            for cat in mentions:
                subgoals.append(f"explore until the {cat} is found")
        else:
            subgoals.append("explore the scene and look around")
        gather = {
            "counting": "count every matching instance discovered",
            "attribute-color": "inspect the object's color up close",
            "attribute-size": "compare the sizes of both objects",
            "attribute-special": "inspect what is special about the object",
            "status": "check the object's current status",
            "distance": "measure the positions of both objects",
            "relationship": "compare the positions of both objects",
            "location": "note which room the object is in",
        }.get(intent)
        if gather:
            subgoals.append(gather)
        subgoals.append("report the final answer")
        return Plan(text="; then ".join(subgoals), subgoals=tuple(subgoals))


def make_plan(question: str, planner: Planner | None = None) -> Plan:
    """Build the one-per-episode plan.  Raises on an empty question."""
    if not question or not question.strip():
        raise ValueError("cannot plan for an empty question")
    return (planner or TemplatePlanner()).plan(question)


# --------------------------------------------------------------------------
# the episode loop
# --------------------------------------------------------------------------


def compose_prompt(question: str, options: Sequence[str] | None) -> str:
    """The question as the controller sees it; MCQ options ride along."""
    if options:
        return f"{question} Options: " + " | ".join(options)
    return question


def run_episode(
    scene: Scene,
    task: Any,
    controller: Controller,
    planner: Planner | None = None,
    max_steps: int = 50,
    view_dist_m: float = DEFAULT_VISIBILITY_DIST_M,
) -> EpisodeResult:
    """Run one episode of at most ``max_steps`` controller decisions.

    ``task`` needs task_id, question, initial_pose and (for MCQ) options.
    The planner runs exactly once, before the first step.  A controller
    exception ends the episode with terminated_by="error"; an action the
    parser rejects becomes an error observation and the loop continues.
    """
    prompt = compose_prompt(task.question, getattr(task, "options", None))
    plan = make_plan(prompt, planner)
    state = EpisodeState(scene, task.initial_pose, view_dist_m)
    observation = state.view_observation()
    answer: str | None = None
    terminated = TERMINATED_BUDGET

    tool_log: list[dict[str, Any]] = []
    for _ in range(max_steps):
        try:
            thought, code = controller.decide(prompt, plan, state.history, observation)
        except Exception:
            terminated = TERMINATED_ERROR
            break
        try:
            program = parse_action(code)
        except ActionParseError as exc:
            observation = error_observation("invalid-action", str(exc))
            state.append(thought, code, observation)
            tool_log.append({"tool": None, "args": {}, "obs_kind": observation.kind})
            continue
        observation = execute_tool(program, state)
        state.append(thought, code, observation)
        tool_log.append(
            {
                "tool": program.call.tool,
                "args": render_args(program.call),
                "obs_kind": observation.kind,
            }
        )
        if program.call.tool == "FinalAnswer" and observation.kind == "answer":
            answer = observation.payload["answer"]
            terminated = TERMINATED_FINAL
            break

    poses = state.visited_poses
    return EpisodeResult(
        task_id=task.task_id,
        answer=answer,
        steps_used=len(state.history),
        visited_poses=poses,
        traveled_m=traveled_length([p.position for p in poses]),
        terminated_by=terminated,
        tool_log=tool_log,
    )
