"""Trajectory synthesis, verification, sampling, and SFT export.

A trajectory is the full record of one solved episode: motion steps
along a shortest route through every related object, perception steps
fired as objects come into view or their target cells are reached, and
a closing FinalAnswer.  Synthesis drives the real executor, so stored
observations replay byte-for-byte.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .actions import (
    ActionParseError,
    TOOL_SPECS,
    normalize_direction,
    parse_action,
    parse_call,
    validate_call,
)
from .language import token_f1, tokenize
from .planning import (
    DIRECTION_YAW_DELTA,
    Direction,
    multi_target_route,
    object_target_cell,
    path_to_directions,
)
from .runtime import (
    EpisodeState,
    Observation,
    Plan,
    compose_prompt,
    error_observation,
    execute_tool,
    make_plan,
)
from .scene import DEFAULT_VISIBILITY_DIST_M, Pose, Scene, forward_vector, is_visible, project_bbox
from .seeding import derive_rng
from .tasks import EqaTask

PERCEPTION_KINDS = frozenset({"view", "boxes2d", "boxes3d", "crop_ref", "masks", "text"})

RULE_NAMES = ("R1", "R2", "R3", "R4")

DIRECTION_WORDS = frozenset(
    {"forward", "ahead", "straight", "left", "right", "around", "turn", "back"}
)


class TrajectoryError(Exception):
    """Synthesis cannot produce a valid trajectory for this task."""


@dataclass
class Step:
    """One executed step: thought, action code, canonical observation."""

    index: int
    thought: str
    code: str
    observation: str
    pose_after: Pose
    is_key: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "thought": self.thought,
            "code": self.code,
            "observation": self.observation,
            "pose_after": self.pose_after.to_dict(),
            "is_key": self.is_key,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Step":
        return cls(
            index=doc["index"],
            thought=doc["thought"],
            code=doc["code"],
            observation=doc["observation"],
            pose_after=Pose.from_dict(doc["pose_after"]),
            is_key=doc["is_key"],
        )


@dataclass
class Trajectory:
    """A full episode record for one task."""

    task_id: str
    scene_id: str
    question: str
    answer: str
    plan: Plan
    initial_pose: Pose
    steps: list[Step]

    def key_steps(self) -> list[Step]:
        return [s for s in self.steps if s.is_key]

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "scene_id": self.scene_id,
            "question": self.question,
            "answer": self.answer,
            "plan": {"text": self.plan.text, "subgoals": list(self.plan.subgoals)},
            "initial_pose": self.initial_pose.to_dict(),
            "steps": [s.to_dict() for s in self.steps],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Trajectory":
        return cls(
            task_id=doc["task_id"],
            scene_id=doc["scene_id"],
            question=doc["question"],
            answer=doc["answer"],
            plan=Plan(text=doc["plan"]["text"], subgoals=tuple(doc["plan"]["subgoals"])),
            initial_pose=Pose.from_dict(doc["initial_pose"]),
            steps=[Step.from_dict(s) for s in doc["steps"]],
        )


# --------------------------------------------------------------------------
# Thought templates

_MOVE_PHRASES = {
    Direction.MOVE_FORWARD: "move forward",
    Direction.TURN_LEFT: "turn left and step through",
    Direction.TURN_RIGHT: "turn right and step through",
    Direction.TURN_AROUND: "turn around and head back",
}

_MOVE_THOUGHTS = (
    "Still following the route; I will {phrase} next.",
    "No target in sight yet, so I {phrase} and continue.",
    "The plan says to keep moving: {phrase}.",
)

_LOCATE_THOUGHTS = (
    "The {cat} is in view; I will pin down exactly where it sits.",
    "I can see the {cat}; recording its position now.",
    "Found the {cat}; measuring it before moving on.",
)

_BOXES_THOUGHTS = (
    "Boxing every {cat} currently in view so none gets counted twice.",
    "Marking the visible {cat} instances in the frame.",
    "Taking stock of each {cat} I can see right now.",
)

_CROP_THOUGHTS = (
    "Zooming in on the {cat} for a closer look.",
    "Cropping the view around the {cat} to see detail.",
    "A tight crop of the {cat} should reveal its appearance.",
)

_QA_THOUGHTS = (
    "With the {cat} in frame, I will ask about it directly.",
    "The {cat} is visible, so I can query it now.",
    "Time to inspect the {cat} and get the detail I need.",
)

_FINAL_THOUGHTS = (
    "I have everything needed, so I will answer now.",
    "All subgoals are done; reporting the answer.",
    "The evidence is collected; giving the final answer.",
)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


# --------------------------------------------------------------------------
# Synthesis


def synthesize_trajectory(
    scene: Scene,
    task: EqaTask,
    seed: int,
    view_dist_m: float = DEFAULT_VISIBILITY_DIST_M,
) -> Trajectory:
    """Build a solved trajectory for a task by walking the shortest
    route through every related object and firing perception steps as
    objects are reached or spotted.

    The route is exactly the one task generation measured, so the
    traveled distance equals ``task.shortest_path_m``.
    """
    rng = derive_rng(seed, task.task_id)
    prompt = compose_prompt(task.question, task.options)
    plan = make_plan(prompt)
    state = EpisodeState(scene, task.initial_pose, view_dist_m)
    steps: list[Step] = []

    def emit(thought: str, code: str) -> Observation:
        program = parse_action(code)
        obs = execute_tool(program, state)
        if obs.kind == "error":
            raise TrajectoryError(f"{task.task_id}: {code} failed: {obs.payload}")
        state.append(thought, code, obs)
        steps.append(
            Step(
                index=len(steps),
                thought=thought,
                code=code,
                observation=obs.to_canonical_json(),
                pose_after=state.pose,
                is_key=program.call.tool != "GoNextPoint",
            )
        )
        return obs

    def emit_perception(obj) -> None:
        cat = obj.category
        if task.qtype == "counting":
            emit(
                rng.choice(_BOXES_THOUGHTS).format(cat=cat),
                f"ObjectLocation2D(category={_quote(cat)})",
            )
        elif task.qtype in ("relationship", "distance") or (
            task.qtype == "attribute" and task.subtype == "size"
        ):
            emit(
                rng.choice(_LOCATE_THOUGHTS).format(cat=cat),
                f"ObjectLocation3D(category={_quote(cat)})",
            )
        elif task.qtype == "attribute" and task.subtype == "color":
            box = project_bbox(state.pose, scene.camera, obj)
            if box is None:
                box = (0.0, 0.0, float(scene.camera.image_width), float(scene.camera.image_height))
            box_text = ",".join(f"{v:.2f}" for v in box)
            emit(
                rng.choice(_CROP_THOUGHTS).format(cat=cat),
                f"ObjectCrop(box={_quote(box_text)})",
            )
            emit(
                rng.choice(_QA_THOUGHTS).format(cat=cat),
                f"VisualQA(question={_quote(task.question)}, target={_quote(cat)})",
            )
        else:
            emit(
                rng.choice(_QA_THOUGHTS).format(cat=cat),
                f"VisualQA(question={_quote(task.question)}, target={_quote(cat)})",
            )

    target_cells: dict[str, tuple[int, int]] = {}
    route_targets: list[tuple[int, int]] = []
    for oid in task.related_object_ids:
        cell = object_target_cell(scene, scene.object_by_id(oid))
        target_cells[oid] = cell
        if cell not in route_targets:
            route_targets.append(cell)

    pending = list(task.related_object_ids)

    def check_triggers() -> None:
        x, _, z = state.pose.position
        here = scene.world_to_cell(x, z)
        batch = []
        for oid in list(pending):
            obj = scene.object_by_id(oid)
            if here == target_cells[oid] or is_visible(
                state.pose, obj, view_dist_m, scene.camera.hfov
            ):
                pending.remove(oid)
                batch.append(obj)
        if not batch:
            return
        if task.qtype == "counting":
            emit_perception(batch[0])
        else:
            for obj in batch:
                emit_perception(obj)

    x0, _, z0 = task.initial_pose.position
    start = scene.world_to_cell(x0, z0)
    route = multi_target_route(scene.grid, scene.cell_size_m, start, route_targets)
    tokens = path_to_directions(route, task.initial_pose.yaw)

    check_triggers()
    for token in tokens:
        phrase = _MOVE_PHRASES[token]
        emit(
            rng.choice(_MOVE_THOUGHTS).format(phrase=phrase),
            f'GoNextPoint(direction="{token.value}")',
        )
        check_triggers()
    if pending:
        raise TrajectoryError(f"{task.task_id}: unsatisfied objects after route: {pending}")

    emit(rng.choice(_FINAL_THOUGHTS), f"FinalAnswer(answer={_quote(task.answer)})")

    return Trajectory(
        task_id=task.task_id,
        scene_id=task.scene_id,
        question=prompt,
        answer=task.answer,
        plan=plan,
        initial_pose=task.initial_pose,
        steps=steps,
    )


# --------------------------------------------------------------------------
# Replay


def replay_trajectory(
    scene: Scene,
    traj: Trajectory,
    view_dist_m: float = DEFAULT_VISIBILITY_DIST_M,
) -> list[str]:
    """Re-execute a trajectory and report every divergence.

    Observations must match the stored canonical JSON byte-for-byte and
    poses must match exactly.  Returns a list of mismatch messages,
    empty when the replay is clean.
    """
    state = EpisodeState(scene, traj.initial_pose, view_dist_m)
    problems: list[str] = []
    for step in traj.steps:
        try:
            program = parse_action(step.code)
        except ActionParseError as exc:
            obs = error_observation("invalid-action", str(exc))
        else:
            obs = execute_tool(program, state)
        state.append(step.thought, step.code, obs)
        got = obs.to_canonical_json()
        if got != step.observation:
            problems.append(f"step {step.index}: observation diverged: {got!r}")
        if state.pose != step.pose_after:
            problems.append(f"step {step.index}: pose diverged: {state.pose}")
    return problems


# --------------------------------------------------------------------------
# Verification


class TrajectoryJudge(Protocol):
    """Quality scoring: answer fidelity, motion rationale, perception."""

    def score(self, traj: Trajectory) -> dict[str, float]: ...


class OracleTrajectoryJudge:
    """Deterministic stand-in for a learned judge.

    L1: token-F1 of the FinalAnswer argument against the expected answer.
    L2: fraction of motion steps whose thought gives a direction rationale.
    L3: whether at least one key step produced a non-error perception.
    """

    def score(self, traj: Trajectory) -> dict[str, float]:
        final_arg = None
        if traj.steps:
            try:
                program = parse_action(traj.steps[-1].code)
                if program.call.tool == "FinalAnswer":
                    final_arg = str(program.call.args.get("answer", ""))
            except ActionParseError:
                final_arg = None
        l1 = token_f1(final_arg, traj.answer) if final_arg is not None else 0.0

        motion = [s for s in traj.steps if not s.is_key]
        if motion:
            good = sum(
                1 for s in motion if DIRECTION_WORDS & set(tokenize(s.thought))
            )
            l2 = good / len(motion)
        else:
            l2 = 1.0

        l3 = 0.0
        for s in traj.steps[:-1]:
            if not s.is_key:
                continue
            obs = Observation.from_canonical_json(s.observation)
            if obs.kind in PERCEPTION_KINDS:
                l3 = 1.0
                break
        return {"L1": l1, "L2": l2, "L3": l3}


@dataclass
class TrajectoryVerdict:
    """Structural rule violations plus judge scores for one trajectory."""

    task_id: str
    violations: list[dict]
    llm_scores: dict[str, float]
    llm_mean: float
    accepted: bool

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "violations": list(self.violations),
            "llm_scores": dict(self.llm_scores),
            "llm_mean": self.llm_mean,
            "accepted": self.accepted,
        }


def _parse_step(code: str):
    """(call, failure) where failure is "syntax" | "unknown-tool" | "bad-args" | None."""
    try:
        call = parse_call(code)
    except ActionParseError:
        return None, "syntax"
    if call.tool not in TOOL_SPECS:
        return call, "unknown-tool"
    try:
        validate_call(call)
    except ActionParseError:
        return call, "bad-args"
    return call, None


def _check_pose_chain(
    traj: Trajectory,
    initial_pose: Pose | None,
    cell_size_m: float | None,
    violations: list[dict],
) -> None:
    """Motion steps must advance the pose by exactly one grid cell in
    the token's direction; every other step must leave it unchanged."""
    tau = 2 * math.pi
    prev = initial_pose
    for step in traj.steps:
        call, failure = _parse_step(step.code)
        moved = (
            failure is None
            and call.tool == "GoNextPoint"
            and Observation.from_canonical_json(step.observation).kind != "error"
        )
        if prev is not None:
            px, py, pz = prev.position
            x, y, z = step.pose_after.position
            if moved:
                token = Direction(normalize_direction(str(call.args["direction"])))
                want_yaw = (prev.yaw + DIRECTION_YAW_DELTA[token]) % tau
                yaw_err = abs((step.pose_after.yaw - want_yaw + math.pi) % tau - math.pi)
                if yaw_err > 1e-9:
                    violations.append(
                        {"rule": "R1", "step": step.index, "message": "yaw breaks the chain"}
                    )
                fx, _, fz = forward_vector(want_yaw)
                dx, dz = x - px, z - pz
                dist = math.hypot(dx, dz)
                step_len = cell_size_m if cell_size_m is not None else dist
                if (
                    abs(dist - step_len) > 1e-9
                    or abs(dx - fx * step_len) > 1e-9
                    or abs(dz - fz * step_len) > 1e-9
                    or abs(y - py) > 1e-9
                    or dist < 1e-9
                ):
                    violations.append(
                        {"rule": "R1", "step": step.index, "message": "position breaks the chain"}
                    )
            else:
                if step.pose_after != prev:
                    violations.append(
                        {
                            "rule": "R1",
                            "step": step.index,
                            "message": "pose changed without a successful motion",
                        }
                    )
        prev = step.pose_after


def verify_trajectory(
    traj: Trajectory,
    judge: TrajectoryJudge | None = None,
    llm_threshold: float = 0.8,
    initial_pose: Pose | None = None,
    cell_size_m: float | None = None,
) -> TrajectoryVerdict:
    """Check the four structural rules and score quality.

    R1: every step before the first key step is motion, and the pose
        chain is consistent throughout.
    R2: every step names a registered tool.
    R3: every step parses and passes argument validation.
    R4: the trajectory ends with its only FinalAnswer.

    Accepted iff no rule is violated and the mean judge score clears
    ``llm_threshold`` (inclusive).
    """
    judge = judge or OracleTrajectoryJudge()
    violations: list[dict] = []

    parsed = [_parse_step(s.code) for s in traj.steps]

    for step, (call, failure) in zip(traj.steps, parsed):
        if failure == "syntax":
            violations.append({"rule": "R3", "step": step.index, "message": "unparseable action"})
        elif failure == "unknown-tool":
            violations.append(
                {"rule": "R2", "step": step.index, "message": f"unknown tool {call.tool!r}"}
            )
        elif failure == "bad-args":
            violations.append(
                {"rule": "R3", "step": step.index, "message": f"invalid arguments for {call.tool}"}
            )
        actual_key = failure is not None or call.tool != "GoNextPoint"
        if step.is_key != actual_key:
            violations.append(
                {"rule": "R1", "step": step.index, "message": "key flag disagrees with the action"}
            )

    first_key = next((i for i, s in enumerate(traj.steps) if s.is_key), len(traj.steps))
    for step, (call, failure) in zip(traj.steps[:first_key], parsed[:first_key]):
        if failure is not None or call.tool != "GoNextPoint":
            violations.append(
                {
                    "rule": "R1",
                    "step": step.index,
                    "message": "non-motion step before the first key step",
                }
            )
    _check_pose_chain(
        traj,
        initial_pose if initial_pose is not None else traj.initial_pose,
        cell_size_m,
        violations,
    )

    final_indices = [
        s.index
        for s, (call, failure) in zip(traj.steps, parsed)
        if failure is None and call.tool == "FinalAnswer"
    ]
    if not traj.steps:
        violations.append({"rule": "R4", "step": -1, "message": "empty trajectory"})
    else:
        last = traj.steps[-1].index
        if final_indices != [last]:
            violations.append(
                {
                    "rule": "R4",
                    "step": last,
                    "message": "trajectory must end with its only FinalAnswer",
                }
            )

    scores = judge.score(traj)
    llm_mean = sum(scores.values()) / len(scores)
    accepted = not violations and llm_mean >= llm_threshold
    return TrajectoryVerdict(
        task_id=traj.task_id,
        violations=violations,
        llm_scores=scores,
        llm_mean=llm_mean,
        accepted=accepted,
    )


# --------------------------------------------------------------------------
# Mutations (for validating the verifier)


def mutate_drop_motion(traj: Trajectory, rng) -> Trajectory:
    """Remove one motion step: breaks the R1 pose chain."""
    out = copy.deepcopy(traj)
    candidates = [i for i, s in enumerate(out.steps) if not s.is_key]
    if not candidates:
        raise TrajectoryError("no motion step to drop")
    del out.steps[rng.choice(candidates)]
    for i, step in enumerate(out.steps):
        step.index = i
    return out


def _mutable_key_steps(steps: list[Step]) -> list[Step]:
    """Key steps other than the closing FinalAnswer, so a mutation hits
    exactly the rule it is designed for."""
    keyed = [s for s in steps if s.is_key]
    return keyed[:-1] if len(keyed) > 1 else keyed


def mutate_rename_tool(traj: Trajectory, rng) -> Trajectory:
    """Rename one key step's tool to something unregistered: breaks R2."""
    out = copy.deepcopy(traj)
    candidates = _mutable_key_steps(out.steps)
    if not candidates:
        raise TrajectoryError("no key step to rename")
    step = candidates[rng.randrange(len(candidates))]
    name = step.code.split("(", 1)[0]
    step.code = "InspectThing" + step.code[len(name):]
    return out


def mutate_corrupt_args(traj: Trajectory, rng) -> Trajectory:
    """Hand one key step an argument its tool never declared: breaks R3."""
    out = copy.deepcopy(traj)
    candidates = _mutable_key_steps(out.steps)
    if not candidates:
        raise TrajectoryError("no key step to corrupt")
    step = candidates[rng.randrange(len(candidates))]
    name = step.code.split("(", 1)[0]
    step.code = f"{name}(payload=1)"
    return out


def mutate_drop_final(traj: Trajectory, rng) -> Trajectory:
    """Delete the closing FinalAnswer: breaks R4."""
    out = copy.deepcopy(traj)
    if not out.steps:
        raise TrajectoryError("empty trajectory")
    del out.steps[-1]
    return out


MUTATIONS = {
    "R1": mutate_drop_motion,
    "R2": mutate_rename_tool,
    "R3": mutate_corrupt_args,
    "R4": mutate_drop_final,
}


# --------------------------------------------------------------------------
# Sampling and export


def sample_for_training(traj: Trajectory, seed: int) -> list[Step]:
    """Keep every key step plus min(#key, #non-key) seeded non-key steps.

    Order and original indices are preserved.
    """
    rng = derive_rng(seed, traj.task_id)
    key = [s for s in traj.steps if s.is_key]
    non_key = [s for s in traj.steps if not s.is_key]
    quota = min(len(key), len(non_key))
    kept = rng.sample(non_key, quota) if quota else []
    return sorted(key + kept, key=lambda s: s.index)


def export_sft(traj: Trajectory, steps: Sequence[Step] | None = None) -> list[dict]:
    """One supervised record per sampled step.

    The input history is the true full prefix of the trajectory, not
    the sampled subset; answers are supervised only through the
    FinalAnswer call inline in its own record.
    """
    chosen = list(steps) if steps is not None else list(traj.steps)
    by_index = {s.index: s for s in traj.steps}
    records = []
    for step in chosen:
        history = [
            {
                "thought": by_index[i].thought,
                "code": by_index[i].code,
                "observation": by_index[i].observation,
            }
            for i in range(step.index)
        ]
        pose_before = (
            traj.initial_pose if step.index == 0 else by_index[step.index - 1].pose_after
        )
        records.append(
            {
                "input": {
                    "question": traj.question,
                    "scene_id": traj.scene_id,
                    "pose": pose_before.to_dict(),
                    "plan": {"text": traj.plan.text, "subgoals": list(traj.plan.subgoals)},
                    "history": history,
                },
                "target": {"thought": step.thought, "code": step.code},
                "meta": {"answer_supervision": "inline_final_answer_call_only"},
            }
        )
    return records
