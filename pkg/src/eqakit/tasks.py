"""Question/answer task generation and verification over loaded scenes.

Tasks come in six types (relationship, status, distance, location,
counting, attribute), each grounded in scene geometry so the answer is
derivable without any learned component.  Generation is deterministic
for a given (scene, config, seed) triple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .language import extract_mentions, normalize_answer, pluralize, token_f1, tokenize
from .planning import NoPathError, bfs_distances, multi_target_route, object_target_cell
from .scene import RELATION_TOKENS, Pose, Scene, SceneObject, relation_between
from .seeding import derive_rng

QUESTION_TYPES = (
    "relationship",
    "status",
    "distance",
    "location",
    "counting",
    "attribute",
)

SUBTYPES: dict[str, tuple[str, ...]] = {
    "relationship": (),
    "status": (),
    "distance": ("numeric", "comparative"),
    "location": ("location", "special"),
    "counting": (),
    "attribute": ("color", "special", "size"),
}

FORMAT_MCQ = "mcq"
FORMAT_OPEN = "open"

MIN_START_DISTANCE_M = 3.0
MAX_ROUTE_TARGETS = 6
MAX_COUNTING_INSTANCES = 6

# Padding vocabularies for MCQ distractors when the scene itself does
# not offer enough wrong-but-plausible answers.
_STATUS_POOL = ("open", "closed", "on", "off", "empty", "full", "clean", "messy")
_COLOR_POOL = ("red", "blue", "green", "white", "black", "brown", "gray", "yellow")
_REGION_POOL = ("hallway", "entry nook", "alcove", "corner area")
_SPECIAL_POOL = ("nothing in particular", "a built-in light", "wheels")


class TaskGenerationError(Exception):
    """A question spec cannot be realised on this scene."""


@dataclass(frozen=True)
class QuestionSpec:
    """Semantic core of a question, before any surface text exists."""

    qtype: str
    subtype: str | None
    object_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.qtype not in QUESTION_TYPES:
            raise ValueError(f"unknown question type: {self.qtype!r}")
        allowed = SUBTYPES[self.qtype]
        if allowed and self.subtype not in allowed:
            raise ValueError(f"{self.qtype} requires a subtype from {allowed}")
        if not allowed and self.subtype is not None:
            raise ValueError(f"{self.qtype} does not take a subtype")
        if not self.object_ids:
            raise ValueError("object_ids must not be empty")


@dataclass
class EqaTask:
    """One generated question with its ground truth and start state."""

    task_id: str
    scene_id: str
    qtype: str
    subtype: str | None
    question: str
    answer: str
    format: str
    options: list[str]
    related_object_ids: list[str]
    initial_pose: Pose
    shortest_path_m: float

    def __post_init__(self) -> None:
        if self.qtype not in QUESTION_TYPES:
            raise ValueError(f"unknown question type: {self.qtype!r}")
        if self.format not in (FORMAT_MCQ, FORMAT_OPEN):
            raise ValueError(f"unknown format: {self.format!r}")
        if self.format == FORMAT_MCQ:
            if not 2 <= len(self.options) <= 4:
                raise ValueError("mcq tasks need 2..4 options")
            if self.answer not in self.options:
                raise ValueError("mcq answer must be one of the options")
        elif self.options:
            raise ValueError("open tasks must have no options")
        if not self.related_object_ids:
            raise ValueError("related_object_ids must not be empty")
        if self.shortest_path_m < 0:
            raise ValueError("shortest_path_m must be >= 0")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "scene_id": self.scene_id,
            "qtype": self.qtype,
            "subtype": self.subtype,
            "question": self.question,
            "answer": self.answer,
            "format": self.format,
            "options": list(self.options),
            "related_object_ids": list(self.related_object_ids),
            "initial_pose": self.initial_pose.to_dict(),
            "shortest_path_m": self.shortest_path_m,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EqaTask":
        return cls(
            task_id=doc["task_id"],
            scene_id=doc["scene_id"],
            qtype=doc["qtype"],
            subtype=doc["subtype"],
            question=doc["question"],
            answer=doc["answer"],
            format=doc["format"],
            options=list(doc["options"]),
            related_object_ids=list(doc["related_object_ids"]),
            initial_pose=Pose.from_dict(doc["initial_pose"]),
            shortest_path_m=float(doc["shortest_path_m"]),
        )


@dataclass
class TaskGenConfig:
    """Knobs for one generation run."""

    count: int = 30
    type_weights: dict[str, float] = field(
        default_factory=lambda: {q: 1.0 for q in QUESTION_TYPES}
    )
    mcq_ratio: float = 0.5
    min_start_distance_m: float = MIN_START_DISTANCE_M

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 0.0 <= self.mcq_ratio <= 1.0:
            raise ValueError("mcq_ratio must be within [0, 1]")
        for qtype, weight in self.type_weights.items():
            if qtype not in QUESTION_TYPES:
                raise ValueError(f"unknown question type in weights: {qtype!r}")
            if weight < 0:
                raise ValueError("type weights must be >= 0")
        if not any(self.type_weights.get(q, 0.0) > 0 for q in QUESTION_TYPES):
            raise ValueError("at least one type weight must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskGenConfig":
        kwargs: dict = {}
        for key in ("count", "type_weights", "mcq_ratio", "min_start_distance_m"):
            if key in doc:
                kwargs[key] = doc[key]
        unknown = set(doc) - {"count", "type_weights", "mcq_ratio", "min_start_distance_m"}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**kwargs)


# --------------------------------------------------------------------------
# Ground truth

def _require_attribute(obj: SceneObject, name: str) -> str:
    value = obj.attributes.get(name)
    if not value:
        raise TaskGenerationError(f"{obj.id} has no {name!r} attribute")
    return value


def _center_distance(a: SceneObject, b: SceneObject) -> float:
    return math.dist(a.center, b.center)


def _nearest_landmark(scene: Scene, obj: SceneObject) -> SceneObject:
    others = [o for o in _sorted_objects(scene) if o.id != obj.id]
    if not others:
        raise TaskGenerationError("no landmark object available")
    return min(others, key=lambda o: (_center_distance(obj, o), o.id))


def _sorted_objects(scene: Scene) -> list[SceneObject]:
    return sorted(scene.objects, key=lambda o: o.id)


def ground_truth_answer(scene: Scene, spec: QuestionSpec) -> str:
    """Compute the canonical answer string for a question spec.

    Raises TaskGenerationError when the scene cannot support the
    question (missing attribute, tied comparison, object outside every
    region).
    """
    objs = [scene.object_by_id(oid) for oid in spec.object_ids]
    if spec.qtype == "relationship":
        a, b = objs[0], objs[1]
        return relation_between(a.center, b.center)
    if spec.qtype == "status":
        return _require_attribute(objs[0], "status")
    if spec.qtype == "distance":
        if spec.subtype == "numeric":
            return f"{_center_distance(objs[0], objs[1]):.1f} m"
        anchor, first, second = objs
        d1 = _center_distance(anchor, first)
        d2 = _center_distance(anchor, second)
        if math.isclose(d1, d2):
            raise TaskGenerationError("comparative distance is a tie")
        return first.category if d1 < d2 else second.category
    if spec.qtype == "location":
        if spec.subtype == "location":
            region = scene.enclosing_region(objs[0].center[0], objs[0].center[2])
            if region is None:
                raise TaskGenerationError(f"{objs[0].id} lies outside every region")
            return region.name
        landmark = _nearest_landmark(scene, objs[0])
        relation = relation_between(objs[0].center, landmark.center)
        return f"{relation} the {landmark.category}"
    if spec.qtype == "counting":
        category = objs[0].category
        return str(len(scene.objects_of_category(category)))
    if spec.qtype == "attribute":
        if spec.subtype == "color":
            return _require_attribute(objs[0], "color")
        if spec.subtype == "special":
            return _require_attribute(objs[0], "special")
        a, b = objs[0], objs[1]
        if math.isclose(a.volume(), b.volume()):
            raise TaskGenerationError("size comparison is a tie")
        return a.category if a.volume() > b.volume() else b.category
    raise TaskGenerationError(f"unhandled question type {spec.qtype!r}")


# --------------------------------------------------------------------------
# Surface templates

_TEMPLATES: dict[tuple[str, str | None], tuple[str, ...]] = {
    ("relationship", None): (
        "How is the {a} positioned relative to the {b}?",
        "Is the {a} left of, right of, above, below, or near the {b}?",
        "Relative to the {b}, how is the {a} placed?",
    ),
    ("status", None): (
        "What is the current status of the {a}?",
        "Check the {a}: what status is it in?",
        "If you walked over to the {a}, what status would you report?",
    ),
    ("distance", "numeric"): (
        "How far apart are the {a} and the {b}?",
        "What is the distance between the {a} and the {b}?",
        "Measure the distance in meters from the {a} to the {b}.",
    ),
    ("distance", "comparative"): (
        "Which is closer to the {a}: the {b} or the {c}?",
        "Of the {b} and the {c}, which one is nearer to the {a}?",
        "Does the {b} or the {c} sit closer to the {a}?",
    ),
    ("location", "location"): (
        "Where is the {a} located?",
        "Which region of the scene holds the {a}?",
        "In which part of the scene would you find the {a}?",
    ),
    ("location", "special"): (
        "Where is the {special} {a} relative to the {landmark}?",
        "Relative to the {landmark}, where does the {special} {a} sit?",
        "Locate the {special} {a}: where is it compared to the {landmark}?",
    ),
    ("counting", None): (
        "How many {plural} are in the scene?",
        "Count the {plural} in this scene. How many are there?",
        "How many {plural} in total would a full sweep of the scene find?",
    ),
    ("attribute", "color"): (
        "What color is the {a}?",
        "Which color does the {a} have?",
        "Take a close look at the {a}. What color is it?",
    ),
    ("attribute", "special"): (
        "What is special about the {a}?",
        "What special property does the {a} have?",
        "Name the special feature of the {a}.",
    ),
    ("attribute", "size"): (
        "Which is bigger: the {a} or the {b}?",
        "Of the {a} and the {b}, which one is larger?",
        "Which object is larger overall, the {a} or the {b}?",
    ),
}


def surface_templates(qtype: str, subtype: str | None) -> tuple[str, ...]:
    return _TEMPLATES[(qtype, subtype)]


def _render_question(scene: Scene, spec: QuestionSpec, template: str) -> str:
    objs = [scene.object_by_id(oid) for oid in spec.object_ids]
    slots: dict[str, str] = {}
    if spec.qtype == "counting":
        slots["plural"] = pluralize(objs[0].category)
    elif spec.qtype == "location" and spec.subtype == "special":
        landmark = _nearest_landmark(scene, objs[0])
        slots["a"] = objs[0].category
        slots["special"] = _require_attribute(objs[0], "special")
        slots["landmark"] = landmark.category
    else:
        for name, obj in zip(("a", "b", "c"), objs):
            slots[name] = obj.category
    return template.format(**slots)


# --------------------------------------------------------------------------
# Candidate enumeration

def _single_instance_objects(scene: Scene) -> list[SceneObject]:
    return [
        obj
        for obj in _sorted_objects(scene)
        if len(scene.objects_of_category(obj.category)) == 1
    ]


def _distinct_category_pairs(objects: Sequence[SceneObject]) -> list[tuple[SceneObject, SceneObject]]:
    pairs = []
    for i, a in enumerate(objects):
        for b in objects[i + 1:]:
            if a.category != b.category:
                pairs.append((a, b))
    return pairs


def candidate_specs(scene: Scene, qtype: str) -> list[QuestionSpec]:
    """All well-posed question specs of one type for a scene.

    Objects referred to by bare category must be the only instance of
    that category, otherwise the question would be ambiguous.
    """
    singles = _single_instance_objects(scene)
    specs: list[QuestionSpec] = []
    if qtype == "relationship":
        for a, b in _distinct_category_pairs(singles):
            specs.append(QuestionSpec(qtype, None, (a.id, b.id)))
            specs.append(QuestionSpec(qtype, None, (b.id, a.id)))
    elif qtype == "status":
        for obj in singles:
            if obj.attributes.get("status"):
                specs.append(QuestionSpec(qtype, None, (obj.id,)))
    elif qtype == "distance":
        for a, b in _distinct_category_pairs(singles):
            specs.append(QuestionSpec(qtype, "numeric", (a.id, b.id)))
        for anchor in singles:
            rest = [o for o in singles if o.id != anchor.id]
            for c1, c2 in _distinct_category_pairs(rest):
                if c1.category == anchor.category or c2.category == anchor.category:
                    continue
                d1 = _center_distance(anchor, c1)
                d2 = _center_distance(anchor, c2)
                if abs(d1 - d2) >= 0.3:
                    specs.append(QuestionSpec(qtype, "comparative", (anchor.id, c1.id, c2.id)))
    elif qtype == "location":
        for obj in singles:
            if scene.enclosing_region(obj.center[0], obj.center[2]) is not None:
                specs.append(QuestionSpec(qtype, "location", (obj.id,)))
        for obj in singles:
            if obj.attributes.get("special") and len(scene.objects) > 1:
                specs.append(QuestionSpec(qtype, "special", (obj.id,)))
    elif qtype == "counting":
        for category in scene.categories():
            instances = scene.objects_of_category(category)
            if 1 <= len(instances) <= MAX_COUNTING_INSTANCES:
                ids = tuple(o.id for o in sorted(instances, key=lambda o: o.id))
                specs.append(QuestionSpec(qtype, None, ids))
    elif qtype == "attribute":
        for obj in singles:
            if obj.attributes.get("color"):
                specs.append(QuestionSpec(qtype, "color", (obj.id,)))
        for obj in singles:
            if obj.attributes.get("special"):
                specs.append(QuestionSpec(qtype, "special", (obj.id,)))
        for a, b in _distinct_category_pairs(singles):
            if not math.isclose(a.volume(), b.volume()):
                specs.append(QuestionSpec(qtype, "size", (a.id, b.id)))
    else:
        raise ValueError(f"unknown question type: {qtype!r}")
    return specs


# --------------------------------------------------------------------------
# MCQ options

def _format_distance(meters: float) -> str:
    return f"{meters:.1f} m"


def _mcq_options(scene: Scene, spec: QuestionSpec, answer: str, rng) -> list[str]:
    """Build 2..4 options, answer included, shuffled."""
    distractors: list[str] = []
    if spec.qtype == "relationship":
        pool = [r for r in RELATION_TOKENS if r != answer]
        distractors = rng.sample(pool, 3)
    elif spec.qtype == "status":
        seen = {o.attributes["status"] for o in scene.objects if o.attributes.get("status")}
        pool = sorted(seen | set(_STATUS_POOL))
        pool = [s for s in pool if s != answer]
        distractors = rng.sample(pool, min(3, len(pool)))
    elif spec.qtype == "distance" and spec.subtype == "numeric":
        base = float(answer.split()[0])
        for delta in (0.4, 0.9, 1.7, 2.6, 3.8):
            for candidate in (base + delta, base - delta):
                text = _format_distance(candidate)
                if candidate > 0 and text != answer and text not in distractors:
                    distractors.append(text)
        distractors = rng.sample(distractors, min(3, len(distractors)))
    elif spec.qtype == "distance":
        first, second = (scene.object_by_id(oid) for oid in spec.object_ids[1:])
        distractors = [first.category if answer == second.category else second.category]
    elif spec.qtype == "location" and spec.subtype == "location":
        names = sorted({r.name for r in scene.regions} | set(_REGION_POOL))
        pool = [n for n in names if n != answer]
        distractors = rng.sample(pool, min(3, len(pool)))
    elif spec.qtype == "location":
        landmark = _nearest_landmark(scene, scene.object_by_id(spec.object_ids[0]))
        pool = [
            f"{relation} the {landmark.category}"
            for relation in RELATION_TOKENS
            if f"{relation} the {landmark.category}" != answer
        ]
        distractors = rng.sample(pool, 3)
    elif spec.qtype == "counting":
        count = int(answer)
        pool = sorted({count - 2, count - 1, count + 1, count + 2, count + 3})
        pool = [str(n) for n in pool if n >= 0 and n != count]
        distractors = rng.sample(pool, min(3, len(pool)))
    elif spec.qtype == "attribute" and spec.subtype == "color":
        seen = {o.attributes["color"] for o in scene.objects if o.attributes.get("color")}
        pool = sorted(seen | set(_COLOR_POOL))
        pool = [c for c in pool if c != answer]
        distractors = rng.sample(pool, min(3, len(pool)))
    elif spec.qtype == "attribute" and spec.subtype == "special":
        seen = {o.attributes["special"] for o in scene.objects if o.attributes.get("special")}
        pool = sorted(seen | set(_SPECIAL_POOL))
        pool = [s for s in pool if s != answer]
        distractors = rng.sample(pool, min(3, len(pool)))
    elif spec.qtype == "attribute":
        a, b = (scene.object_by_id(oid) for oid in spec.object_ids)
        distractors = [a.category if answer == b.category else b.category]
    if not distractors:
        raise TaskGenerationError("no distractors available")
    options = [answer, *distractors]
    rng.shuffle(options)
    return options


# --------------------------------------------------------------------------
# Start pose and route

def _route_targets(scene: Scene, object_ids: Sequence[str]) -> list[tuple[int, int]]:
    targets: list[tuple[int, int]] = []
    for oid in object_ids:
        cell = object_target_cell(scene, scene.object_by_id(oid))
        if cell not in targets:
            targets.append(cell)
    return targets


def _sample_start(
    scene: Scene,
    targets: Sequence[tuple[int, int]],
    min_distance_m: float,
    rng,
) -> tuple[int, int]:
    """Pick a free start cell at least min_distance_m of walking from
    the first target, preferring a uniform seeded choice and falling
    back to the farthest reachable cell."""
    dist = bfs_distances(scene.grid, targets[0])
    for target in targets[1:]:
        if target not in dist:
            raise TaskGenerationError(f"target {target} unreachable from {targets[0]}")
    reachable = [cell for cell in sorted(dist) if cell not in targets]
    if not reachable:
        raise TaskGenerationError("no reachable start cell")
    eligible = [
        cell for cell in reachable if dist[cell] * scene.cell_size_m >= min_distance_m
    ]
    if eligible:
        return rng.choice(eligible)
    return max(reachable, key=lambda cell: (dist[cell], cell))


# --------------------------------------------------------------------------
# Generation

@dataclass
class GenerationReport:
    """Tasks produced plus the specs that had to be skipped."""

    tasks: list[EqaTask]
    skipped: list[dict]


def _type_quotas(config: TaskGenConfig) -> dict[str, int]:
    """Largest-remainder apportionment of config.count across types."""
    weights = {q: config.type_weights.get(q, 0.0) for q in QUESTION_TYPES}
    total = sum(weights.values())
    raw = {q: config.count * w / total for q, w in weights.items()}
    quotas = {q: int(raw[q]) for q in QUESTION_TYPES}
    remainder = config.count - sum(quotas.values())
    by_frac = sorted(QUESTION_TYPES, key=lambda q: (raw[q] - quotas[q], q), reverse=True)
    for qtype in by_frac[:remainder]:
        quotas[qtype] += 1
    return {q: n for q, n in quotas.items() if n > 0}


def generate_tasks(scene: Scene, config: TaskGenConfig, seed: int) -> GenerationReport:
    """Deterministically generate tasks for one scene.

    Unsatisfiable quota slots are skipped with a recorded reason rather
    than failing the whole run.
    """
    rng = derive_rng(seed, scene.scene_id)
    tasks: list[EqaTask] = []
    skipped: list[dict] = []
    serial = 0
    for qtype, quota in _type_quotas(config).items():
        pool = candidate_specs(scene, qtype)
        rng.shuffle(pool)
        if not pool:
            skipped.append({"qtype": qtype, "count": quota, "reason": "no-candidates"})
            continue
        produced = 0
        mcq_quota = round(quota * config.mcq_ratio)
        attempts = 0
        while produced < quota and attempts < quota * 4:
            spec = pool[attempts % len(pool)]
            attempts += 1
            try:
                task = _realise(
                    scene,
                    spec,
                    config,
                    rng,
                    serial,
                    as_mcq=produced < mcq_quota,
                )
            except (TaskGenerationError, NoPathError) as exc:
                skipped.append({"qtype": qtype, "spec": spec.object_ids, "reason": str(exc)})
                continue
            tasks.append(task)
            serial += 1
            produced += 1
        if produced < quota:
            skipped.append(
                {"qtype": qtype, "count": quota - produced, "reason": "candidates-exhausted"}
            )
    return GenerationReport(tasks=tasks, skipped=skipped)


def _realise(
    scene: Scene,
    spec: QuestionSpec,
    config: TaskGenConfig,
    rng,
    serial: int,
    as_mcq: bool,
) -> EqaTask:
    answer = ground_truth_answer(scene, spec)
    template = rng.choice(surface_templates(spec.qtype, spec.subtype))
    question = _render_question(scene, spec, template)
    targets = _route_targets(scene, spec.object_ids)
    if len(targets) > MAX_ROUTE_TARGETS:
        raise TaskGenerationError(f"too many route targets ({len(targets)})")
    start = _sample_start(scene, targets, config.min_start_distance_m, rng)
    yaw = rng.choice((0.0, math.pi / 2, math.pi, 3 * math.pi / 2))
    route = multi_target_route(scene.grid, scene.cell_size_m, start, targets)
    x, z = scene.cell_to_world(start)
    options = _mcq_options(scene, spec, answer, rng) if as_mcq else []
    return EqaTask(
        task_id=f"{scene.scene_id}-{spec.qtype}-{serial:03d}",
        scene_id=scene.scene_id,
        qtype=spec.qtype,
        subtype=spec.subtype,
        question=question,
        answer=answer,
        format=FORMAT_MCQ if as_mcq else FORMAT_OPEN,
        options=options,
        related_object_ids=list(spec.object_ids),
        initial_pose=Pose(position=(x, 0.0, z), yaw=yaw),
        shortest_path_m=route.length_m,
    )


# --------------------------------------------------------------------------
# Verification

class GroundingScorer(Protocol):
    """Scores how well a descriptor grounds to one scene object."""

    def score(self, question: str, descriptor: str, obj: dict) -> float: ...


class TaskJudge(Protocol):
    """Scores the overall plausibility of a descriptor/object pairing."""

    def score(self, question: str, descriptor: str, obj: dict) -> float: ...


def object_payload(obj: SceneObject) -> dict:
    """Wire shape for an object handed to scorer ports."""
    return {
        "id": obj.id,
        "category": obj.category,
        "center": list(obj.center),
        "extents": list(obj.extents),
        "attributes": dict(obj.attributes),
    }


class OracleGroundingScorer:
    """Token-overlap grounding: |descriptor ∩ object| / |descriptor|."""

    def score(self, question: str, descriptor: str, obj: dict) -> float:
        desc_tokens = set(tokenize(descriptor))
        if not desc_tokens:
            return 0.0
        obj_tokens = set(tokenize(obj["category"]))
        for value in obj.get("attributes", {}).values():
            obj_tokens.update(tokenize(str(value)))
        return len(desc_tokens & obj_tokens) / len(desc_tokens)


class OracleTaskJudge:
    """Best token-F1 between the descriptor and any object facet."""

    def score(self, question: str, descriptor: str, obj: dict) -> float:
        facets = [obj["category"], *map(str, obj.get("attributes", {}).values())]
        return max(token_f1(descriptor, facet) for facet in facets)


@dataclass
class TaskVerdict:
    """Outcome of verifying one task against its scene."""

    task_id: str
    confidence_score: float
    llm_score: float
    accepted: bool
    reasons: list[str]
    descriptors: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "confidence_score": self.confidence_score,
            "llm_score": self.llm_score,
            "accepted": self.accepted,
            "reasons": list(self.reasons),
            "descriptors": list(self.descriptors),
        }


def extract_descriptors(task: EqaTask, scene: Scene) -> list[str]:
    """Object mentions in the question and options, scene vocabulary included."""
    text = task.question
    if task.options:
        text += " " + " ".join(task.options)
    return extract_mentions(text, extra_vocab=scene.categories())


def verify_task(
    task: EqaTask,
    scene: Scene,
    grounding: GroundingScorer | None = None,
    judge: TaskJudge | None = None,
    confidence_threshold: float = 0.5,
    llm_threshold: float = 0.5,
) -> TaskVerdict:
    """Accept a task iff every mentioned object grounds confidently and
    the judge finds each pairing plausible.

    A scorer failure rejects the task with reason "scorer-unavailable"
    instead of raising.
    """
    grounding = grounding or OracleGroundingScorer()
    judge = judge or OracleTaskJudge()
    descriptors = extract_descriptors(task, scene)
    if not descriptors:
        return TaskVerdict(task.task_id, 0.0, 0.0, False, ["no-descriptors"])
    payloads = [object_payload(obj) for obj in _sorted_objects(scene)]
    rows: list[dict] = []
    try:
        for descriptor in descriptors:
            scores = [grounding.score(task.question, descriptor, p) for p in payloads]
            best = min(range(len(payloads)), key=lambda i: (-scores[i], payloads[i]["id"]))
            judged = judge.score(task.question, descriptor, payloads[best])
            rows.append(
                {
                    "descriptor": descriptor,
                    "object_id": payloads[best]["id"],
                    "grounding": scores[best],
                    "judge": judged,
                }
            )
    except Exception:
        return TaskVerdict(task.task_id, 0.0, 0.0, False, ["scorer-unavailable"])
    confidence = min(row["grounding"] for row in rows)
    llm_score = sum(row["judge"] for row in rows) / len(rows)
    reasons = []
    if confidence < confidence_threshold:
        reasons.append("low-confidence")
    if llm_score < llm_threshold:
        reasons.append("low-llm-score")
    return TaskVerdict(
        task_id=task.task_id,
        confidence_score=confidence,
        llm_score=llm_score,
        accepted=not reasons,
        reasons=reasons,
        descriptors=rows,
    )


def check_task_integrity(task: EqaTask, scene: Scene) -> list[str]:
    """Structural checks independent of any scorer. Returns problems."""
    problems = []
    if task.scene_id != scene.scene_id:
        problems.append("scene-id-mismatch")
    for oid in task.related_object_ids:
        try:
            scene.object_by_id(oid)
        except KeyError:
            problems.append(f"unknown-object:{oid}")
    x, _, z = task.initial_pose.position
    cell = scene.world_to_cell(x, z)
    if not scene.is_free(cell):
        problems.append("start-not-free")
    if task.format == FORMAT_MCQ and normalize_answer(task.answer) not in {
        normalize_answer(o) for o in task.options
    }:
        problems.append("answer-not-in-options")
    return problems
