"""Bundled demo scenes and the frozen controller regression suite.

Four small rooms ship inside the package: three pipeline scenes sized
for dataset generation demos, and ``boxroom``, a single 6x6-interior
room paired with a frozen ten-task suite used as a controller
regression floor.
"""

from __future__ import annotations

import json
from importlib import resources

from .scene import Scene, scene_from_dict
from .tasks import EqaTask

PIPELINE_SCENE_IDS = ("studio-loft", "reading-den", "galley-flat")
SUITE_SCENE_ID = "boxroom"
SUITE_MAX_STEPS = 40


def _data_root():
    return resources.files("eqakit").joinpath("data")


def bundled_scene_ids() -> tuple[str, ...]:
    return PIPELINE_SCENE_IDS + (SUITE_SCENE_ID,)


def bundled_scene_doc(scene_id: str) -> dict:
    """The raw JSON document for a bundled scene."""
    if scene_id not in bundled_scene_ids():
        raise KeyError(
            f"no bundled scene {scene_id!r}; choices: {', '.join(bundled_scene_ids())}"
        )
    path = _data_root().joinpath(f"{scene_id}.json")
    return json.loads(path.read_text(encoding="utf-8"))


def load_bundled_scene(scene_id: str) -> Scene:
    return scene_from_dict(bundled_scene_doc(scene_id))


def load_suite() -> tuple[Scene, list[EqaTask]]:
    """The boxroom scene plus its frozen ten-task regression suite."""
    scene = load_bundled_scene(SUITE_SCENE_ID)
    doc = json.loads(
        _data_root().joinpath("boxroom_suite.json").read_text(encoding="utf-8")
    )
    tasks = [EqaTask.from_dict(entry) for entry in doc["tasks"]]
    return scene, tasks
