"""Tests for the bundled scenes and the frozen regression suite."""

from __future__ import annotations

import pytest

from eqakit.bundles import (
    PIPELINE_SCENE_IDS,
    SUITE_SCENE_ID,
    bundled_scene_ids,
    load_bundled_scene,
    load_suite,
)
from eqakit.planning import bfs_distances
from eqakit.tasks import QUESTION_TYPES, candidate_specs


def test_bundled_ids_cover_pipeline_and_suite() -> None:
    ids = bundled_scene_ids()
    assert set(PIPELINE_SCENE_IDS) <= set(ids)
    assert SUITE_SCENE_ID in ids


def test_unknown_scene_id_raises() -> None:
    with pytest.raises(KeyError, match="no bundled scene"):
        load_bundled_scene("atlantis")


@pytest.mark.parametrize("scene_id", bundled_scene_ids())
def test_bundled_scene_loads_and_is_connected(scene_id) -> None:
    scene = load_bundled_scene(scene_id)
    assert scene.scene_id == scene_id
    free = scene.free_cells()
    reach = bfs_distances(scene.grid, free[0])
    assert set(reach) == set(free), "free space must be one connected component"


@pytest.mark.parametrize("scene_id", PIPELINE_SCENE_IDS)
def test_pipeline_scenes_support_every_question_type(scene_id) -> None:
    scene = load_bundled_scene(scene_id)
    for qtype in QUESTION_TYPES:
        assert candidate_specs(scene, qtype), f"{scene_id} lacks {qtype} candidates"
    counts = {}
    for obj in scene.objects:
        counts[obj.category] = counts.get(obj.category, 0) + 1
    assert any(n >= 2 for n in counts.values()), "needs a multi-instance category"
    assert 8 <= len(scene.objects) <= 12


def test_suite_tasks_bind_to_the_suite_scene() -> None:
    scene, tasks = load_suite()
    assert scene.scene_id == SUITE_SCENE_ID
    assert len(tasks) == 10
    assert {t.qtype for t in tasks} == set(QUESTION_TYPES)
    for task in tasks:
        assert task.scene_id == scene.scene_id
        assert task.format == "mcq"
        for oid in task.related_object_ids:
            scene.object_by_id(oid)
        start = scene.world_to_cell(task.initial_pose.position[0], task.initial_pose.position[2])
        assert scene.is_free(start)


def test_suite_targets_are_reachable_within_twenty_moves() -> None:
    scene, tasks = load_suite()
    from eqakit.planning import object_target_cell

    for task in tasks:
        start = scene.world_to_cell(task.initial_pose.position[0], task.initial_pose.position[2])
        dist = bfs_distances(scene.grid, start)
        for oid in task.related_object_ids:
            cell = object_target_cell(scene, scene.object_by_id(oid))
            assert dist.get(cell, 99) <= 20
