from __future__ import annotations

import pytest

from eqakit.scene import Scene, scene_from_dict


def make_scene_dict(**overrides) -> dict:
    """A small valid scene document: 8x8 grid, walled border, 4 objects."""
    grid = [[1] * 8] + [[1] + [0] * 6 + [1] for _ in range(6)] + [[1] * 8]
    doc = {
        "scene_id": "testbox",
        "cell_size_m": 0.5,
        "origin_xz": [0.0, 0.0],
        "grid": grid,
        "regions": [
            {"name": "north half", "aabb_xz": [0.0, 0.0, 3.5, 1.75]},
            {"name": "south half", "aabb_xz": [0.0, 1.75, 3.5, 3.5]},
        ],
        "objects": [
            {
                "id": "chair_0",
                "category": "chair",
                "center": [1.0, 0.45, 1.0],
                "extents": [0.45, 0.9, 0.45],
                "yaw": 0.0,
                "attributes": {"color": "red", "status": "clean"},
            },
            {
                "id": "chair_1",
                "category": "chair",
                "center": [2.5, 0.45, 1.0],
                "extents": [0.45, 0.9, 0.45],
                "yaw": 0.0,
                "attributes": {"color": "blue"},
            },
            {
                "id": "table_0",
                "category": "table",
                "center": [1.75, 0.4, 2.5],
                "extents": [1.2, 0.8, 0.8],
                "yaw": 0.0,
                "attributes": {"color": "brown", "special": "foldable"},
            },
            {
                "id": "lamp_0",
                "category": "lamp",
                "center": [2.9, 0.8, 2.9],
                "extents": [0.3, 1.6, 0.3],
                "yaw": 0.0,
                "attributes": {"color": "white", "status": "on", "special": "dimmable"},
            },
        ],
        "camera": {"hfov_deg": 90.0, "width": 640, "height": 480, "eye_height_m": 1.5},
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def scene_doc() -> dict:
    return make_scene_dict()


@pytest.fixture
def scene(scene_doc) -> Scene:
    return scene_from_dict(scene_doc)
