"""Symbolic 3-D scene model: grid/world coordinates, camera geometry, visibility.

Conventions, fixed for the whole package:

* x points east, y points up, z points south.
* yaw rotates about +y; yaw 0 faces -z (north) and the camera forward
  vector is ``(sin(yaw), 0, -cos(yaw))``.
* the occupancy grid is row-major with row indexing +z and column
  indexing +x; ``origin_xz`` is the world position of cell (0, 0)'s
  center.  0 marks a free cell, 1 an occupied one.

Scenes are loaded from JSON and validated strictly: unknown fields are
rejected and every error names the offending field path, e.g.
``objects[0].extents``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

Vec3 = tuple[float, float, float]

DEFAULT_HFOV_DEG = 90.0
DEFAULT_IMAGE_WIDTH = 640
DEFAULT_IMAGE_HEIGHT = 480
DEFAULT_EYE_HEIGHT_M = 1.5

# Distance gate used wherever the package needs a single "can the agent
# see this" range: symbolic view observations and key-step detection.
DEFAULT_VISIBILITY_DIST_M = 10.0

_TAU = 2.0 * math.pi


class SceneValidationError(ValueError):
    """Scene data rejected.  ``field_path`` names the offending entry."""

    def __init__(self, message: str, field_path: str = "") -> None:
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if field_path else message)


# --------------------------------------------------------------------------
# types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Pose:
    """Agent/camera pose: world position plus yaw normalized to [0, 2*pi)."""

    position: Vec3
    yaw: float

    def __post_init__(self) -> None:
        if len(self.position) != 3 or not all(math.isfinite(v) for v in self.position):
            raise ValueError(f"position must be 3 finite numbers, got {self.position!r}")
        if not math.isfinite(self.yaw):
            raise ValueError("yaw must be finite")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "yaw", float(self.yaw) % _TAU)

    def to_dict(self) -> dict[str, Any]:
        return {"position": list(self.position), "yaw": self.yaw}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Pose:
        return cls(position=tuple(data["position"]), yaw=data["yaw"])


@dataclass(frozen=True)
class CameraParams:
    hfov: float  # horizontal field of view, radians, in (0, pi)
    image_width: int
    image_height: int
    eye_height: float

    def __post_init__(self) -> None:
        if not 0.0 < self.hfov < math.pi:
            raise ValueError(f"hfov must be in (0, pi), got {self.hfov}")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be >= 1 pixel")


@dataclass(frozen=True)
class Region:
    """Named axis-aligned floor rectangle: (xmin, zmin, xmax, zmax)."""

    name: str
    aabb_xz: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        xmin, zmin, xmax, zmax = self.aabb_xz
        if not (xmin < xmax and zmin < zmax):
            raise ValueError(f"region {self.name!r}: aabb min must be < max per axis")

    def contains_xz(self, x: float, z: float) -> bool:
        xmin, zmin, xmax, zmax = self.aabb_xz
        return xmin <= x <= xmax and zmin <= z <= zmax

    def area(self) -> float:
        xmin, zmin, xmax, zmax = self.aabb_xz
        return (xmax - xmin) * (zmax - zmin)


@dataclass(frozen=True)
class SceneObject:
    """Oriented box instance.  ``extents`` are full side lengths.

    ``attributes`` carries free-form string facts; the keys ``color``,
    ``status`` and ``special`` are understood by the question generator
    and the VisualQA oracle.  An absent key means unknown.
    """

    id: str
    category: str
    center: Vec3
    extents: Vec3
    yaw: float = 0.0
    attributes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(e <= 0 for e in self.extents):
            raise ValueError(f"object {self.id!r}: extents must be positive")

    def volume(self) -> float:
        ex, ey, ez = self.extents
        return ex * ey * ez

    def corners(self) -> list[Vec3]:
        """The 8 world-space corners of the oriented box."""
        cx, cy, cz = self.center
        hx, hy, hz = (e / 2.0 for e in self.extents)
        s, c = math.sin(self.yaw), math.cos(self.yaw)
        out: list[Vec3] = []
        for dx in (-hx, hx):
            for dy in (-hy, hy):
                for dz in (-hz, hz):
                    # rotate the local offset about +y, then translate
                    rx = c * dx + s * dz
                    rz = -s * dx + c * dz
                    out.append((cx + rx, cy + dy, cz + rz))
        return out


@dataclass(frozen=True)
class Scene:
    scene_id: str
    cell_size_m: float
    origin_xz: tuple[float, float]
    grid: tuple[tuple[int, ...], ...]
    regions: tuple[Region, ...] = ()
    objects: tuple[SceneObject, ...] = ()
    camera: CameraParams = CameraParams(
        hfov=math.radians(DEFAULT_HFOV_DEG),
        image_width=DEFAULT_IMAGE_WIDTH,
        image_height=DEFAULT_IMAGE_HEIGHT,
        eye_height=DEFAULT_EYE_HEIGHT_M,
    )

    # -- grid helpers ------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return len(self.grid)

    @property
    def n_cols(self) -> int:
        return len(self.grid[0])

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return 0 <= r < self.n_rows and 0 <= c < self.n_cols

    def is_free(self, cell: tuple[int, int]) -> bool:
        return self.in_bounds(cell) and self.grid[cell[0]][cell[1]] == 0

    def world_to_cell(self, x: float, z: float) -> tuple[int, int]:
        x0, z0 = self.origin_xz
        col = round((x - x0) / self.cell_size_m)
        row = round((z - z0) / self.cell_size_m)
        return (row, col)

    def cell_to_world(self, cell: tuple[int, int]) -> tuple[float, float]:
        row, col = cell
        x0, z0 = self.origin_xz
        return (x0 + col * self.cell_size_m, z0 + row * self.cell_size_m)

    def free_cells(self) -> list[tuple[int, int]]:
        return [
            (r, c)
            for r in range(self.n_rows)
            for c in range(self.n_cols)
            if self.grid[r][c] == 0
        ]

    # -- object / region helpers -------------------------------------------

    def object_by_id(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(f"no object with id {object_id!r} in scene {self.scene_id!r}")

    def objects_of_category(self, category: str) -> list[SceneObject]:
        return [o for o in self.objects if o.category == category]

    def categories(self) -> list[str]:
        return sorted({o.category for o in self.objects})

    def enclosing_region(self, x: float, z: float) -> Region | None:
        """Smallest region containing (x, z), or None."""
        hits = [r for r in self.regions if r.contains_xz(x, z)]
        if not hits:
            return None
        return min(hits, key=lambda r: (r.area(), r.name))


# --------------------------------------------------------------------------
# camera geometry
# --------------------------------------------------------------------------


def forward_vector(yaw: float) -> Vec3:
    """Unit camera forward for a yaw: (sin(yaw), 0, -cos(yaw))."""
    return (math.sin(yaw), 0.0, -math.cos(yaw))


def is_visible(pose: Pose, obj: SceneObject, max_dist: float, hfov: float) -> bool:
    """Distance-and-frustum visibility of an object center from a pose.

    True iff the center lies within ``max_dist`` of the pose position and
    inside the horizontal field-of-view cone: the angle between the camera
    forward vector and the direction to the center is at most hfov / 2.
    A center coincident with the pose position counts as visible.
    """
    px, py, pz = pose.position
    ox, oy, oz = obj.center
    dx, dy, dz = ox - px, oy - py, oz - pz
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    if dist > max_dist:
        return False
    if dist == 0.0:
        return True
    fx, fy, fz = forward_vector(pose.yaw)
    cos_angle = (fx * dx + fy * dy + fz * dz) / dist
    return cos_angle >= math.cos(hfov / 2.0)


def project_bbox(
    pose: Pose, camera: CameraParams, obj: SceneObject
) -> tuple[float, float, float, float] | None:
    """Project an object's box onto the image plane of an ideal pinhole.

    The eye sits at ``pose.position`` raised by ``camera.eye_height`` on y,
    looking along ``forward_vector(pose.yaw)`` with +y up.  The 8 box
    corners are projected with square pixels and focal length
    ``(image_width / 2) / tan(hfov / 2)``, so the horizontal frustum edge
    maps exactly onto the image edge.  Box edges crossing the near plane
    are clipped there.  Returns the enclosing pixel box intersected with
    the image rectangle, or None when nothing lies in front of the camera
    (or the intersection is empty).
    """
    near = 1e-6
    ex, ey, ez = pose.position
    eye = (ex, ey + camera.eye_height, ez)
    fwd = forward_vector(pose.yaw)
    right = (math.cos(pose.yaw), 0.0, math.sin(pose.yaw))

    cam_pts: list[tuple[float, float, float]] = []
    for corner in obj.corners():
        d = (corner[0] - eye[0], corner[1] - eye[1], corner[2] - eye[2])
        x = d[0] * right[0] + d[1] * right[1] + d[2] * right[2]
        y = d[1]  # up is +y exactly
        z = d[0] * fwd[0] + d[1] * fwd[1] + d[2] * fwd[2]
        cam_pts.append((x, y, z))

    visible_pts = [p for p in cam_pts if p[2] >= near]
    if not visible_pts:
        return None

    # Clip box edges straddling the near plane and keep the crossing points.
    # Corner index bits encode (x, y, z) offsets, so two corners share an
    # edge exactly when their indices differ in a single bit.
    for i in range(8):
        for bit in (1, 2, 4):
            j = i ^ bit
            if j < i:
                continue
            a, b = cam_pts[i], cam_pts[j]
            if (a[2] < near) != (b[2] < near):
                t = (near - a[2]) / (b[2] - a[2])
                visible_pts.append(
                    (
                        a[0] + t * (b[0] - a[0]),
                        a[1] + t * (b[1] - a[1]),
                        near,
                    )
                )

    focal = (camera.image_width / 2.0) / math.tan(camera.hfov / 2.0)
    cx = camera.image_width / 2.0
    cy = camera.image_height / 2.0
    us = [cx + focal * (x / z) for x, _, z in visible_pts]
    vs = [cy - focal * (y / z) for _, y, z in visible_pts]

    u0 = max(min(us), 0.0)
    v0 = max(min(vs), 0.0)
    u1 = min(max(us), float(camera.image_width))
    v1 = min(max(vs), float(camera.image_height))
    if u1 <= u0 or v1 <= v0:
        return None
    return (u0, v0, u1, v1)


# --------------------------------------------------------------------------
# spatial relations
# --------------------------------------------------------------------------

NEAR_THRESHOLD_M = 1.5

RELATION_TOKENS = ("left of", "right of", "above", "below", "near")


def relation_between(a: Vec3, b: Vec3) -> str:
    """How center ``a`` sits relative to center ``b`` in the world frame.

    "near" wins inside NEAR_THRESHOLD_M.  Otherwise a strictly dominant
    vertical offset gives above/below, and anything else is left/right of
    as seen by a viewer facing north (-z): left is west (-x), right east.
    """
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    dz = a[2] - b[2]
    if math.sqrt(dx * dx + dy * dy + dz * dz) <= NEAR_THRESHOLD_M:
        return "near"
    if abs(dy) > max(abs(dx), abs(dz)):
        return "above" if dy > 0 else "below"
    return "left of" if dx < 0 else "right of"


# --------------------------------------------------------------------------
# loading / validation
# --------------------------------------------------------------------------

_TOP_FIELDS = {"scene_id", "cell_size_m", "origin_xz", "grid", "regions", "objects", "camera"}
_REGION_FIELDS = {"name", "aabb_xz"}
_OBJECT_FIELDS = {"id", "category", "center", "extents", "yaw", "attributes"}
_CAMERA_FIELDS = {"hfov_deg", "width", "height", "eye_height_m"}


def _want(data: dict[str, Any], key: str, path: str) -> Any:
    if key not in data:
        raise SceneValidationError("required field missing", f"{path}{key}" if path else key)
    return data[key]


def _check_unknown(data: dict[str, Any], allowed: set[str], path: str) -> None:
    for key in data:
        if key not in allowed:
            where = f"{path}{key}" if path else key
            raise SceneValidationError("unknown field", where)


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneValidationError(f"expected a number, got {type(value).__name__}", path)
    return float(value)


def _string(value: Any, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise SceneValidationError("expected a non-empty string", path)
    return value


def _vec(value: Any, n: int, path: str) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) != n:
        raise SceneValidationError(f"expected a list of {n} numbers", path)
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _load_region(data: Any, path: str) -> Region:
    if not isinstance(data, dict):
        raise SceneValidationError("expected an object", path)
    _check_unknown(data, _REGION_FIELDS, f"{path}.")
    name = _string(_want(data, "name", f"{path}."), f"{path}.name")
    aabb = _vec(_want(data, "aabb_xz", f"{path}."), 4, f"{path}.aabb_xz")
    xmin, zmin, xmax, zmax = aabb
    if not (xmin < xmax and zmin < zmax):
        raise SceneValidationError("aabb min must be strictly less than max", f"{path}.aabb_xz")
    return Region(name=name, aabb_xz=(xmin, zmin, xmax, zmax))


def _load_object(data: Any, path: str) -> SceneObject:
    if not isinstance(data, dict):
        raise SceneValidationError("expected an object", path)
    _check_unknown(data, _OBJECT_FIELDS, f"{path}.")
    oid = _string(_want(data, "id", f"{path}."), f"{path}.id")
    category = _string(_want(data, "category", f"{path}."), f"{path}.category")
    center = _vec(_want(data, "center", f"{path}."), 3, f"{path}.center")
    extents = _vec(_want(data, "extents", f"{path}."), 3, f"{path}.extents")
    if any(e <= 0 for e in extents):
        raise SceneValidationError("extents must all be positive", f"{path}.extents")
    yaw = _number(data.get("yaw", 0.0), f"{path}.yaw")
    attrs_raw = data.get("attributes", {})
    if not isinstance(attrs_raw, dict):
        raise SceneValidationError("expected a string-to-string map", f"{path}.attributes")
    attributes: dict[str, str] = {}
    for key, value in attrs_raw.items():
        if not isinstance(value, str):
            raise SceneValidationError("expected a string value", f"{path}.attributes.{key}")
        attributes[str(key)] = value
    return SceneObject(
        id=oid, category=category, center=center, extents=extents, yaw=yaw, attributes=attributes
    )


def _load_camera(data: Any, path: str) -> CameraParams:
    if not isinstance(data, dict):
        raise SceneValidationError("expected an object", path)
    _check_unknown(data, _CAMERA_FIELDS, f"{path}.")
    hfov_deg = _number(data.get("hfov_deg", DEFAULT_HFOV_DEG), f"{path}.hfov_deg")
    if not 0.0 < hfov_deg < 180.0:
        raise SceneValidationError("hfov_deg must be in (0, 180)", f"{path}.hfov_deg")
    width = data.get("width", DEFAULT_IMAGE_WIDTH)
    height = data.get("height", DEFAULT_IMAGE_HEIGHT)
    for name, value in (("width", width), ("height", height)):
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise SceneValidationError("expected a positive integer", f"{path}.{name}")
    eye = _number(data.get("eye_height_m", DEFAULT_EYE_HEIGHT_M), f"{path}.eye_height_m")
    return CameraParams(
        hfov=math.radians(hfov_deg), image_width=width, image_height=height, eye_height=eye
    )


def scene_from_dict(data: dict[str, Any]) -> Scene:
    """Validate a parsed scene document and build a Scene."""
    if not isinstance(data, dict):
        raise SceneValidationError("scene document must be a JSON object")
    _check_unknown(data, _TOP_FIELDS, "")

    scene_id = _string(_want(data, "scene_id", ""), "scene_id")
    cell_size = _number(_want(data, "cell_size_m", ""), "cell_size_m")
    if cell_size <= 0:
        raise SceneValidationError("must be positive", "cell_size_m")
    origin = _vec(_want(data, "origin_xz", ""), 2, "origin_xz")

    grid_raw = _want(data, "grid", "")
    if not isinstance(grid_raw, list) or not grid_raw:
        raise SceneValidationError("expected a non-empty list of rows", "grid")
    n_cols = None
    rows: list[tuple[int, ...]] = []
    for r, row in enumerate(grid_raw):
        if not isinstance(row, list) or not row:
            raise SceneValidationError("expected a non-empty row", f"grid[{r}]")
        if n_cols is None:
            n_cols = len(row)
        elif len(row) != n_cols:
            raise SceneValidationError(
                f"row length {len(row)} differs from first row ({n_cols})", f"grid[{r}]"
            )
        for c, cell in enumerate(row):
            if isinstance(cell, bool) or cell not in (0, 1):
                raise SceneValidationError("cells must be 0 or 1", f"grid[{r}][{c}]")
        rows.append(tuple(row))

    regions = tuple(
        _load_region(entry, f"regions[{i}]") for i, entry in enumerate(data.get("regions", []))
    )

    objects: list[SceneObject] = []
    seen_ids: set[str] = set()
    for i, entry in enumerate(data.get("objects", [])):
        obj = _load_object(entry, f"objects[{i}]")
        if obj.id in seen_ids:
            raise SceneValidationError(f"duplicate object id {obj.id!r}", f"objects[{i}].id")
        seen_ids.add(obj.id)
        objects.append(obj)

    camera = _load_camera(data.get("camera", {}), "camera")

    scene = Scene(
        scene_id=scene_id,
        cell_size_m=cell_size,
        origin_xz=(origin[0], origin[1]),
        grid=tuple(rows),
        regions=regions,
        objects=tuple(objects),
        camera=camera,
    )

    for i, obj in enumerate(scene.objects):
        cell = scene.world_to_cell(obj.center[0], obj.center[2])
        if not scene.in_bounds(cell):
            raise SceneValidationError(
                f"object center {obj.center} maps to cell {cell}, outside the grid",
                f"objects[{i}].center",
            )
    return scene


def load_scene(path: str | Path) -> Scene:
    """Load and validate a scene JSON file."""
    p = Path(path)
    if not p.is_file():
        raise SceneValidationError(f"scene file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneValidationError(f"malformed JSON in {p}: {exc}") from exc
    return scene_from_dict(data)


def scene_to_dict(scene: Scene) -> dict[str, Any]:
    """Inverse of scene_from_dict, for writing bundled/test scenes."""
    return {
        "scene_id": scene.scene_id,
        "cell_size_m": scene.cell_size_m,
        "origin_xz": list(scene.origin_xz),
        "grid": [list(row) for row in scene.grid],
        "regions": [{"name": r.name, "aabb_xz": list(r.aabb_xz)} for r in scene.regions],
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "center": list(o.center),
                "extents": list(o.extents),
                "yaw": o.yaw,
                "attributes": dict(o.attributes),
            }
            for o in scene.objects
        ],
        "camera": {
            "hfov_deg": math.degrees(scene.camera.hfov),
            "width": scene.camera.image_width,
            "height": scene.camera.image_height,
            "eye_height_m": scene.camera.eye_height,
        },
    }
