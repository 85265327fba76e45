"""Grid navigation: A* shortest paths, multi-target routes, direction tokens.

Paths live on the scene occupancy grid: 4-connected moves between free
cells, unit step cost, no diagonals.  Cells are (row, col) pairs.  All
tie-breaking is deterministic so that identical inputs always produce
identical routes.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .scene import Scene, SceneObject

Grid = Sequence[Sequence[int]]
Cell = tuple[int, int]

_TAU = 2.0 * math.pi


class PlanningError(ValueError):
    pass


class NoPathError(PlanningError):
    pass


class Direction(str, Enum):
    """One motion token: rotate relative to the current heading, then
    advance one cell.  turn_left is a 90 degree counterclockwise turn
    viewed from above (north up), turn_right clockwise."""

    MOVE_FORWARD = "move_forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    TURN_AROUND = "turn_around"


# yaw deltas per token; yaw increases clockwise viewed from above
# (yaw 0 faces -z north, yaw pi/2 faces +x east).
DIRECTION_YAW_DELTA: dict[Direction, float] = {
    Direction.MOVE_FORWARD: 0.0,
    Direction.TURN_LEFT: -math.pi / 2.0,
    Direction.TURN_RIGHT: math.pi / 2.0,
    Direction.TURN_AROUND: math.pi,
}


@dataclass(frozen=True)
class GridPath:
    """A 4-connected path.  ``length_m`` is (#cells - 1) * cell size."""

    cells: tuple[Cell, ...]
    length_m: float

    @classmethod
    def from_cells(cls, cells: Sequence[Cell], cell_size_m: float) -> GridPath:
        cells = tuple((int(r), int(c)) for r, c in cells)
        return cls(cells=cells, length_m=(len(cells) - 1) * cell_size_m)


def _check_endpoint(grid: Grid, cell: Cell, label: str) -> None:
    r, c = cell
    if not (0 <= r < len(grid) and 0 <= c < len(grid[0])):
        raise PlanningError(f"{label} cell {cell} is out of bounds")
    if grid[r][c] != 0:
        raise PlanningError(f"{label} cell {cell} is occupied")


def astar(grid: Grid, cell_size_m: float, start: Cell, goal: Cell) -> GridPath:
    """Shortest 4-connected path with the Manhattan-distance heuristic.

    Unit step cost; f-score ties expand in (row, col) ascending order so
    the returned path is deterministic.  Raises NoPathError when the goal
    is unreachable and PlanningError for occupied or out-of-bounds
    endpoints.
    """
    start = (int(start[0]), int(start[1]))
    goal = (int(goal[0]), int(goal[1]))
    _check_endpoint(grid, start, "start")
    _check_endpoint(grid, goal, "goal")
    if start == goal:
        return GridPath.from_cells([start], cell_size_m)

    n_rows, n_cols = len(grid), len(grid[0])

    def h(cell: Cell) -> int:
        return abs(cell[0] - goal[0]) + abs(cell[1] - goal[1])

    g_score: dict[Cell, int] = {start: 0}
    came_from: dict[Cell, Cell] = {}
    open_heap: list[tuple[int, int, int]] = [(h(start), start[0], start[1])]
    closed: set[Cell] = set()

    while open_heap:
        _, r, c = heapq.heappop(open_heap)
        current = (r, c)
        if current in closed:
            continue
        closed.add(current)
        if current == goal:
            path = [current]
            while current in came_from:
                current = came_from[current]
                path.append(current)
            path.reverse()
            return GridPath.from_cells(path, cell_size_m)
        g = g_score[current]
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if not (0 <= nr < n_rows and 0 <= nc < n_cols) or grid[nr][nc] != 0:
                continue
            neighbor = (nr, nc)
            tentative = g + 1
            if tentative < g_score.get(neighbor, 1 << 60):
                g_score[neighbor] = tentative
                came_from[neighbor] = current
                heapq.heappush(open_heap, (tentative + h(neighbor), nr, nc))

    raise NoPathError(f"no path from {start} to {goal}")


def _join_paths(segments: Sequence[GridPath], cell_size_m: float) -> GridPath:
    cells: list[Cell] = list(segments[0].cells)
    for seg in segments[1:]:
        # the segment starts where the previous one ended; do not repeat it
        cells.extend(seg.cells[1:])
    return GridPath.from_cells(cells, cell_size_m)


def multi_target_route(
    grid: Grid, cell_size_m: float, start: Cell, targets: Sequence[Cell]
) -> GridPath:
    """Route from start through every target cell.

    Up to 4 targets the visiting order is chosen by exhaustive permutation
    search (cheapest total length; earlier permutations win ties).  For 5
    or 6 targets a nearest-neighbor order is used instead.  Raises if any
    target is unreachable.
    """
    targets = [(int(r), int(c)) for r, c in targets]
    if not 1 <= len(targets) <= 6:
        raise PlanningError(f"expected 1..6 targets, got {len(targets)}")

    nodes = [start] + targets
    pair_paths: dict[tuple[Cell, Cell], GridPath] = {}
    for a, b in itertools.combinations(range(len(nodes)), 2):
        path = astar(grid, cell_size_m, nodes[a], nodes[b])
        pair_paths[(nodes[a], nodes[b])] = path
        pair_paths[(nodes[b], nodes[a])] = GridPath.from_cells(
            tuple(reversed(path.cells)), cell_size_m
        )

    def order_cost(order: Sequence[Cell]) -> float:
        total = 0.0
        prev = start
        for t in order:
            total += pair_paths[(prev, t)].length_m
            prev = t
        return total

    if len(targets) <= 4:
        best_order = min(itertools.permutations(targets), key=order_cost)
    else:
        remaining = list(targets)
        order: list[Cell] = []
        prev = start
        while remaining:
            nxt = min(remaining, key=lambda t: (pair_paths[(prev, t)].length_m, t))
            order.append(nxt)
            remaining.remove(nxt)
            prev = nxt
        best_order = tuple(order)

    segments = []
    prev = start
    for t in best_order:
        segments.append(pair_paths[(prev, t)])
        prev = t
    return _join_paths(segments, cell_size_m)


# --------------------------------------------------------------------------
# headings and direction tokens
# --------------------------------------------------------------------------

# heading as (drow, dcol); yaw 0 faces -z which is row-decreasing
_YAW_TO_STEP: dict[int, Cell] = {0: (-1, 0), 1: (0, 1), 2: (1, 0), 3: (0, -1)}
_STEP_TO_QUARTER = {v: k for k, v in _YAW_TO_STEP.items()}


def yaw_quarter(yaw: float) -> int:
    """Quantize a yaw that is a multiple of pi/2 to 0..3 quarter turns."""
    q = round((yaw % _TAU) / (math.pi / 2.0)) % 4
    residual = (yaw - q * (math.pi / 2.0)) % _TAU
    if min(residual, _TAU - residual) > 1e-9:
        raise PlanningError(f"yaw {yaw} is not a multiple of pi/2")
    return q


def direction_between(from_quarter: int, to_quarter: int) -> Direction:
    delta = (to_quarter - from_quarter) % 4
    return {
        0: Direction.MOVE_FORWARD,
        1: Direction.TURN_RIGHT,
        2: Direction.TURN_AROUND,
        3: Direction.TURN_LEFT,
    }[delta]


def apply_direction(cell: Cell, quarter: int, direction: Direction) -> tuple[Cell, int]:
    """New (cell, quarter heading) after a token: rotate, then advance one cell."""
    delta = {
        Direction.MOVE_FORWARD: 0,
        Direction.TURN_RIGHT: 1,
        Direction.TURN_AROUND: 2,
        Direction.TURN_LEFT: 3,
    }[direction]
    quarter = (quarter + delta) % 4
    dr, dc = _YAW_TO_STEP[quarter]
    return (cell[0] + dr, cell[1] + dc), quarter


def path_to_directions(path: GridPath, initial_yaw: float) -> list[Direction]:
    """Compile a grid path into motion tokens, one per edge.

    The initial yaw must be a multiple of pi/2.  Every edge must be a
    single 4-connected step; a diagonal or longer jump raises.
    """
    quarter = yaw_quarter(initial_yaw)
    tokens: list[Direction] = []
    for a, b in zip(path.cells, path.cells[1:]):
        step = (b[0] - a[0], b[1] - a[1])
        if step not in _STEP_TO_QUARTER:
            raise PlanningError(f"path step {a} -> {b} is not a unit 4-connected move")
        target = _STEP_TO_QUARTER[step]
        tokens.append(direction_between(quarter, target))
        quarter = target
    return tokens


def simulate_directions(
    start: Cell, initial_yaw: float, tokens: Sequence[Direction]
) -> list[Cell]:
    """Cells visited when executing tokens from a start cell and heading."""
    quarter = yaw_quarter(initial_yaw)
    cell = start
    cells = [cell]
    for token in tokens:
        cell, quarter = apply_direction(cell, quarter, token)
        cells.append(cell)
    return cells


# --------------------------------------------------------------------------
# lengths
# --------------------------------------------------------------------------


def path_length(cells: Sequence[Cell], cell_size_m: float) -> float:
    """Length in meters of a grid cell path: (#cells - 1) * cell size."""
    if not cells:
        return 0.0
    return (len(cells) - 1) * cell_size_m


def traveled_length(positions: Sequence[Sequence[float]]) -> float:
    """Sum of consecutive Euclidean distances over a position sequence."""
    total = 0.0
    for a, b in zip(positions, positions[1:]):
        total += math.dist(a, b)
    return total


# --------------------------------------------------------------------------
# scene glue
# --------------------------------------------------------------------------


def bfs_distances(grid: Grid, source: Cell) -> dict[Cell, int]:
    """Hop count from a free source cell to every reachable free cell."""
    _check_endpoint(grid, source, "source")
    n_rows, n_cols = len(grid), len(grid[0])
    dist = {source: 0}
    frontier = [source]
    while frontier:
        nxt: list[Cell] = []
        for r, c in frontier:
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                nr, nc = r + dr, c + dc
                if 0 <= nr < n_rows and 0 <= nc < n_cols and grid[nr][nc] == 0:
                    if (nr, nc) not in dist:
                        dist[(nr, nc)] = dist[(r, c)] + 1
                        nxt.append((nr, nc))
        frontier = nxt
    return dist


def object_target_cell(scene: Scene, obj: SceneObject, max_offset_m: float = 2.0) -> Cell:
    """Nearest free cell to an object's center, within ``max_offset_m``.

    This is the cell a route visits to "reach" the object.  Candidates are
    ranked by true world distance to the center, ties broken by (row, col).
    """
    ox, _, oz = obj.center
    best: tuple[float, Cell] | None = None
    reach = int(math.ceil(max_offset_m / scene.cell_size_m)) + 1
    center_cell = scene.world_to_cell(ox, oz)
    for r in range(center_cell[0] - reach, center_cell[0] + reach + 1):
        for c in range(center_cell[1] - reach, center_cell[1] + reach + 1):
            if not scene.is_free((r, c)):
                continue
            wx, wz = scene.cell_to_world((r, c))
            d = math.hypot(wx - ox, wz - oz)
            if d <= max_offset_m and (best is None or (d, (r, c)) < best):
                best = (d, (r, c))
    if best is None:
        raise PlanningError(
            f"no free cell within {max_offset_m} m of object {obj.id!r} at {obj.center}"
        )
    return best[1]
