"""Four-room gridworld: a 27x27 grid split by center walls with a single door.

Observations are normalized (x, y) coordinates; actions are the four moves
as one-hot vectors. All stepping logic is pure so the same function doubles
as the ground-truth oracle for model-evaluation heatmaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRID_SIZE = 27
DOOR_CELL = (13, 13)
# The door is a plus-shaped opening: the center cell and the four wall cells
# around it. Any path between rooms runs through this opening.
DOOR_CELLS = ((13, 13), (12, 13), (14, 13), (13, 12), (13, 14))
MAX_L1 = 2 * (GRID_SIZE - 1)  # 52, the largest L1 distance on the grid

# action index -> (dx, dy); y grows downward
ACTION_DELTAS = ((1, 0), (-1, 0), (0, 1), (0, -1))
N_ACTIONS = 4

# region label codes used by heatmaps
WALL, ROOM1, ROOM2, ROOM3, ROOM4, DOOR = 0, 1, 2, 3, 4, 5


def base_walls(size: int = GRID_SIZE) -> np.ndarray:
    """Outer walls plus the two center-crossing walls, door opening cleared."""
    if size % 2 == 0:
        raise ValueError("grid size must be odd so the door sits at the center")
    walls = np.zeros((size, size), dtype=bool)
    walls[0, :] = walls[-1, :] = True
    walls[:, 0] = walls[:, -1] = True
    mid = size // 2
    walls[mid, :] = True
    walls[:, mid] = True
    for dx, dy in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
        walls[mid + dy, mid + dx] = False
    return walls


def room_of(cell, size: int = GRID_SIZE) -> int:
    """Region label of a cell: ROOM1..ROOM4 (reading order), DOOR, or WALL."""
    x, y = cell
    mid = size // 2
    if abs(x - mid) + abs(y - mid) <= 1:
        return DOOR
    if x in (0, size - 1) or y in (0, size - 1) or x == mid or y == mid:
        return WALL
    if y < mid:
        return ROOM1 if x < mid else ROOM2
    return ROOM3 if x < mid else ROOM4


@dataclass(frozen=True)
class GridWorldSpec:
    size: int = GRID_SIZE
    wall_layout: np.ndarray = field(default_factory=base_walls)
    task_obstacles: np.ndarray | None = None
    start_cell: tuple[int, int] = (2, 2)
    goal_cell: tuple[int, int] = (12, 12)
    reward_mode: str = "dense"
    max_steps: int = 100

    def __post_init__(self):
        if self.reward_mode not in ("dense", "sparse"):
            raise ValueError(f"unknown reward_mode {self.reward_mode!r}")
        if self.blocked(self.start_cell) or self.blocked(self.goal_cell):
            raise ValueError("start and goal must be on free cells")

    @property
    def obs_dim(self) -> int:
        return 2

    @property
    def action_dim(self) -> int:
        return N_ACTIONS

    def blocked(self, cell) -> bool:
        x, y = cell
        if not (0 <= x < self.size and 0 <= y < self.size):
            return True
        if self.wall_layout[y, x]:
            return True
        return self.task_obstacles is not None and bool(self.task_obstacles[y, x])

    def free_cells(self):
        for y in range(self.size):
            for x in range(self.size):
                if not self.blocked((x, y)):
                    yield (x, y)


def encode_obs(cell, size: int = GRID_SIZE) -> np.ndarray:
    x, y = cell
    return np.array([x / (size - 1), y / (size - 1)], dtype=np.float32)


def decode_obs(obs, size: int = GRID_SIZE) -> tuple[int, int]:
    return (int(round(float(obs[0]) * (size - 1))), int(round(float(obs[1]) * (size - 1))))


def grid_reset(spec: GridWorldSpec) -> np.ndarray:
    """Fixed start distribution: the task's start cell, encoded."""
    return encode_obs(spec.start_cell, spec.size)


def _move(spec: GridWorldSpec, cell, action_index: int):
    dx, dy = ACTION_DELTAS[action_index]
    target = (cell[0] + dx, cell[1] + dy)
    return cell if spec.blocked(target) else target


def grid_step(spec: GridWorldSpec, state: np.ndarray, action: np.ndarray):
    """One transition. Returns (next_state, reward, done).

    Moves one cell in the action's direction unless blocked (then stays).
    Dense reward is -L1(next, goal)/52; sparse reward is 1 at the goal.
    ``done`` marks goal arrival; the episode driver enforces max_steps.
    """
    action = np.asarray(action)
    if action.shape != (N_ACTIONS,):
        raise ValueError(f"expected one-hot action of length {N_ACTIONS}, got shape {action.shape}")
    if not np.isfinite(action).all():
        raise ValueError("non-finite action vector")
    cell = decode_obs(state, spec.size)
    nxt = _move(spec, cell, int(np.argmax(action)))
    goal = spec.goal_cell
    at_goal = nxt == goal
    l1 = abs(nxt[0] - goal[0]) + abs(nxt[1] - goal[1])
    if spec.reward_mode == "dense":
        reward = -l1 / MAX_L1
    else:
        reward = 1.0 if at_goal else 0.0
    return encode_obs(nxt, spec.size), float(reward), bool(at_goal)


def grid_oracle_next(spec: GridWorldSpec, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Ground-truth next observation (step with reward/done suppressed)."""
    cell = decode_obs(state, spec.size)
    nxt = _move(spec, cell, int(np.argmax(np.asarray(action))))
    return encode_obs(nxt, spec.size)


def bfs_reachable(spec: GridWorldSpec, source) -> set:
    """Cells reachable from ``source`` under the spec's walls and obstacles."""
    frontier = [tuple(source)]
    seen = {tuple(source)}
    while frontier:
        cell = frontier.pop()
        for a in range(N_ACTIONS):
            nxt = _move(spec, cell, a)
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def ascii_layout(spec: GridWorldSpec) -> str:
    """Render walls/door/start/goal as a text grid (one row per line)."""
    rows = []
    for y in range(spec.size):
        row = []
        for x in range(spec.size):
            cell = (x, y)
            if cell == spec.start_cell:
                row.append("S")
            elif cell == spec.goal_cell:
                row.append("G")
            elif spec.size == GRID_SIZE and cell in DOOR_CELLS:
                row.append("D")
            elif spec.blocked(cell):
                row.append("#")
            else:
                row.append(".")
        rows.append("".join(row))
    return "\n".join(rows) + "\n"
