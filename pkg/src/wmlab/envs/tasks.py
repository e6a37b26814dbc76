"""Task definitions: the training sequence and the cross-room transfer tasks.

Training task i confines the agent to room i (dense reward, fixed start at
the room's outer corner, goal at the door-side corner) with 8 obstacle cells
scattered in that room, seeded by task id. Transfer tasks are sparse-reward
and cross rooms through the door.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nnkit import Rng
from .grid import (
    DOOR_CELL,
    GRID_SIZE,
    GridWorldSpec,
    base_walls,
    bfs_reachable,
    grid_oracle_next,
    grid_reset,
    grid_step,
    room_of,
)
from .pointmass import PointMassSpec, pm_oracle_next, pm_reset, pm_step


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass(frozen=True)
class TaskSpec:
    env: object  # GridWorldSpec or PointMassSpec
    task_id: int
    name: str


# room index -> (start corner, goal cell beside the door)
TRAINING_STARTS = {1: (2, 2), 2: (24, 2), 3: (2, 24), 4: (24, 24)}
TRAINING_GOALS = {1: (12, 12), 2: (14, 12), 3: (12, 14), 4: (14, 14)}

# start/goal coordinates for the cross-room test tasks
TRANSFER_TASKS = {
    "room1to2": ((11, 8), (14, 9)),
    "room1to3": ((8, 11), (9, 14)),
    "room3to4": ((11, 18), (14, 17)),
}

N_OBSTACLES = 8


def _room_cells(room: int):
    return [
        (x, y)
        for y in range(GRID_SIZE)
        for x in range(GRID_SIZE)
        if room_of((x, y)) == room
    ]


def obstacle_grid(room: int, task_id: int, seed: int = 0) -> np.ndarray:
    """8 obstacle cells inside ``room``, seeded by task id.

    Redraws until start/goal stay free and every free cell still reaches the
    door, so obstacles never seal off part of a room.
    """
    rng = Rng(seed).split(f"obstacles/task{task_id}")
    cells = _room_cells(room)
    keep_free = {TRAINING_STARTS[room], TRAINING_GOALS[room]}
    candidates = [c for c in cells if c not in keep_free]
    while True:
        picked = rng.gen.choice(len(candidates), N_OBSTACLES, replace=False)
        grid = np.zeros((GRID_SIZE, GRID_SIZE), dtype=bool)
        for i in picked:
            x, y = candidates[int(i)]
            grid[y, x] = True
        spec = GridWorldSpec(
            task_obstacles=grid,
            start_cell=TRAINING_STARTS[room],
            goal_cell=TRAINING_GOALS[room],
        )
        reached = bfs_reachable(spec, DOOR_CELL)
        if all(c in reached for c in spec.free_cells()):
            return grid


def make_training_task(room: int, seed: int = 0, with_obstacles: bool = True) -> TaskSpec:
    if room not in TRAINING_STARTS:
        raise ValueError(f"training rooms are 1..4, got {room}")
    obstacles = obstacle_grid(room, task_id=room, seed=seed) if with_obstacles else None
    env = GridWorldSpec(
        task_obstacles=obstacles,
        start_cell=TRAINING_STARTS[room],
        goal_cell=TRAINING_GOALS[room],
        reward_mode="dense",
    )
    return TaskSpec(env=env, task_id=room, name=f"room{room}")


def make_transfer_task(name: str) -> TaskSpec:
    key = name.lower()
    if key not in TRANSFER_TASKS:
        raise KeyError(
            f"unknown transfer task {name!r}; valid names: {', '.join(sorted(TRANSFER_TASKS))}"
        )
    start, goal = TRANSFER_TASKS[key]
    env = GridWorldSpec(start_cell=start, goal_cell=goal, reward_mode="sparse")
    # ids above the training range so buffers/heatmaps can tell them apart
    task_id = 10 + sorted(TRANSFER_TASKS).index(key)
    return TaskSpec(env=env, task_id=task_id, name=key)


def make_eval_env() -> GridWorldSpec:
    """Obstacle-free four-room layout used for prediction heatmaps."""
    return GridWorldSpec(wall_layout=base_walls())


def make_pointmass_task(task_id: int = 1, reward_mode: str = "dense") -> TaskSpec:
    corners = {1: (0.15, 0.15), 2: (0.85, 0.15), 3: (0.15, 0.85), 4: (0.85, 0.85)}
    goals = {1: (0.4, 0.4), 2: (0.6, 0.4), 3: (0.4, 0.6), 4: (0.6, 0.6)}
    env = PointMassSpec(
        start_pos=corners[task_id], goal_pos=goals[task_id], reward_mode=reward_mode
    )
    return TaskSpec(env=env, task_id=task_id, name=f"pm{task_id}")


# ------------------------------------------------------------ env dispatch


def env_reset(task: TaskSpec, rng: Rng | None = None) -> np.ndarray:
    """Initial observation. The start distribution is a point mass, so the
    rng parameter is accepted for interface symmetry but unused."""
    env = task.env
    if isinstance(env, GridWorldSpec):
        return grid_reset(env)
    return pm_reset(env)


def env_step(env, state, action):
    if isinstance(env, GridWorldSpec):
        return grid_step(env, state, action)
    return pm_step(env, state, action)


def oracle_next(env, state, action):
    if isinstance(env, GridWorldSpec):
        return grid_oracle_next(env, state, action)
    return pm_oracle_next(env, state, action)
