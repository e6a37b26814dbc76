"""Desk-scale environments: the four-room gridworld and a continuous
point-mass analog, each with a ground-truth stepping oracle."""

from .grid import (
    ACTION_DELTAS,
    DOOR,
    DOOR_CELL,
    DOOR_CELLS,
    GRID_SIZE,
    MAX_L1,
    N_ACTIONS,
    ROOM1,
    ROOM2,
    ROOM3,
    ROOM4,
    WALL,
    GridWorldSpec,
    ascii_layout,
    base_walls,
    bfs_reachable,
    decode_obs,
    encode_obs,
    grid_oracle_next,
    grid_reset,
    grid_step,
    room_of,
)
from .pointmass import PointMassSpec, pm_oracle_next, pm_reset, pm_step
from .tasks import (
    TRAINING_GOALS,
    TRAINING_STARTS,
    TRANSFER_TASKS,
    TaskSpec,
    Transition,
    env_reset,
    env_step,
    make_eval_env,
    make_pointmass_task,
    make_training_task,
    make_transfer_task,
    obstacle_grid,
    oracle_next,
)

__all__ = [
    "ACTION_DELTAS",
    "DOOR",
    "DOOR_CELL",
    "DOOR_CELLS",
    "GRID_SIZE",
    "MAX_L1",
    "N_ACTIONS",
    "ROOM1",
    "ROOM2",
    "ROOM3",
    "ROOM4",
    "WALL",
    "GridWorldSpec",
    "PointMassSpec",
    "TRAINING_GOALS",
    "TRAINING_STARTS",
    "TRANSFER_TASKS",
    "TaskSpec",
    "Transition",
    "ascii_layout",
    "base_walls",
    "bfs_reachable",
    "decode_obs",
    "encode_obs",
    "env_reset",
    "env_step",
    "grid_oracle_next",
    "grid_reset",
    "grid_step",
    "make_eval_env",
    "make_pointmass_task",
    "make_training_task",
    "make_transfer_task",
    "obstacle_grid",
    "oracle_next",
    "pm_oracle_next",
    "pm_reset",
    "pm_step",
    "room_of",
]
