"""Continuous point-mass analog of the four-room world, on the unit square.

Same wall geometry (two crossing walls with a central door), continuous
2-D acceleration actions, semi-implicit Euler integration with drag. Wall
collisions zero the normal velocity component and keep the position out of
the wall bands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WALL_HALF = 0.02  # half-thickness of the center wall bands
DOOR_HALF = 0.04  # half-width of the door opening around the center


@dataclass(frozen=True)
class PointMassSpec:
    start_pos: tuple[float, float] = (0.15, 0.15)
    goal_pos: tuple[float, float] = (0.4, 0.4)
    dt: float = 0.05
    drag: float = 0.1
    reward_mode: str = "dense"
    max_steps: int = 500
    goal_radius: float = 0.05
    max_speed: float = 2.0

    def __post_init__(self):
        if self.reward_mode not in ("dense", "sparse"):
            raise ValueError(f"unknown reward_mode {self.reward_mode!r}")

    @property
    def obs_dim(self) -> int:
        return 4  # x, y, vx, vy

    @property
    def action_dim(self) -> int:
        return 2


def _in_wall(x: float, y: float) -> bool:
    near_door = abs(x - 0.5) < DOOR_HALF and abs(y - 0.5) < DOOR_HALF
    if near_door:
        return False
    vertical = abs(x - 0.5) < WALL_HALF
    horizontal = abs(y - 0.5) < WALL_HALF
    return vertical or horizontal


def pm_reset(spec: PointMassSpec) -> np.ndarray:
    x, y = spec.start_pos
    return np.array([x, y, 0.0, 0.0], dtype=np.float32)


def pm_oracle_next(spec: PointMassSpec, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    if action.shape != (2,):
        raise ValueError(f"expected 2-d acceleration, got shape {action.shape}")
    pos, vel = state[:2].copy(), state[2:].copy()
    vel = (1.0 - spec.drag) * vel + action * spec.dt
    vel = np.clip(vel, -spec.max_speed, spec.max_speed)
    # axis-separated motion: a blocked axis zeroes that velocity component
    for axis in range(2):
        trial = pos.copy()
        trial[axis] += vel[axis] * spec.dt
        blocked = not (0.0 <= trial[axis] <= 1.0) or _in_wall(trial[0], trial[1])
        if blocked:
            vel[axis] = 0.0
        else:
            pos = trial
    return np.concatenate([pos, vel]).astype(np.float32)


def pm_step(spec: PointMassSpec, state: np.ndarray, action: np.ndarray):
    nxt = pm_oracle_next(spec, state, action)
    dist = float(np.linalg.norm(nxt[:2] - np.asarray(spec.goal_pos)))
    at_goal = dist <= spec.goal_radius
    if spec.reward_mode == "dense":
        reward = -dist / np.sqrt(2.0)
    else:
        reward = 1.0 if at_goal else 0.0
    return nxt, float(reward), bool(at_goal)
