import numpy as np
import pytest

from wmlab.envs import (
    DOOR_CELL,
    DOOR_CELLS,
    GRID_SIZE,
    MAX_L1,
    ROOM1,
    ROOM2,
    GridWorldSpec,
    PointMassSpec,
    ascii_layout,
    base_walls,
    bfs_reachable,
    decode_obs,
    encode_obs,
    env_reset,
    grid_oracle_next,
    grid_step,
    make_training_task,
    make_transfer_task,
    obstacle_grid,
    pm_oracle_next,
    pm_reset,
    pm_step,
    room_of,
)
from wmlab.nnkit import Rng, one_hot

RIGHT, LEFT, DOWN, UP = (one_hot(i, 4) for i in range(4))


# ------------------------------------------------------------------ reset


def test_reset_task1_is_room1_corner():
    task = make_training_task(1)
    obs = env_reset(task)
    cell = decode_obs(obs)
    assert cell == (2, 2)
    assert room_of(cell) == ROOM1


def test_reset_transfer_room1to2_matches_published_coordinates():
    task = make_transfer_task("room1to2")
    assert decode_obs(env_reset(task)) == (11, 8)
    assert task.env.goal_cell == (14, 9)
    assert room_of(task.env.goal_cell) == ROOM2


def test_reset_is_deterministic():
    task = make_training_task(2)
    assert np.array_equal(env_reset(task), env_reset(task))


# ------------------------------------------------------------------- step


def test_step_into_outer_wall_stays_put():
    spec = GridWorldSpec(start_cell=(1, 1), goal_cell=(5, 5))
    state = encode_obs((1, 1))
    nxt, _, done = grid_step(spec, state, LEFT)
    assert decode_obs(nxt) == (1, 1)
    assert not done


def test_step_sparse_goal_reward():
    spec = GridWorldSpec(start_cell=(2, 2), goal_cell=(5, 5), reward_mode="sparse")
    state = encode_obs((5, 4))
    nxt, reward, done = grid_step(spec, state, DOWN)
    assert decode_obs(nxt) == (5, 5)
    assert reward == 1.0
    assert done


def test_step_sparse_nongoal_reward_zero():
    spec = GridWorldSpec(start_cell=(2, 2), goal_cell=(5, 5), reward_mode="sparse")
    _, reward, done = grid_step(spec, encode_obs((2, 2)), RIGHT)
    assert reward == 0.0 and not done


def test_dense_reward_closed_form_everywhere():
    # Exhaustive scan: reward after any move equals -L1(next, goal)/52.
    spec = GridWorldSpec(start_cell=(2, 2), goal_cell=(12, 12))
    for cell in spec.free_cells():
        state = encode_obs(cell)
        for a in range(4):
            nxt, reward, _ = grid_step(spec, state, one_hot(a, 4))
            nc = decode_obs(nxt)
            l1 = abs(nc[0] - 12) + abs(nc[1] - 12)
            assert reward == pytest.approx(-l1 / MAX_L1)
    # anchor points of the closed form
    at_goal = grid_step(spec, encode_obs((12, 11)), DOWN)
    assert at_goal[1] == 0.0 and at_goal[2]
    assert MAX_L1 == 52


def test_step_rejects_malformed_action():
    spec = GridWorldSpec()
    with pytest.raises(ValueError):
        grid_step(spec, encode_obs((2, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        grid_step(spec, encode_obs((2, 2)), np.array([np.nan, 0, 0, 0]))


# ------------------------------------------------------------ oracle_next


def test_oracle_matches_step_on_random_pairs():
    task = make_training_task(1)
    spec = task.env
    free = list(spec.free_cells())
    rng = Rng(123)
    idx = rng.gen.integers(0, len(free), 10_000)
    acts = rng.gen.integers(0, 4, 10_000)
    for i, a in zip(idx, acts):
        state = encode_obs(free[int(i)])
        action = one_hot(int(a), 4)
        via_step, _, _ = grid_step(spec, state, action)
        via_oracle = grid_oracle_next(spec, state, action)
        assert np.array_equal(via_step, via_oracle)


def test_oracle_blocked_move_is_identity():
    spec = GridWorldSpec()
    state = encode_obs((12, 1))
    nxt = grid_oracle_next(spec, state, RIGHT)  # center wall at x=13
    assert np.array_equal(nxt, state)


def test_door_connects_rooms():
    spec = GridWorldSpec()
    reached = bfs_reachable(spec, (2, 2))
    assert DOOR_CELL in reached
    assert (20, 2) in reached  # a room-2 cell
    assert (20, 20) in reached  # a room-4 cell


def test_rooms_disconnected_when_door_sealed():
    walls = base_walls()
    for x, y in DOOR_CELLS:
        walls[y, x] = True
    spec = GridWorldSpec(wall_layout=walls, start_cell=(2, 2), goal_cell=(5, 5))
    reached = bfs_reachable(spec, (2, 2))
    assert all(room_of(c) == ROOM1 for c in reached)


def test_all_free_cells_reach_door():
    for room in (1, 2, 3, 4):
        spec = make_training_task(room).env
        reached = bfs_reachable(spec, DOOR_CELL)
        for cell in spec.free_cells():
            assert cell in reached, f"{cell} cut off in room {room}"


# ------------------------------------------------------------ encoding


def test_obs_encoding_bijective_over_free_cells():
    spec = GridWorldSpec()
    for cell in spec.free_cells():
        assert decode_obs(encode_obs(cell)) == cell


def test_obstacles_seeded_and_in_room():
    a = obstacle_grid(room=1, task_id=1, seed=0)
    b = obstacle_grid(room=1, task_id=1, seed=0)
    c = obstacle_grid(room=1, task_id=1, seed=9)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.sum() == 8
    ys, xs = np.nonzero(a)
    for x, y in zip(xs, ys):
        assert room_of((x, y)) == ROOM1


# ---------------------------------------------------------------- export


def test_ascii_layout_shape_and_markers():
    task = make_training_task(1)
    text = ascii_layout(task.env)
    lines = text.splitlines()
    assert len(lines) == GRID_SIZE
    assert all(len(line) == GRID_SIZE for line in lines)
    joined = "".join(lines)
    assert joined.count("S") == 1
    assert joined.count("G") == 1
    assert joined.count("D") == 5
    assert lines[0] == "#" * GRID_SIZE


# -------------------------------------------------------------- point mass


def test_pm_reset_zero_velocity():
    spec = PointMassSpec()
    obs = pm_reset(spec)
    assert obs.shape == (4,)
    assert np.allclose(obs[2:], 0.0)


def test_pm_position_stays_in_unit_square():
    spec = PointMassSpec()
    rng = Rng(7)
    state = pm_reset(spec)
    for _ in range(500):
        action = rng.uniform(-1, 1, 2)
        state, _, _ = pm_step(spec, state, action)
        assert 0.0 <= state[0] <= 1.0
        assert 0.0 <= state[1] <= 1.0


def test_pm_wall_zeroes_normal_velocity():
    spec = PointMassSpec()
    # drive straight at the vertical center wall from the left
    state = np.array([0.46, 0.25, 0.5, 0.0], dtype=np.float32)
    nxt = pm_oracle_next(spec, state, np.array([1.0, 0.0]))
    assert nxt[0] <= 0.5 - 0.02 + 1e-6  # still left of the wall band
    assert nxt[2] == 0.0  # normal velocity zeroed


def test_pm_dense_reward_is_negative_distance():
    spec = PointMassSpec(goal_pos=(0.4, 0.4))
    state = pm_reset(spec)
    nxt, reward, _ = pm_step(spec, state, np.zeros(2))
    dist = np.linalg.norm(nxt[:2] - np.array([0.4, 0.4]))
    assert reward == pytest.approx(-dist / np.sqrt(2))


def test_pm_sparse_goal():
    spec = PointMassSpec(start_pos=(0.39, 0.4), goal_pos=(0.4, 0.4), reward_mode="sparse")
    state = pm_reset(spec)
    _, reward, done = pm_step(spec, state, np.zeros(2))
    assert reward == 1.0 and done


def test_transfer_task_unknown_name_lists_valid():
    with pytest.raises(KeyError, match="room1to2"):
        make_transfer_task("room9to1")
