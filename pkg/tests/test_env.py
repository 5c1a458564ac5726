import math

import numpy as np
import pytest

from namo_rl.env import (
    GRID_SIZE, MAX_STEPS, TERMS, VECTOR_SIZE, WEIGHTS, ContractViolation, EpisodeFinishedError, NamoEnv,
    NoiseConfig, Normalizer, Observation, VecEnv, apply_noise, build_vector, compute_reward, rasterize_grid,
    reward_terms,
)
from namo_rl.env.observation import A_SLICE, BOX, BV_SLICE, FREE, GOAL, ROBOT, RP_SLICE, WALL
from namo_rl.env.reward import DEFAULT_DIAGONAL, POLICY_DT
from namo_rl.physics import OMEGA_MAX, V_MAX, Action, ContactReport, WorldState, make_box, make_robot
from namo_rl.physics import kernels as K
from namo_rl.scenegen import MAP_IDS, Scene, SpawnConfig, get_map, load_map

ZERO = NoiseConfig.zero()


def open_room():
    doc = get_map("c").to_document()
    doc["walls"] = doc["walls"][:4]
    doc["id"] = "open"
    return load_map(doc, check_connectivity=False)


def hand_scene(layout, robot, boxes=(), goal=(0.0, 2.0)):
    world = WorldState.build(robot, list(boxes), layout.walls_array(K.MAX_BOXES + 7))
    present = world.bodies[1:, K.BACTIVE] > 0
    return Scene(layout, world, np.array(goal, dtype=float), present)


@pytest.mark.parametrize("map_id", MAP_IDS)
@pytest.mark.parametrize("lam", [0.0, 1.0])
def test_observation_shapes(map_id, lam):
    env = NamoEnv(get_map(map_id), SpawnConfig(lam), seed=3)
    obs = env.reset()
    assert obs.vector.shape == (VECTOR_SIZE,) and VECTOR_SIZE == 242
    assert obs.grid.shape == (GRID_SIZE, GRID_SIZE) == (48, 48)
    assert np.all(np.abs(obs.vector) <= 1) and np.all(np.abs(obs.grid) <= 1)


def test_lambda_zero_box_block_is_zero():
    env = NamoEnv(get_map("c"), SpawnConfig(0.0), seed=0)
    obs = env.reset()
    assert np.all(obs.vector[BV_SLICE] == 0.0)
    assert obs.vector[BV_SLICE].size == 200


def test_absent_box_entries_stay_zero_under_noise():
    env = NamoEnv(get_map("c"), SpawnConfig(0.4), seed=5)
    for _ in range(5):
        obs = env.reset()
        bv = obs.vector[BV_SLICE].reshape(5, 5, 8)
        present = env.vec.box_present[0]
        assert np.all(bv[:, ~present] == 0.0)


def test_reset_replicates_history_and_zero_actions():
    env = NamoEnv(get_map("c"), SpawnConfig(0.6), noise=ZERO, seed=1)
    v = env.reset().vector
    rp = v[RP_SLICE].reshape(5, 6)
    bv = v[BV_SLICE].reshape(5, 40)
    assert np.all(rp == rp[0]) and np.all(bv == bv[0])
    assert np.all(v[A_SLICE] == 0.0)


def test_equal_seeds_equal_observations():
    a = NamoEnv(get_map("e"), SpawnConfig(0.6), seed=9).reset()
    b = NamoEnv(get_map("e"), SpawnConfig(0.6), seed=9).reset()
    assert np.array_equal(a.vector, b.vector) and np.array_equal(a.grid, b.grid)


def test_history_shift():
    env = NamoEnv(get_map("c"), SpawnConfig(0.4), noise=ZERO, seed=2)
    prev = env.reset().vector
    for _ in range(4):
        cur, _, _ = env.step(Action(0.7, 0.4))
        cur = cur.vector
        for sl, w in ((RP_SLICE, 6), (BV_SLICE, 40), (A_SLICE, 2)):
            p, c = prev[sl].reshape(5, w), cur[sl].reshape(5, w)
            assert np.array_equal(c[:4], p[1:])
        prev = cur
    # newest action frame is the normalized command
    assert prev[A_SLICE][-2:] == pytest.approx([0.7 / V_MAX, 0.4 / OMEGA_MAX], abs=1e-6)


def test_build_vector_layout_and_errors():
    assert np.array_equal(build_vector(np.zeros(2), np.zeros((5, 6)), np.zeros((5, 40)), np.zeros((5, 2))),
                          np.zeros(242))
    v = build_vector(np.array([0.1, 0.2]), np.full((5, 6), 0.3), np.full((5, 40), 0.4), np.full((5, 2), 0.5))
    assert np.all(v[:2] == [0.1, 0.2]) and np.all(v[RP_SLICE] == 0.3) and np.all(v[BV_SLICE] == 0.4)
    assert np.all(v[A_SLICE] == 0.5)
    with pytest.raises(ContractViolation):
        build_vector(np.zeros(2), np.zeros((4, 6)), np.zeros((5, 40)), np.zeros((5, 2)))


def test_corner_normalizes_to_one():
    norm = Normalizer(get_map("c"))
    row = make_robot(3.0, 3.0, 0.0).to_row()
    assert norm.robot_frame(row)[:2] == pytest.approx([1.0, 1.0])
    assert norm.robot_frame(make_robot(0, 0, math.pi).to_row())[4] == pytest.approx(1.0)


def test_grid_empty_room_labels():
    layout = open_room()
    world = WorldState.build(make_robot(-1.0, -1.0, 0.3), walls=layout.walls_array())
    g = rasterize_grid(world, np.array([1.5, 1.5]), layout)
    assert set(np.unique(g)) == {FREE, WALL, ROBOT, GOAL}
    assert g[0, 24] == WALL  # bottom wall is row 0
    assert np.sum(g == ROBOT) >= 1


def test_grid_box_block_is_five_by_five():
    layout = open_room()
    cell = 6.0 / 48
    # centre the box on a cell centre: x = -3 + (i + 0.5) * cell
    cx = -3 + (20 + 0.5) * cell
    cy = -3 + (30 + 0.5) * cell
    world = WorldState.build(make_robot(-2.0, -2.0, 0.0), [make_box(cx, cy, 0.0)], layout.walls_array())
    g = rasterize_grid(world, np.array([2.0, -2.0]), layout)
    rows, cols = np.nonzero(g == BOX)
    assert len(rows) == 25
    assert (rows.min(), rows.max(), cols.min(), cols.max()) == (28, 32, 18, 22)


def test_grid_point_in_rectangle_oracle():
    layout = open_room()
    rng = np.random.default_rng(4)
    cell = 6.0 / 48
    centers = -3 + (np.arange(48) + 0.5) * cell
    X, Y = np.meshgrid(centers, centers)
    for _ in range(20):
        x, y, th = rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-np.pi, np.pi)
        world = WorldState.build(make_robot(-2.3, -2.3, 0.0), [make_box(x, y, th)], layout.walls_array())
        g = rasterize_grid(world, np.array([2.2, 2.2]), layout)
        lx = np.cos(th) * (X - x) + np.sin(th) * (Y - y)
        ly = -np.sin(th) * (X - x) + np.cos(th) * (Y - y)
        inside = (np.abs(lx) <= 0.3) & (np.abs(ly) <= 0.3)
        assert np.array_equal(g == BOX, inside)


def test_success_within_goal_radius():
    layout = open_room()
    env = NamoEnv(layout, SpawnConfig(0.0), noise=ZERO)
    env.reset_to(hand_scene(layout, make_robot(0.0, 1.8, 0.0), goal=(0.0, 2.0)))
    _, rew, status = env.step(Action(0.0, 0.0))
    assert status.outcome == "success" and status.done
    assert rew.goal == 10.0
    with pytest.raises(EpisodeFinishedError):
        env.step(Action(0.0, 0.0))


def test_timeout_exactly_at_135():
    layout = open_room()
    env = NamoEnv(layout, SpawnConfig(0.0), noise=ZERO)
    env.reset_to(hand_scene(layout, make_robot(-2.0, -2.0, 0.0), goal=(2.0, 2.0)))
    for k in range(1, MAX_STEPS + 1):
        _, rew, status = env.step(Action(0.0, 0.0))
        assert status.steps_elapsed == k
        assert status.done == (k == MAX_STEPS)
        assert rew.wall_collision == 0.0 and rew.box_collision == 0.0
    assert status.outcome == "timeout" and MAX_STEPS == 135


def test_reward_rest_far_from_goal_is_time_only():
    layout = open_room()
    w = WorldState.build(make_robot(-3.0, -3.0, 0.0), walls=layout.walls_array())
    rep = ContactReport(False, frozenset(), frozenset(), 0.0)
    r = compute_reward(w, w, Action(0.0, 0.0), rep, (3.0, 3.0))
    assert r.total == pytest.approx(-1.0)


def test_reward_success_step():
    w0 = WorldState.build(make_robot(0.0, 0.0, 0.0))
    rep = ContactReport(False, frozenset(), frozenset(), 0.0)
    r = compute_reward(w0, w0, Action(0.0, 0.0), rep, (0.1, 0.0))
    d = 0.1
    assert r.total == pytest.approx(10 - 1 + (1 - d / DEFAULT_DIAGONAL) * 0.1)


def test_reward_full_speed_toward_goal():
    prev = WorldState.build(make_robot(0.0, 0.0, 0.0, speed=V_MAX))
    nxt = WorldState.build(make_robot(V_MAX * POLICY_DT, 0.0, 0.0, speed=V_MAX), time=POLICY_DT)
    rep = ContactReport(False, frozenset(), frozenset(), 0.0)
    r = compute_reward(prev, nxt, Action(V_MAX, 0.0), rep, (3.0, 0.0))
    assert r.progress == pytest.approx(1.0)
    assert r.vel_offset == pytest.approx(0.0) and r.vel_effort == pytest.approx(-0.05)


def test_reward_term_ranges_random():
    rng = np.random.default_rng(0)
    n = 100_000
    prev = rng.uniform(-3, 3, (n, 2))
    nxt = prev + rng.normal(0, 0.5, (n, 2))
    target = np.stack([rng.uniform(-0.5, 1.0, n), rng.uniform(-1.5, 1.5, n)], 1)
    out = reward_terms(prev, nxt, rng.uniform(-2, 2, n), rng.uniform(-3, 3, n), target, rng.random(n) < 0.3,
                       rng.random(n) < 0.3, rng.uniform(-3, 3, (n, 2)), rng.random(n) < 0.1)
    ranges = {"goal": (0, 1), "progress": (-1, 1), "dist": (0, 1), "wall_collision": (-1, 0),
              "box_collision": (-1, 0), "vel_effort": (-1, 0), "rot_effort": (-1, 0), "vel_offset": (-1, 0),
              "rot_offset": (-1, 0), "time": (-1, -1)}
    for j, name in enumerate(TERMS):
        lo, hi = ranges[name]
        w = WEIGHTS[name]
        assert out[:, j].min() >= lo * w - 1e-12 and out[:, j].max() <= hi * w + 1e-12, name


def test_noise_zero_is_identity_and_variance():
    rng = np.random.default_rng(0)
    obs = Observation(np.full(242, 0.2), np.zeros((48, 48)))
    same = apply_noise(obs, ZERO, rng)
    assert np.array_equal(same.vector, obs.vector) and np.array_equal(same.grid, obs.grid)
    cfg = NoiseConfig(0.01, 0.02, 0.0)
    vals, grids = [], []
    for _ in range(420):  # 420 * 242 > 10^5 samples
        o = apply_noise(obs, cfg, rng)
        vals.append(o.vector - 0.2)
        grids.append(o.grid[:5, :5].ravel())
    v = np.concatenate(vals)
    assert v.size >= 100_000
    assert np.var(v) == pytest.approx(1e-4, rel=0.05)
    g = np.concatenate(grids)
    vv = np.concatenate([x[:25] for x in vals])
    assert abs(np.corrcoef(vv, g)[0, 1]) < 0.01 * 5  # 10^4 pairs; 5-sigma-ish band on a zero correlation


def test_noise_cross_correlation_large_sample():
    rng = np.random.default_rng(1)
    cfg = NoiseConfig(0.01, 0.02, 0.0)
    obs = Observation(np.zeros((200, 242)), np.zeros((200, 48, 48)))
    o = apply_noise(obs, cfg, rng)
    v = o.vector[:, 2:].ravel()[:400_000]
    g = o.grid.reshape(-1)[:v.size]
    assert abs(np.corrcoef(v, g)[0, 1]) < 0.01


def test_action_noise_clamps():
    rng = np.random.default_rng(0)
    a = apply_noise(np.array([[1.0, 1.5]] * 1000), NoiseConfig(0, 0, 0.5), rng)
    assert a[:, 0].max() <= 1.0 and a[:, 1].max() <= 1.5 and a[:, 0].min() >= -0.5


def test_zero_noise_determinism():
    def run():
        env = VecEnv([get_map("c")], 3, SpawnConfig(0.4), ZERO, seed=8, auto_reset=True)
        env.reset()
        rng = np.random.default_rng(0)
        out = []
        for _ in range(40):
            a = np.stack([rng.uniform(-0.5, 1, 3), rng.uniform(-1.5, 1.5, 3)], 1)
            obs, rew, done, succ, _ = env.step(a)
            out.append((obs.vector.copy(), rew.copy()))
        return out

    for (v1, r1), (v2, r2) in zip(run(), run()):
        assert np.array_equal(v1, v2) and np.array_equal(r1, r2)


def test_success_and_timeout_exclusive_in_batch():
    env = VecEnv([get_map("c")], 8, SpawnConfig(0.2), seed=1, auto_reset=True)
    env.reset()
    rng = np.random.default_rng(2)
    for _ in range(300):
        a = np.stack([rng.uniform(-0.5, 1, 8), rng.uniform(-1.5, 1.5, 8)], 1)
        _, _, done, succ, eps = env.step(a)
        assert np.all(env.steps <= MAX_STEPS)
        for ep in eps:
            assert ep["steps"] <= MAX_STEPS
            assert ep["success"] or ep["steps"] == MAX_STEPS
