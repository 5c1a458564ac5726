import math

import numpy as np
import pytest

from namo_rl.physics import (
    DT, Action, InvalidActionError, Pose2D, RigidBody2D, WorldState, body_vertices, integrate_unicycle, make_box,
    make_robot, rows_vertices, step_world, walls_array,
)
from namo_rl.physics import kernels as K
from namo_rl.selftest import push_scenarios, run_pushes


def test_unicycle_straight_at_target_speed():
    r = integrate_unicycle(make_robot(0, 0, 0, speed=1.0), Action(1.0, 0.0), 1 / 60)
    assert r.pose.x == pytest.approx(1 / 60, abs=1e-9)
    assert r.pose.y == pytest.approx(0.0, abs=1e-12)
    assert r.pose.theta == pytest.approx(0.0, abs=1e-12)


def test_unicycle_rest_stays_put():
    r = integrate_unicycle(make_robot(1, 2, 0.5), Action(0.0, 0.0), 1 / 60)
    assert (r.pose.x, r.pose.y) == (1.0, 2.0)
    assert r.pose.theta == pytest.approx(0.5)


def test_unicycle_turn_accumulates():
    robot = make_robot(0, 0, 0, omega=math.pi / 4)
    for _ in range(60):
        robot = integrate_unicycle(robot, Action(0.0, math.pi / 4), 1 / 60)
    assert robot.pose.theta == pytest.approx(math.pi / 4, abs=1e-9)


def test_unicycle_acceleration_cap():
    r = integrate_unicycle(make_robot(0, 0, 0), Action(1.0, 0.0), 0.1)
    # 2 m/s^2 cap: at most 0.2 m/s after 0.1 s
    assert np.linalg.norm(r.linear_velocity) == pytest.approx(0.2, abs=1e-9)


def test_unicycle_no_lateral_velocity_in_free_space():
    robot = make_robot(0, 0, 0.3, speed=0.8)
    for _ in range(120):
        robot = integrate_unicycle(robot, Action(0.8, 1.0), DT)
    # the velocity was set along the heading used for the position update, before theta advanced
    th = robot.pose.theta - robot.angular_velocity * DT
    lateral = -math.sin(th) * robot.linear_velocity[0] + math.cos(th) * robot.linear_velocity[1]
    assert abs(lateral) < 1e-9


@pytest.mark.parametrize("bad", [Action(float("nan"), 0.0), Action(0.0, float("inf")), Action(2.0, 0.0),
                                 Action(0.0, -3.0)])
def test_invalid_action_rejected(bad):
    with pytest.raises(InvalidActionError):
        integrate_unicycle(make_robot(), bad, DT)
    with pytest.raises(InvalidActionError):
        step_world(WorldState.build(make_robot()), bad)


def test_dt_must_be_positive():
    with pytest.raises(ValueError):
        integrate_unicycle(make_robot(), Action(0, 0), 0.0)


def test_theta_wraps():
    assert Pose2D(0, 0, 3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)
    assert Pose2D(0, 0, -math.pi).theta == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        Pose2D(float("nan"), 0, 0)


def test_heading_stays_wrapped_over_many_steps():
    rng = np.random.default_rng(3)
    world = WorldState.build(make_robot())
    for _ in range(3000):
        world, _ = step_world(world, Action(0.0, float(rng.uniform(-1.5, 1.5))))
        assert -math.pi < world.bodies[0, K.BTH] <= math.pi


def test_body_vertices_winding():
    sq = RigidBody2D(Pose2D(0, 0, 0), half_extents=np.array([0.5, 0.5]))
    np.testing.assert_allclose(body_vertices(sq), [[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]])
    rot = RigidBody2D(Pose2D(0, 0, math.pi / 2), half_extents=np.array([0.5, 0.5]))
    np.testing.assert_allclose(body_vertices(rot), [[-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5], [0.5, 0.5]],
                               atol=1e-12)


def test_body_vertices_rotated_box():
    box = make_box(2, 1, math.pi / 4)
    c = s = math.sqrt(0.5)
    expect = [(2 + c * lx - s * ly, 1 + s * lx + c * ly) for lx, ly in [(0.3, 0.3), (-0.3, 0.3), (-0.3, -0.3),
                                                                       (0.3, -0.3)]]
    np.testing.assert_allclose(body_vertices(box), expect, atol=1e-12)
    np.testing.assert_allclose(rows_vertices(box.to_row()), expect, atol=1e-12)


def test_push_moves_box_and_slows_robot():
    world = WorldState.build(make_robot(0, 0, 0, speed=0.5), [make_box(0.66, 0, 0)])
    hit = set()
    for _ in range(40):
        world, rep = step_world(world, Action(0.5, 0.0))
        hit |= rep.robot_box_contacts
    assert hit == {0}
    assert world.bodies[1, K.BX] > 0.7
    assert world.bodies[0, K.BVX] < 0.5
    assert abs(world.bodies[1, K.BY]) < 1e-6


def test_single_contact_momentum_oracle():
    # robot at 0.5 m/s meets a resting box; with restitution 0 the pair can at most share momentum,
    # so the box never outruns the robot's momentum and the robot loses speed
    world = WorldState.build(make_robot(0, 0, 0, speed=0.5), [make_box(0.66, 0, 0)])
    m_r, m_b = 30.0, 5.0
    p0 = m_r * 0.5
    for _ in range(6):
        world, _ = step_world(world, Action(0.5, 0.0))
    vb = world.bodies[1, K.BVX]
    assert 0.0 < vb
    assert m_b * vb <= p0 + 1e-9


def test_off_center_push_rotates_box():
    walls = walls_array([[1.5, -3, 1.5, 3]])
    world = WorldState.build(make_robot(0, 0.25, 0), [make_box(0.9, 0, 0)], walls)
    spin = 0.0
    for _ in range(60):
        world, _ = step_world(world, Action(0.5, 0.0))
        spin = max(spin, abs(world.bodies[1, K.BW]))
    assert spin > 1e-3


def test_statics_hold():
    world = WorldState.build(make_robot(-2, 0, 0.2), [make_box(1, 1, 0.4), None, make_box(-1, 2, -1.0)],
                             walls_array([[3, -3, 3, 3]]))
    out, rep = step_world(world, Action(0.0, 0.0))
    assert np.array_equal(out.bodies, world.bodies)
    assert np.array_equal(out.walls, world.walls)
    assert out.time == pytest.approx(world.time + DT)
    assert rep.max_penetration == 0.0


def test_wall_never_moves_and_blocks_robot():
    walls = walls_array([[1.0, -2, 1.0, 2]])
    world = WorldState.build(make_robot(0, 0, 0), walls=walls)
    touched = False
    for _ in range(200):
        world, rep = step_world(world, Action(1.0, 0.0))
        touched |= rep.robot_wall_contact
    assert touched
    assert np.array_equal(world.walls, walls)
    # robot front face stops at the wall surface (x = 1 - 0.05)
    assert world.bodies[0, K.BX] + 0.35 <= 0.95 + 0.01


def test_box_kinetic_energy_dissipates_without_command():
    world = WorldState.build(make_robot(-3, 0, 0), [make_box(0, 0, 0)])
    world.bodies[1, K.BVX] = 0.8
    world.bodies[1, K.BW] = 0.5
    last = world.box_kinetic_energy()
    for _ in range(120):
        world, _ = step_world(world, Action(0.0, 0.0))
        ke = world.box_kinetic_energy()
        assert ke <= last + 1e-12
        last = ke
    assert last == 0.0


def test_two_boxes_in_series_stall():
    # one box is pushable at full speed; two in series visibly slow the robot
    def speed(n):
        boxes = [make_box(0.66 + 0.61 * i, 0, 0) for i in range(n)]
        world = WorldState.build(make_robot(0, 0, 0, speed=0.5), boxes)
        for _ in range(120):
            world, _ = step_world(world, Action(1.0, 0.0))
        return world.bodies[0, K.BVX]

    assert speed(2) < speed(1)


def test_push_scenarios_penetration_and_determinism():
    bodies, walls, actions = push_scenarios(100, seed=11)
    a, pen = run_pushes(bodies, walls, actions)
    b, _ = run_pushes(bodies, walls, actions)
    assert pen <= 0.01
    assert np.array_equal(a, b)


def test_determinism_independent_of_batch_size():
    bodies, walls, actions = push_scenarios(12, seed=5)
    together, _ = run_pushes(bodies, walls, actions, policy_steps=3)
    alone, _ = run_pushes(bodies[4:5], walls[4:5], actions[4:5], policy_steps=3)
    assert np.array_equal(together[4], alone[0])
