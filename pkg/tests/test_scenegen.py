import copy
import json

import numpy as np
import pytest

from namo_rl.physics import kernels as K
from namo_rl.scenegen import (
    ABSENT, CHALLENGING, MAP_IDS, RANDOM, CurriculumState, MapValidationError, SpawnConfig, curriculum_update,
    draw_slot_modes, generate_scene, get_map, load_map, regions_connected, scene_rng,
)
from namo_rl.scenegen.maps import builtin_map_path


def _doc(map_id="c"):
    return json.loads(builtin_map_path(map_id).read_text())


@pytest.mark.parametrize("map_id", MAP_IDS)
def test_builtin_maps_validate(map_id):
    m = get_map(map_id)
    assert m.id == map_id
    assert regions_connected(m)
    assert not regions_connected(m, plug_passages=True)
    x0, y0, x1, y1 = m.room_bounds
    assert 5.0 <= x1 - x0 <= 7.0 and 5.0 <= y1 - y0 <= 7.0
    for pose, r in m.challenging_poses:
        assert x0 <= pose.x <= x1 and y0 <= pose.y <= y1
    for _, _, width in m.passage_descriptors:
        assert 1.0 <= width <= 2.0


def test_map_c_single_passage():
    m = get_map("c")
    assert len(m.passage_descriptors) == 1
    assert m.passage_descriptors[0][2] == pytest.approx(1.4)


def test_wide_passage_rejected_with_path():
    doc = _doc()
    doc["passages"][0][2] = 3.0
    with pytest.raises(MapValidationError) as exc:
        load_map(doc)
    assert any(path.startswith("passages[0]") for path, _ in exc.value.errors)


def test_unknown_and_missing_keys_reported():
    doc = _doc()
    doc["colour"] = "red"
    del doc["goal_spawn"]
    with pytest.raises(MapValidationError) as exc:
        load_map(doc)
    paths = [p for p, _ in exc.value.errors]
    assert "colour" in paths and "goal_spawn" in paths


def test_sealed_map_rejected():
    doc = _doc()
    doc["walls"].append([-0.75, 0.0, 0.75, 0.0])  # close the doorway
    with pytest.raises(MapValidationError) as exc:
        load_map(doc)
    assert any("connect" in msg for _, msg in exc.value.errors)


def test_map_document_round_trip():
    m = get_map("e")
    again = load_map(m.to_document())
    assert np.array_equal(again.walls, m.walls)
    assert again.challenging_poses == m.challenging_poses


def test_map_accepts_yaml_text():
    import yaml

    m = load_map(yaml.safe_dump(_doc("a")))
    assert m.id == "a"


def test_lambda_zero_gives_no_boxes():
    layout = get_map("c")
    rng = scene_rng(0)
    for _ in range(300):
        s = generate_scene(layout, SpawnConfig(0.0), rng)
        assert not s.box_present.any()
        assert (s.slot_modes == ABSENT).all()


def test_slot_mode_frequencies_lambda_one():
    cfg = SpawnConfig(1.0)
    rng = np.random.default_rng(1)
    modes = np.array([draw_slot_modes(cfg, rng) for _ in range(20000)])
    assert np.all(modes != ABSENT)
    for i, p in enumerate(cfg.p):
        assert np.mean(modes[:, i] == CHALLENGING) == pytest.approx(1 - p, abs=0.02)
        assert np.mean(modes[:, i] == RANDOM) == pytest.approx(p, abs=0.02)


def test_generation_deterministic():
    layout = get_map("d")
    a = generate_scene(layout, SpawnConfig(0.6), scene_rng(42))
    b = generate_scene(layout, SpawnConfig(0.6), scene_rng(42))
    assert np.array_equal(a.world.bodies, b.world.bodies)
    assert np.array_equal(a.goal, b.goal)
    assert np.array_equal(a.slot_modes, b.slot_modes)


@pytest.mark.parametrize("map_id", MAP_IDS)
def test_scenes_start_without_penetration(map_id):
    layout = get_map(map_id)
    rng = scene_rng(7)
    cont = np.empty((K.MAX_CONTACTS, K.NCF))
    for _ in range(150):
        s = generate_scene(layout, SpawnConfig(1.0), rng)
        sep = K.min_separation(s.world.bodies, s.world.walls, cont)
        assert sep >= -1e-3
        x0, y0, x1, y1 = layout.room_bounds
        assert x0 < s.goal[0] < x1 and y0 < s.goal[1] < y1


def test_cluttered_box_count_sub_proportional():
    layout = get_map("c")
    rng = scene_rng(3)
    counts = [generate_scene(layout, SpawnConfig(0.4), rng).n_boxes for _ in range(1500)]
    assert np.mean(counts) < 0.4 * 5


def test_spawn_config_validation():
    with pytest.raises(ValueError):
        SpawnConfig(1.5)
    with pytest.raises(ValueError):
        SpawnConfig(0.2, p=(0.1, 0.3, 0.4, 0.5, 0.6))
    with pytest.raises(ValueError):
        SpawnConfig(0.2, p=(0.2, 0.3))


def test_curriculum_promotes_at_threshold():
    st = CurriculumState.start(["c"], 0.2, window=50)
    for i in range(50):
        curriculum_update(st, "c", i % 25 != 0)  # 48/50 = 96%
    assert st.lam("c") == pytest.approx(0.4)
    assert len(st.windows["c"]) == 0


def test_curriculum_holds_below_threshold():
    st = CurriculumState.start(["c"], 0.2, window=20)
    for i in range(200):
        curriculum_update(st, "c", i % 2 == 0)
    assert st.lam("c") == pytest.approx(0.2)


def test_curriculum_caps_at_one_and_maps_independent():
    st = CurriculumState.start(["a", "b"], 1.0, window=10)
    for _ in range(30):
        curriculum_update(st, "a", True)
    assert st.lam("a") == 1.0 and st.lam("b") == 1.0
    st = CurriculumState.start(["a", "b"], 0.2, window=10)
    for _ in range(10):
        curriculum_update(st, "a", True)
    assert st.lambda_per_map == {"a": pytest.approx(0.4), "b": pytest.approx(0.2)}
    with pytest.raises(KeyError):
        curriculum_update(st, "z", True)


def test_curriculum_frozen_and_round_trip():
    st = CurriculumState.start(["c"], 0.2, window=10, frozen=True)
    for _ in range(100):
        curriculum_update(st, "c", True)
    assert st.lam("c") == pytest.approx(0.2)
    again = CurriculumState.from_dict(json.loads(json.dumps(st.to_dict())))
    assert again.to_dict() == st.to_dict()


def test_curriculum_lambda_non_decreasing():
    st = CurriculumState.start(["c"], 0.2, window=30)
    rng = np.random.default_rng(0)
    last = st.lam("c")
    for _ in range(3000):
        curriculum_update(st, "c", bool(rng.random() < 0.93))
        lam = st.lam("c")
        assert lam >= last and lam in (0.2, 0.4, 0.6, 0.8, 1.0)
        last = lam
