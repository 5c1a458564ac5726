import json

import numpy as np
import pytest
from PIL import Image

from namo_rl import cli
from namo_rl.config import ConfigError, RunConfig, load_config, parse_config
from namo_rl.evalbench import EvalConfig, GoToGoal, record_episode
from namo_rl.io import (
    CheckpointError, TrajectoryError, box_pixel_centroid, draw_scene, load_checkpoint, read_trajectory,
    render_trajectory, save_checkpoint, write_trajectory,
)
from namo_rl.io.render import View
from namo_rl.scenegen import get_map


# -- checkpoints ---------------------------------------------------------------------------------

def test_checkpoint_round_trip_and_bytes(tmp_path):
    arrays = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.array([1, 2], dtype=np.int64),
              "c": np.array([1.5], dtype=">f8")}
    meta = {"update": 3, "nested": {"x": [1, 2]}}
    p1 = save_checkpoint(tmp_path / "x.ckpt", arrays, meta, "abc")
    p2 = save_checkpoint(tmp_path / "y.ckpt", dict(reversed(list(arrays.items()))), meta, "abc")
    assert p1.read_bytes() == p2.read_bytes()
    out, m, h = load_checkpoint(p1)
    assert h == "abc" and m == meta
    for k, v in arrays.items():
        assert np.array_equal(out[k], v) and out[k].shape == v.shape
    assert not (tmp_path / "x.ckpt.tmp").exists()


def test_checkpoint_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + bytes(20))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(bad)
    bad.write_bytes(b"NAMO")
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(bad)
    good = save_checkpoint(tmp_path / "g.ckpt", {"a": np.zeros(100)}, {})
    cut = tmp_path / "cut.ckpt"
    cut.write_bytes(good.read_bytes()[:-10])
    with pytest.raises(CheckpointError, match="past end"):
        load_checkpoint(cut)


# -- trajectories and rendering ------------------------------------------------------------------

@pytest.fixture(scope="module")
def episode():
    layout = get_map("c")
    return record_episode(GoToGoal(layout), layout, 0.4, EvalConfig(scenes=1), scene=1)


def test_trajectory_round_trip(tmp_path, episode):
    header, records = episode
    p = write_trajectory(tmp_path / "t.jsonl", header, records)
    h2, r2 = read_trajectory(p)
    assert h2["map"] == "c" and len(r2) == len(records)
    assert r2[0]["robot"] == pytest.approx(records[0]["robot"])


def test_trajectory_errors_name_line(tmp_path, episode):
    header, records = episode
    p = write_trajectory(tmp_path / "t.jsonl", header, records[:3])
    lines = p.read_text().splitlines()
    swapped = lines[:2] + [lines[3], lines[2]]
    p.write_text("\n".join(swapped) + "\n")
    with pytest.raises(TrajectoryError, match=r":4:"):
        read_trajectory(p)
    p.write_text(lines[1] + "\n")
    with pytest.raises(TrajectoryError, match="header"):
        read_trajectory(p)
    rec = json.loads(lines[1])
    del rec["action_actual"]
    p.write_text(lines[0] + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(TrajectoryError, match=r":2: step record missing"):
        read_trajectory(p)


def test_render_deterministic_and_box_positions(tmp_path, episode):
    header, records = episode
    recs = records[:4]
    a = render_trajectory(header, recs, tmp_path / "a")
    b = render_trajectory(header, recs, tmp_path / "b")
    assert [p.name for p in a][-1] == "summary.png" and len(a) == len(recs) + 2
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    # a lone box drawn at a logged pose has its fill centroid at that pose's pixel position
    view = View(header["bounds"])
    box = (0.7, -1.3, 0.4)
    img = draw_scene({**header, "walls": []}, (-2.5, 2.5, 0.0), [box])
    cx, cy = box_pixel_centroid(img)
    ex, ey = view.px(box[0], box[1])
    assert abs(cx - ex) <= 1.5 and abs(cy - ey) <= 1.5
    assert Image.open(a[0]).size == (512, 512)


# -- configuration -------------------------------------------------------------------------------

def test_config_defaults_and_yaml(tmp_path):
    assert parse_config({}) == RunConfig()
    p = tmp_path / "c.yaml"
    p.write_text("maps: [c, e]\nspawn:\n  lam: 0.4\ntrain:\n  n_envs: 8\n")
    cfg = load_config(p)
    assert cfg.maps == ("c", "e") and cfg.spawn.lam == 0.4 and cfg.train.n_envs == 8


def test_config_field_level_errors():
    with pytest.raises(ConfigError) as exc:
        parse_config({"mode": "fly", "maps": ["z"], "train": {"gamma": 2.0, "bogus": 1},
                      "eval": {"lambdas": [0.0, 1.5]}, "spawn": {"p": [0.1, 0.3, 0.4, 0.5, 0.6]}})
    paths = dict(exc.value.errors)
    for key in ("mode", "train.gamma", "train.bogus", "eval.lambdas[1]", "spawn.p[0]"):
        assert key in paths, key
    assert any(k.startswith("maps") for k in paths)


def test_config_type_errors():
    with pytest.raises(ConfigError) as exc:
        parse_config({"train": {"n_envs": "many", "normalize_values": 3}})
    paths = dict(exc.value.errors)
    assert "train.n_envs" in paths and "train.normalize_values" in paths


def test_config_yaml_syntax_error_reports_line(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("maps: [c\ntrain: {n_envs: 4}\n")
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert "line" in str(exc.value)


def test_eval_config_needs_existing_checkpoint(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config({"mode": "eval", "checkpoint": str(tmp_path / "none.ckpt")})
    assert "checkpoint" in dict(exc.value.errors)


# -- command line --------------------------------------------------------------------------------

def test_cli_usage_errors(capsys, tmp_path):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["fly"]) == cli.EXIT_USAGE
    assert cli.main(["eval"]) == cli.EXIT_USAGE  # no checkpoint
    assert cli.main(["train", "--lambda", "0.3", "--out", str(tmp_path)]) == cli.EXIT_USAGE
    ck = tmp_path / "x.ckpt"
    ck.write_bytes(b"")
    assert cli.main(["eval", "--checkpoint", str(ck), "--deterministic", "--stochastic"]) == cli.EXIT_USAGE
    bad = tmp_path / "bad.yaml"
    bad.write_text("train:\n  gamma: 5\n")
    assert cli.main(["train", "--config", str(bad)]) == cli.EXIT_USAGE
    err = capsys.readouterr().err
    assert "train.gamma" in err
    assert cli.main(["render", "--log", str(tmp_path / "missing.jsonl")]) == cli.EXIT_ERROR


def test_cli_inspect_map(capsys, tmp_path):
    assert cli.main(["inspect-map", "--map", "c", "--out", str(tmp_path)]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "map c" in out and "width 1.4" in out
    assert (tmp_path / "map_c.png").exists() and json.loads((tmp_path / "map_c.json").read_text())["id"] == "c"


def test_cli_train_resume_eval_render(tmp_path, capsys):
    cfg = tmp_path / "small.yaml"
    cfg.write_text("maps: [c]\ncheckpoint_every: 2\ntrain:\n  n_envs: 4\n  horizon: 8\n  minibatch: 16\n")
    full, part = tmp_path / "full", tmp_path / "part"
    assert cli.main(["train", "--config", str(cfg), "--updates", "4", "--out", str(full)]) == 0
    assert cli.main(["train", "--config", str(cfg), "--updates", "2", "--out", str(part)]) == 0
    assert cli.main(["train", "--config", str(cfg), "--updates", "4", "--out", str(part),
                     "--checkpoint", str(part / "latest.ckpt")]) == 0
    a = (full / "metrics.jsonl").read_text().splitlines()
    b = (part / "metrics.jsonl").read_text().splitlines()
    assert len(a) == 4 and a == b
    # a checkpoint from a different configuration is refused
    other = tmp_path / "other.yaml"
    other.write_text(cfg.read_text().replace("horizon: 8", "horizon: 9"))
    assert cli.main(["train", "--config", str(other), "--updates", "5", "--out", str(tmp_path / "o"),
                     "--checkpoint", str(full / "latest.ckpt")]) == cli.EXIT_USAGE
    ev = tmp_path / "ev"
    assert cli.main(["eval", "--checkpoint", str(full / "latest.ckpt"), "--map", "c", "--lambda", "0,0.2",
                     "--scenes", "3", "--envs", "3", "--out", str(ev)]) == 0
    summary = json.loads((ev / "eval_summary.json").read_text())
    assert [c["lam"] for c in summary["cells"]] == [0.0, 0.2]
    assert all(c["successes"] + c["timeouts"] == 3 for c in summary["cells"])
    log = ev / "trajectories" / "c_lam0.20_scene0000.jsonl"
    assert log.exists()
    frames = tmp_path / "frames"
    assert cli.main(["render", "--log", str(log), "--out", str(frames)]) == 0
    assert (frames / "frame_0000.png").exists() and (frames / "summary.png").exists()
