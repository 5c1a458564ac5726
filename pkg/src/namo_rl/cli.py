"""Command-line entry point: train, eval, render, inspect-map, selftest.

NAMO_THREADS caps the BLAS / OpenMP / numba thread pools and must be read
before numpy is first imported, so this module sets it up at import time.
"""
from __future__ import annotations

import os

_THREADS = os.environ.get("NAMO_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ[_var] = _THREADS

import argparse  # noqa: E402
import dataclasses  # noqa: E402
import json  # noqa: E402
import signal  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402
from typing import List, Optional, Sequence  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .config import ConfigError, RunConfig, load_config  # noqa: E402

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_INTERRUPTED = 0, 1, 2, 130


class CliError(Exception):
    pass


# ----------------------------------------------------------------------------------------------
# helpers

def _csv(text: str, cast=str) -> tuple:
    try:
        return tuple(cast(v.strip()) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r} as a comma-separated list") from None


def _layouts(ids: Sequence[str]):
    from .scenegen import MAP_IDS, get_map, load_map

    out = []
    for m in ids:
        out.append(get_map(m) if m in MAP_IDS else load_map(Path(m)))
    return out


def _base_config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _apply_flags(cfg: RunConfig, args, mode: str) -> RunConfig:
    """Command-line flags override the config document."""
    ch = {"mode": mode}
    if args.seed is not None:
        ch["seed"] = args.seed
    if args.map is not None:
        ch["maps"] = args.map
    if args.out is not None:
        ch["out"] = str(args.out)
    if args.checkpoint is not None:
        ch["checkpoint"] = str(args.checkpoint)
    train, ev, spawn = cfg.train, cfg.eval, cfg.spawn
    if getattr(args, "envs", None) is not None:
        train = dataclasses.replace(train, n_envs=args.envs)
        ev = dataclasses.replace(ev, n_envs=args.envs)
    if getattr(args, "updates", None) is not None:
        train = dataclasses.replace(train, updates=args.updates)
    if getattr(args, "scenes", None) is not None:
        ev = dataclasses.replace(ev, scenes=args.scenes)
    if getattr(args, "lam", None) is not None:
        if mode == "train":
            if len(args.lam) != 1:
                raise CliError("train takes a single --lambda (the starting curriculum value)")
            spawn = spawn.with_lambda(args.lam[0])
        else:
            ev = dataclasses.replace(ev, lambdas=args.lam)
    if mode == "eval":
        if getattr(args, "deterministic", False) and getattr(args, "stochastic", False):
            raise CliError("--deterministic and --stochastic are mutually exclusive")
        if getattr(args, "deterministic", False):
            ev = dataclasses.replace(ev, deterministic=True)
        if getattr(args, "stochastic", False):
            ev = dataclasses.replace(ev, deterministic=False)
    if args.seed is not None:
        ev = dataclasses.replace(ev, seed=args.seed)
    if mode == "train" and abs(spawn.lam * 5 - round(spawn.lam * 5)) > 1e-9:
        raise CliError(f"training lambda {spawn.lam:g} is not on the curriculum grid (0, 0.2, ..., 1)")
    try:
        return dataclasses.replace(cfg, train=train, eval=ev, spawn=spawn, **ch)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from None


def _single_thread():
    """Pin BLAS pools to one thread for bit-reproducible runs."""
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=1)


def build_trainer(cfg: RunConfig):
    from .agent import Trainer
    from .scenegen import CurriculumState

    layouts = _layouts(cfg.maps)
    cur = CurriculumState.start([m.id for m in layouts], cfg.spawn.lam, window=cfg.curriculum.window,
                                threshold=cfg.curriculum.threshold, frozen=cfg.curriculum.fixed_lambda)
    return Trainer(layouts, cfg.train, cfg.spawn, cfg.noise, cfg.seed, cur)


def restore_trainer(trainer, path) -> None:
    from .io import load_checkpoint

    arrays, meta, digest = load_checkpoint(path)
    if digest != trainer.config_hash():
        raise CliError(f"checkpoint {path} was written with a different configuration "
                       f"(hash {digest}, current {trainer.config_hash()})")
    trainer.set_state(arrays, meta)


def save_trainer(trainer, path) -> Path:
    from .io import save_checkpoint

    arrays, meta = trainer.get_state()
    return save_checkpoint(path, arrays, meta, trainer.config_hash())


def load_policy_network(path):
    """PolicyNetwork from any training checkpoint (optimizer and env state are ignored)."""
    from .agent import PolicyNetwork
    from .io import load_checkpoint

    arrays, meta, digest = load_checkpoint(path)
    net = PolicyNetwork()
    net.load_state_dict({k[4:]: v for k, v in arrays.items() if k.startswith("net/")})
    return net, meta, digest


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# ----------------------------------------------------------------------------------------------
# modes

def cmd_train(args) -> int:
    cfg = _apply_flags(_base_config(args), args, "train")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    limiter = _single_thread() if args.deterministic else None
    trainer = build_trainer(cfg)
    metrics_path = out / "metrics.jsonl"
    timing_path = out / "timing.jsonl"  # wall clock kept apart so metrics stay reproducible
    offset = 0.0
    if cfg.checkpoint:
        restore_trainer(trainer, cfg.checkpoint)
        _progress(f"resumed from {cfg.checkpoint} at update {trainer.update}")
        # drop any records past the checkpoint so the stream stays a single consistent run
        for path in (metrics_path, timing_path):
            kept = []
            if path.exists():
                kept = [l for l in path.read_text().splitlines() if l and json.loads(l)["update"] <= trainer.update]
            path.write_text("".join(l + "\n" for l in kept))
            if path is timing_path and kept:
                offset = float(json.loads(kept[-1])["seconds"])
    else:
        metrics_path.write_text("")
        timing_path.write_text("")
    (out / "config.json").write_text(json.dumps({"config": cfg.to_document(), "config_hash": trainer.config_hash(),
                                                 "version": __version__}, indent=2, sort_keys=True))
    stop = {"signal": None}

    def on_signal(signum, _frame):
        stop["signal"] = signum

    old = {s: signal.signal(s, on_signal) for s in (signal.SIGINT, signal.SIGTERM)}
    best = -1.0
    best_path = out / "best.ckpt"
    if best_path.exists() and cfg.checkpoint:
        best = float(json.loads((out / "best.json").read_text())["completion_rate"]) if (out / "best.json").exists() else -1.0
    t0 = time.time()
    try:
        with open(metrics_path, "a") as mf, open(timing_path, "a") as tf:
            while trainer.update < cfg.train.updates:
                m = trainer.train_iteration()
                mf.write(json.dumps(m, sort_keys=True) + "\n")
                mf.flush()
                tf.write(json.dumps({"update": trainer.update, "seconds": round(offset + time.time() - t0, 3)}) + "\n")
                tf.flush()
                u = trainer.update
                if m["rolling_episodes"] >= 200 and m["completion_rate"] > best:
                    best = m["completion_rate"]
                    save_trainer(trainer, best_path)
                    (out / "best.json").write_text(json.dumps({"update": u, "completion_rate": best}))
                if u % cfg.checkpoint_every == 0 or u == cfg.train.updates:
                    save_trainer(trainer, out / "latest.ckpt")
                if u % 10 == 0 or u == cfg.train.updates:
                    lam = ",".join(f"{k}={v:.1f}" for k, v in m["lambda"].items())
                    _progress(f"update {u}/{cfg.train.updates}  completion {100 * m['completion_rate']:.1f}%  "
                              f"reward {m['mean_reward']:+.3f}  kl {m['approx_kl']:.4f}  lr {m['lr']:.2e}  "
                              f"lambda {lam}  {time.time() - t0:.0f}s")
                if stop["signal"] is not None:
                    save_trainer(trainer, out / "latest.ckpt")
                    _progress(f"signal {stop['signal']}: checkpointed update {u} to {out / 'latest.ckpt'}")
                    return EXIT_INTERRUPTED
    finally:
        for s, h in old.items():
            signal.signal(s, h)
        if limiter is not None:
            limiter.restore_original_limits()
    _progress(f"done: {trainer.update} updates, checkpoint {out / 'latest.ckpt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evalbench import NetworkPolicy, evaluate, format_table, record_episode, write_results
    from .io import write_trajectory

    cfg = _apply_flags(_base_config(args), args, "eval")
    if not cfg.checkpoint:
        raise CliError("eval needs --checkpoint")
    net, meta, digest = load_policy_network(cfg.checkpoint)
    layouts = _layouts(cfg.maps)
    ev = dataclasses.replace(cfg.eval, maps=tuple(m.id for m in layouts), noise=cfg.noise)

    def factory(layout, lam):
        return NetworkPolicy(net, ev.deterministic, np.random.default_rng(ev.seed))

    t0 = time.time()
    rows = evaluate(factory, layouts, ev, cfg.spawn)
    print(format_table(rows))
    out = Path(cfg.out)
    paths = write_results(rows, out, {"checkpoint": str(cfg.checkpoint), "checkpoint_update": meta.get("update"),
                                      "config_hash": digest, "seed": ev.seed, "scenes": ev.scenes,
                                      "deterministic": ev.deterministic})
    # one replayable trajectory per cell (scene 0)
    for mi, layout in enumerate(layouts):
        for lam in ev.lambdas:
            header, records = record_episode(factory(layout, lam), layout, lam, ev, 0, mi, cfg.spawn, digest)
            write_trajectory(out / "trajectories" / f"{layout.id}_lam{lam:.2f}_scene0000.jsonl", header, records)
    _progress(f"wrote {paths['csv']} and {paths['summary']} in {time.time() - t0:.0f}s")
    return EXIT_OK


def cmd_render(args) -> int:
    from .io import read_trajectory, render_trajectory

    if args.log is None:
        raise CliError("render needs --log")
    out = Path(args.out or "frames")
    header, records = read_trajectory(args.log)
    if "initial" not in header:
        raise CliError(f"{args.log}:1: header missing 'initial' poses needed for the first frame")
    paths = render_trajectory(header, records, out)
    _progress(f"wrote {len(paths)} images to {out}")
    return EXIT_OK


def cmd_inspect_map(args) -> int:
    from .io import draw_scene
    from .scenegen import regions_connected

    ids = args.map or ("c",)
    for layout in _layouts(ids):
        x0, y0, x1, y1 = layout.room_bounds
        print(f"map {layout.id} ({layout.family})")
        print(f"  bounds        [{x0:g}, {y0:g}, {x1:g}, {y1:g}]  ({x1 - x0:g} x {y1 - y0:g} m)")
        print(f"  walls         {len(layout.walls)} (thickness {layout.wall_thickness:g} m)")
        print(f"  passages      " + "; ".join(f"({p[0]:g}, {p[1]:g}) width {p[2]:g}"
                                             for p in layout.passage_descriptors))
        print(f"  challenging   {len(layout.challenging_poses)} poses")
        print(f"  robot spawn   {list(layout.robot_spawn_region)}")
        print(f"  goal spawn    {list(layout.goal_spawn_region)}")
        print(f"  connected     {regions_connected(layout)}; plugged: {regions_connected(layout, plug_passages=True)}")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            cx, cy = layout.center
            header = {"goal": [cx, cy], "bounds": list(layout.room_bounds),
                      "walls": [list(map(float, w)) for w in layout.walls], "wall_thickness": layout.wall_thickness}
            ghosts = [(p.x, p.y, p.theta) for p, _ in layout.challenging_poses]
            img = draw_scene(header, (layout.robot_spawn_region[0], layout.robot_spawn_region[1], 0.0), [], ghosts=ghosts)
            img.save(out / f"map_{layout.id}.png")
            (out / f"map_{layout.id}.json").write_text(json.dumps(layout.to_document(), indent=2))
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest(quick=not args.full) else EXIT_ERROR


# ----------------------------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="namo", description="Learned local navigation among movable obstacles.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{train,eval,render,inspect-map,selftest}")

    def common(sp, lam_help):
        sp.add_argument("--config", type=Path, help="YAML/JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--checkpoint", type=Path)
        sp.add_argument("--map", type=lambda s: _csv(s), help="map ids (a-i) or map files, comma separated")
        sp.add_argument("--lambda", dest="lam", type=lambda s: _csv(s, float), help=lam_help)
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--envs", type=int, help="parallel environments")
        sp.add_argument("--deterministic", action="store_true",
                        help="train: single-threaded bit-reproducible run; eval: mean action (the default)")

    t = sub.add_parser("train", help="train a policy (resume with --checkpoint)")
    common(t, "starting curriculum lambda")
    t.add_argument("--updates", type=int, help="total policy updates")
    e = sub.add_parser("eval", help="evaluate a checkpoint over (map, lambda) cells")
    common(e, "lambda values, comma separated")
    e.add_argument("--scenes", type=int, help="scenes per cell")
    e.add_argument("--stochastic", action="store_true", help="sample actions instead of using the mean")
    r = sub.add_parser("render", help="render a trajectory log to PNG frames")
    r.add_argument("--log", type=Path)
    r.add_argument("--out", type=Path)
    i = sub.add_parser("inspect-map", help="summarize (and optionally draw) map layouts")
    i.add_argument("--map", type=lambda s: _csv(s))
    i.add_argument("--out", type=Path)
    s = sub.add_parser("selftest", help="gradient check, advantage oracle and physics properties")
    s.add_argument("--full", action="store_true", help="acceptance-sized sample counts")
    return p


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "render": cmd_render, "inspect-map": cmd_inspect_map,
            "selftest": cmd_selftest}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
