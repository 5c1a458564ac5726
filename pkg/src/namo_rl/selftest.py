"""Built-in correctness checks behind ``namo selftest``."""
from __future__ import annotations

import time
from typing import Callable, Dict, List, Tuple

import numpy as np

from .agent.algo import clipped_loss, compute_advantages, gaussian_log_prob_np, surrogate
from .agent.network import PolicyNetwork
from .env.observation import GRID_SIZE, VECTOR_SIZE
from .nn import grad_check
from .physics import DEFAULT_PARAMS, SUBSTEPS_PER_ACTION, make_box, make_robot, walls_array
from .physics import kernels as K


def random_batch(rng: np.random.Generator, batch: int = 8, dtype=np.float64):
    """Observation-like inputs plus loss targets for a small batch."""
    vec = rng.uniform(-1, 1, (batch, VECTOR_SIZE)).astype(dtype)
    grid = rng.choice(np.array([0.0, -1.0, 0.5, -0.5, 1.0]), size=(batch, GRID_SIZE, GRID_SIZE)).astype(dtype)
    actions = rng.normal(0, 1, (batch, 2))
    adv = rng.normal(0, 1, batch)
    ret = rng.normal(0, 1, batch)
    return vec, grid, actions, adv, ret


def network_loss_fn(net: PolicyNetwork, rng: np.random.Generator, batch: int = 8) -> Callable:
    vec, grid, actions, adv, ret = random_batch(rng, batch)
    mean, log_std, _ = net(vec, grid)
    # old log-probs near the current ones so some ratios sit inside and some outside the clip range
    old = gaussian_log_prob_np(actions, mean.data, log_std.data) + rng.normal(0, 0.15, batch)

    def fn():
        m, ls, v = net(vec, grid)
        return clipped_loss(m, ls, v, actions, old, adv, ret, 0.2, 0.01, 0.5).loss

    return fn


def check_gradients(n_probes: int = 200, seed: int = 0, mode: str = "batch") -> Tuple[float, int, float]:
    """Full network in float64; returns (max relative error, kink redraws, seconds)."""
    t0 = time.time()
    rng = np.random.default_rng(seed)
    net = PolicyNetwork(seed=seed, dtype=np.float64)
    if mode == "running":
        # give the running statistics non-trivial values first
        net.set_norm_mode("batch", track=True)
        net(*random_batch(rng, 16)[:2])
    net.set_norm_mode(mode, track=False)
    fn = network_loss_fn(net, rng)
    params = net.parameters()
    names = [n for n, _ in net.named_parameters()]
    rep = grad_check(fn, params, n_probes=n_probes, rng=rng, names=names)
    return rep.max_rel_error, rep.skipped_kinks, time.time() - t0


def brute_force_advantages(rewards, values, dones, bootstrap, gamma):
    """Direct double-loop n-step return: sum until the episode ends or the horizon runs out."""
    T, E = rewards.shape
    adv = np.zeros((T, E))
    for e in range(E):
        for t in range(T):
            g, disc, k = 0.0, 1.0, t
            while True:
                g += disc * rewards[k, e]
                if dones[k, e]:
                    break
                disc *= gamma
                k += 1
                if k == T:
                    g += disc * bootstrap[e]
                    break
            adv[t, e] = g - values[t, e]
    return adv


def check_advantages(n_rollouts: int = 1000, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_rollouts):
        T, E = int(rng.integers(1, 30)), int(rng.integers(1, 5))
        r = rng.normal(0, 1, (T, E))
        v = rng.normal(0, 1, (T, E))
        d = (rng.random((T, E)) < 0.15).astype(float)
        b = rng.normal(0, 1, E)
        gamma = float(rng.uniform(0.9, 1.0))
        adv, _ = compute_advantages(r, v, d, b, gamma)
        worst = max(worst, float(np.max(np.abs(adv - brute_force_advantages(r, v, d, b, gamma)))))
    return worst


def check_clip_at_identity(seed: int = 0, batch: int = 6) -> float:
    """Max |grad(-L_clip) - grad(-mean(logpi * A))| over all parameters at theta = theta_old."""
    from .nn import tensor as F
    from .agent.algo import gaussian_log_prob

    rng = np.random.default_rng(seed)
    net = PolicyNetwork(seed=seed, dtype=np.float64)
    net.set_norm_mode("batch", track=False)
    vec, grid, actions, adv, ret = random_batch(rng, batch)
    m, ls, v = net(vec, grid)
    old = gaussian_log_prob_np(actions, m.data, ls.data)
    params = net.parameters()

    def grads(loss):
        net.zero_grad()
        loss.backward()
        return [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    m, ls, v = net(vec, grid)
    g_clip = grads(clipped_loss(m, ls, v, actions, old, adv, ret, 0.2, 0.0, 0.0).loss)
    m, ls, v = net(vec, grid)
    g_pg = grads(-F.mean(gaussian_log_prob(actions, m, ls) * F.as_tensor(adv)))
    return max(float(np.max(np.abs(a - b))) for a, b in zip(g_clip, g_pg))


def push_scenarios(n: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Robot behind a box, often near a wall, driving into it with random turn rates.

    Returns (bodies (n, 6, NBF), walls (n, 4, NWF), actions (n, 2)).
    """
    rng = np.random.default_rng(seed)
    bodies = np.zeros((n, K.N_BODIES, K.NBF))
    walls = np.zeros((n, 4, K.NWF))
    actions = np.zeros((n, 2))
    for i in range(n):
        th = rng.uniform(-np.pi, np.pi)
        c, s = np.cos(th), np.sin(th)
        gap = rng.uniform(0.0, 0.15)
        lateral = rng.uniform(-0.3, 0.3)
        bx, by = 0.35 + 0.3 + gap, lateral
        robot = make_robot(0.0, 0.0, th, speed=rng.uniform(0, 1.0))
        bodies[i, 0] = robot.to_row()
        bodies[i, 1] = make_box(c * bx - s * by, s * bx + c * by, th + rng.uniform(-0.5, 0.5)).to_row()
        if rng.random() < 0.5:  # a second box behind the first
            d = 0.6 + rng.uniform(0.01, 0.3)
            bodies[i, 2] = make_box(c * (bx + d) - s * by, s * (bx + d) + c * by, rng.uniform(-np.pi, np.pi)).to_row()
        # a wall across the pushing direction, 1.2 - 2.5 m ahead
        wd = rng.uniform(1.2, 2.5)
        wx, wy = c * wd, s * wd
        segs = [[wx - s * 3, wy + c * 3, wx + s * 3, wy - c * 3]]
        walls[i, :1] = walls_array(segs, capacity=1)
        actions[i] = [rng.uniform(0.3, 1.0), rng.uniform(-1.5, 1.5)]
    return bodies, walls, actions


def run_pushes(bodies, walls, actions, policy_steps: int = 6) -> Tuple[np.ndarray, float]:
    """Step every scenario; returns (final bodies, worst post-step penetration in meters)."""
    b = bodies.copy()
    prm = DEFAULT_PARAMS.as_array()
    goals = np.full((len(b), 2), 1e6)
    reports = np.zeros((len(b), K.NREPORT))
    cont = np.empty((K.MAX_CONTACTS, K.NCF))
    worst = 0.0
    for _ in range(policy_steps):
        K.step_batch_kernel(b, walls, actions, SUBSTEPS_PER_ACTION, prm, goals, reports)
        for e in range(len(b)):
            worst = max(worst, -min(0.0, K.min_separation(b[e], walls[e], cont)))
    return b, worst


def check_physics(n: int = 1000, seed: int = 0) -> Dict[str, float]:
    t0 = time.time()
    bodies, walls, actions = push_scenarios(n, seed)
    final, pen = run_pushes(bodies, walls, actions)
    again, _ = run_pushes(bodies, walls, actions)
    deterministic = bool(np.array_equal(final.view(np.uint8), again.view(np.uint8)))
    # statics: a lone box at rest and an idle robot stay put
    st = np.zeros((1, K.N_BODIES, K.NBF))
    st[0, 0] = make_robot(-2.0, 0.0, 0.3).to_row()
    st[0, 1] = make_box(1.0, 1.0, 0.4).to_row()
    still, _ = run_pushes(st, np.zeros((1, 4, K.NWF)), np.zeros((1, 2)), policy_steps=30)
    drift = float(np.max(np.abs(still[0, :2, :3] - st[0, :2, :3])))
    return {"max_penetration": pen, "deterministic": float(deterministic), "static_drift": drift,
            "seconds": time.time() - t0}


def run_selftest(quick: bool = True, out=print) -> bool:
    n_phys = 200 if quick else 1000
    n_adv = 200 if quick else 1000
    results: List[Tuple[str, bool, str]] = []
    err, kinks, secs = check_gradients(200)
    results.append(("gradient check (200 probes, float64)", err < 1e-4, f"max rel err {err:.2e}, {secs:.1f}s"))
    adv = check_advantages(n_adv)
    results.append((f"advantage oracle ({n_adv} rollouts)", adv <= 1e-6, f"max abs diff {adv:.1e}"))
    s1 = float(surrogate(np.array([1.5]), np.array([1.0]), 0.2)[0])
    s2 = float(surrogate(np.array([0.5]), np.array([-1.0]), 0.2)[0])
    results.append(("clip point cases", s1 == 1.2 and s2 == -0.8, f"{s1:g}, {s2:g}"))
    g = check_clip_at_identity()
    results.append(("clipped grad = policy grad at theta_old", g < 1e-5, f"max diff {g:.1e}"))
    ph = check_physics(n_phys)
    ok = ph["max_penetration"] <= 0.01 and ph["deterministic"] == 1.0 and ph["static_drift"] < 1e-9
    results.append((f"physics ({n_phys} push scenarios)", ok,
                    f"penetration {100 * ph['max_penetration']:.2f} cm, drift {ph['static_drift']:.1e}, "
                    f"deterministic {bool(ph['deterministic'])}"))
    for name, passed, detail in results:
        out(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return all(p for _, p, _ in results)
