import json
import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from namo_rl.agent import (
    ACTION_HIGH, ACTION_LOW, ActorCriticAgent, RunningMeanStd, TrainConfig, Trainer, adaptive_lr,
    check_observation_batch, compute_advantages, sample_action, surrogate, to_physical,
)
from namo_rl.agent.algo import LR_MAX, LR_MIN, gaussian_log_prob_np
from namo_rl.env import NoiseConfig, Observation
from namo_rl.io import load_checkpoint, save_checkpoint
from namo_rl.scenegen import CurriculumState, SpawnConfig, get_map
from namo_rl.selftest import brute_force_advantages, check_advantages, check_clip_at_identity

SMALL = TrainConfig(n_envs=4, horizon=8, minibatch=16, epochs=2, lr=1e-3)


def small_trainer(seed=0, lam=0.2):
    layout = get_map("c")
    return Trainer([layout], SMALL, SpawnConfig(lam), NoiseConfig(), seed,
                   CurriculumState.start([layout.id], lam, frozen=True))


def strip(m):
    return json.loads(json.dumps(m))


def test_advantage_single_step_examples():
    adv, ret = compute_advantages(np.array([[1.0]]), np.array([[0.5]]), np.array([[0.0]]), np.array([2.0]), 0.9)
    assert ret[0, 0] == pytest.approx(1.0 + 0.9 * 2.0)
    assert adv[0, 0] == pytest.approx(1.0 + 1.8 - 0.5)
    adv, _ = compute_advantages(np.array([[1.0]]), np.array([[0.5]]), np.array([[1.0]]), np.array([2.0]), 0.9)
    assert adv[0, 0] == pytest.approx(0.5)  # terminal: no bootstrap


def test_advantage_done_cuts_return():
    r = np.array([[1.0], [1.0], [1.0]])
    d = np.array([[0.0], [1.0], [0.0]])
    _, ret = compute_advantages(r, np.zeros((3, 1)), d, np.array([10.0]), 0.5)
    np.testing.assert_allclose(ret[:, 0], [1.5, 1.0, 1.0 + 5.0])


def test_advantage_oracle_random():
    assert check_advantages(200, seed=2) <= 1e-6


def test_brute_force_matches_on_handmade():
    r = np.array([[1.0, 0.0], [2.0, 1.0]])
    v = np.zeros((2, 2))
    d = np.zeros((2, 2))
    out = brute_force_advantages(r, v, d, np.array([3.0, 4.0]), 1.0)
    np.testing.assert_allclose(out, [[6.0, 5.0], [5.0, 5.0]])


def test_surrogate_clip_cases():
    assert surrogate(np.array([1.5]), np.array([1.0]), 0.2)[0] == pytest.approx(1.2)
    assert surrogate(np.array([0.5]), np.array([-1.0]), 0.2)[0] == pytest.approx(-0.8)
    # inside the band the surrogate is the plain product
    assert surrogate(np.array([1.1]), np.array([2.0]), 0.2)[0] == pytest.approx(2.2)
    # pessimistic side is never clipped
    assert surrogate(np.array([0.5]), np.array([1.0]), 0.2)[0] == pytest.approx(0.5)


def test_clip_gradient_equals_policy_gradient_at_old_params():
    assert check_clip_at_identity(seed=1) < 1e-5


@pytest.mark.parametrize("kl,expect", [(0.1, 1e-3 / 1.5), (0.001, 1.5e-3), (0.008, 1e-3)])
def test_adaptive_lr_band(kl, expect):
    assert adaptive_lr(1e-3, kl, 0.008) == pytest.approx(expect)


def test_adaptive_lr_clamps_and_rejects():
    assert adaptive_lr(LR_MAX, 0.0, 0.008) == LR_MAX
    assert adaptive_lr(LR_MIN, 1.0, 0.008) == LR_MIN
    with pytest.raises(ValueError):
        adaptive_lr(0.0, 0.0, 0.008)


def test_sample_action_clamp_and_logprob():
    rng = np.random.default_rng(0)
    mean = np.array([[0.0, 0.0]] * 5000)
    raw, act, logp = sample_action(mean, np.array([0.5, 0.5]), rng)
    assert np.all(act >= ACTION_LOW) and np.all(act <= ACTION_HIGH)
    assert np.any(raw != act)  # clamping happens after sampling
    np.testing.assert_allclose(logp, gaussian_log_prob_np(raw, mean, np.array([0.5, 0.5])))
    raw, act, _ = sample_action(np.array([[0.3, -0.2]]), np.zeros(2), rng, deterministic=True)
    np.testing.assert_allclose(act, [[0.3, -0.2]])
    np.testing.assert_allclose(to_physical(np.array([1.0, -1.0])), [1.0, -1.5])


def test_gaussian_log_prob_against_scipy():
    from scipy.stats import norm

    x = np.array([[0.3, -1.2]])
    m = np.array([[0.1, 0.4]])
    ls = np.array([-0.7, 0.2])
    expect = norm.logpdf(x, m, np.exp(ls)).sum()
    assert gaussian_log_prob_np(x, m, ls)[0] == pytest.approx(expect)


def test_running_mean_std_matches_numpy():
    rng = np.random.default_rng(0)
    data = [rng.normal(3, 2, rng.integers(5, 200)) for _ in range(20)]
    rms = RunningMeanStd(eps=1e-12)
    for d in data:
        rms.update(d)
    allx = np.concatenate(data)
    assert rms.mean == pytest.approx(allx.mean(), rel=1e-9)
    assert rms.var == pytest.approx(allx.var(), rel=1e-6)
    x = np.array([1.0, 5.0])
    np.testing.assert_allclose(rms.denormalize(rms.normalize(x)), x)
    again = RunningMeanStd.from_dict(json.loads(json.dumps(rms.to_dict())))
    assert again.to_dict() == rms.to_dict()


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(gamma=0.0)
    with pytest.raises(ValueError):
        TrainConfig(n_envs=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)


def test_trainer_metrics_fields_and_determinism():
    a = [strip(m) for m in small_trainer().run(3)]
    b = [strip(m) for m in small_trainer().run(3)]
    assert a == b
    for k in ("update", "completion_rate", "mean_reward", "approx_kl", "lr", "value_loss", "lambda"):
        assert k in a[0]
    assert [m["update"] for m in a] == [1, 2, 3]
    assert all(math.isfinite(m["value_loss"]) for m in a)


def test_trainer_resume_bit_identical(tmp_path):
    straight = [strip(m) for m in small_trainer().run(4)]
    first = small_trainer()
    head = [strip(m) for m in first.run(2)]
    arrays, meta = first.get_state()
    path = save_checkpoint(tmp_path / "t.ckpt", arrays, meta, first.config_hash())
    arrays2, meta2, h = load_checkpoint(path)
    second = small_trainer()
    assert h == second.config_hash()
    second.set_state(arrays2, meta2)
    tail = [strip(m) for m in second.run(2)]
    assert head + tail == straight


def test_config_hash_changes_with_config():
    a = small_trainer()
    layout = get_map("c")
    b = Trainer([layout], TrainConfig(n_envs=4, horizon=8, minibatch=16, lr=2e-3), SpawnConfig(0.2))
    assert a.config_hash() != b.config_hash()


def test_ratio_is_one_at_collection_parameters():
    # the first minibatch of an update sees the same network that collected the data
    tr = small_trainer()
    m = next(tr.run(1))
    assert m["approx_kl"] >= 0.0
    batch, _ = tr.collect()
    tr.net.set_norm_mode("running", track=False)
    mean, log_std, _ = tr.net(batch["vec"].reshape(-1, 242), batch["grid"].reshape(-1, 48, 48))
    logp = gaussian_log_prob_np(batch["raw"].reshape(-1, 2), mean.data.astype(np.float64),
                                log_std.data.astype(np.float64))
    np.testing.assert_allclose(logp, batch["logp"].reshape(-1), atol=1e-4)


def test_check_observation_batch():
    v, g = np.zeros(242), np.zeros((48, 48))
    obs = check_observation_batch((v, g))
    assert obs.vector.shape == (1, 242) and obs.grid.shape == (1, 48, 48)
    assert check_observation_batch(Observation(np.zeros((3, 242)), np.zeros((3, 48, 48)))).vector.shape == (3, 242)
    with pytest.raises(ValueError):
        check_observation_batch((np.zeros(241), g))
    with pytest.raises(ValueError):
        check_observation_batch((np.zeros((2, 242)), np.zeros((3, 48, 48))))
    bad = v.copy()
    bad[0] = np.nan
    with pytest.raises(ValueError):
        check_observation_batch((bad, g))


def test_estimator_api():
    agent = ActorCriticAgent(n_envs=4, n_updates=2, horizon=8, minibatch=16)
    params = agent.get_params()
    assert params["n_envs"] == 4 and params["lam"] == 0.2
    assert clone(agent).get_params() == params
    with pytest.raises(NotFittedError):
        agent.predict((np.zeros(242), np.zeros((48, 48))))
    agent.fit()
    assert len(agent.history_) == 2
    act = agent.predict((np.zeros((5, 242)), np.zeros((5, 48, 48))))
    assert act.shape == (5, 2)
    assert np.all(act[:, 0] <= 1.0) and np.all(np.abs(act[:, 1]) <= 1.5)
    s = agent.score(scenes=4)
    assert 0.0 <= s <= 1.0
