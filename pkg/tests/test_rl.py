import numpy as np
import pytest

from warehouse_rl.demand import make_artificial_scenario
from warehouse_rl.encoding import Normalizer
from warehouse_rl.network import ActorCritic, load_checkpoint, log_softmax, save_checkpoint
from warehouse_rl.ppo import (Adam, NonFiniteGradient, PPOConfig, TrainingLog, canonical_products, compute_gae,
                              load_agent, policy_step, ppo_loss, ppo_update, save_agent, train)
from warehouse_rl.scenario import DemandSeries, ScenarioConfig
from warehouse_rl.simulator import default_maxorder, precompute_request_star, simulate_full


# ---- GAE

def test_gae_lambda_zero_is_td_error():
    r = np.array([1.0, -2.0, 0.5])
    v = np.array([0.3, 0.1, -0.4])
    adv, _ = compute_gae(r, v, gamma=0.9, lam=0.0)
    np.testing.assert_allclose(adv, r + 0.9 * np.array([0.1, -0.4, 0.0]) - v)


def test_gae_gamma_zero():
    r = np.array([1.0, 2.0])
    v = np.array([0.5, 3.0])
    adv, ret = compute_gae(r, v, gamma=0.0, lam=0.7)
    np.testing.assert_allclose(adv, r - v)
    np.testing.assert_allclose(ret, r)


def test_gae_hand_sum():
    adv, _ = compute_gae(np.ones(3), np.zeros(3), gamma=1.0, lam=1.0)
    np.testing.assert_allclose(adv, [3.0, 2.0, 1.0])


def test_gae_length_mismatch():
    with pytest.raises(ValueError):
        compute_gae(np.ones(3), np.ones(2), 0.9, 0.9)


# ---- sampling

class FixedLogits:
    def __init__(self, logits):
        self.logits = np.asarray(logits, dtype=float)

    def forward(self, x):
        n = np.atleast_2d(x).shape[0]
        return np.tile(self.logits, (n, 1)), np.zeros(n), None


def test_saturated_logits_pick_action_one():
    a, _, _ = policy_step(FixedLogits([0.0, 25.0]), np.zeros((10_000, 3)), np.random.default_rng(0))
    assert a.mean() >= 0.999


def test_equal_logits_are_fair():
    a, logp, _ = policy_step(FixedLogits([1.0, 1.0]), np.zeros((10_000, 3)), np.random.default_rng(1))
    assert abs(a.mean() - 0.5) < 3 * 0.5 / np.sqrt(10_000)
    np.testing.assert_allclose(logp, np.log(0.5))


def test_sampling_deterministic():
    net = ActorCritic(5, (8, 8), seed=3)
    obs = np.random.default_rng(0).normal(size=(50, 5))
    a1 = policy_step(net, obs, np.random.default_rng(7))[0]
    a2 = policy_step(net, obs, np.random.default_rng(7))[0]
    assert np.array_equal(a1, a2)


# ---- network and loss

def test_network_shapes_and_finite():
    net = ActorCritic(6, (100, 100), seed=0)
    logits, value, _ = net.forward(np.random.default_rng(0).normal(size=(4, 6)))
    assert logits.shape == (4, 2) and value.shape == (4,)
    assert np.all(np.isfinite(logits))
    with pytest.raises(ValueError):
        ActorCritic(6, (4,), params=[np.zeros((6, 4))])


def _batch(net, n, rng, adv=None):
    obs = rng.normal(size=(n, net.obs_dim))
    logits, _, _ = net.forward(obs)
    act = rng.integers(0, 2, size=n)
    old = log_softmax(logits)[np.arange(n), act] + rng.normal(scale=0.1, size=n)
    return {"obs": obs, "actions": act, "logp": old,
            "advantages": rng.normal(size=n) if adv is None else adv, "returns": rng.normal(size=n)}


def test_zero_advantage_zero_policy_gradient():
    net = ActorCritic(3, (4,), seed=0)
    b = _batch(net, 16, np.random.default_rng(0), adv=np.zeros(16))
    _, grads, _ = ppo_loss(net, b, clip=0.2, vf_coef=0.0, ent_coef=0.0)
    assert np.sqrt(sum((g ** 2).sum() for g in grads)) < 1e-8


def test_positive_advantage_raises_probability():
    net = ActorCritic(3, (4, 4), seed=2)
    obs = np.array([[0.3, -0.2, 0.5]])
    logits, _, _ = net.forward(obs)
    lp = log_softmax(logits)[0]
    batch = {"obs": obs, "actions": np.array([1]), "logp": lp[[1]], "advantages": np.array([1.0]),
             "returns": np.array([0.0])}
    cfg = PPOConfig(epochs=1, minibatch=1, ent_coef=0.0, vf_coef=0.0)
    ppo_update(net, Adam(net.params, 1e-2), batch, cfg, np.random.default_rng(0))
    after = log_softmax(net.forward(obs)[0])[0]
    assert after[1] > lp[1]


def _flat_grad_check(net, batch, clip, vf, ent, eps=1e-6):
    _, grads, _ = ppo_loss(net, batch, clip, vf, ent)
    worst = 0.0
    for p, g in zip(net.params, grads):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            keep = p[i]
            p[i] = keep + eps
            up = ppo_loss(net, batch, clip, vf, ent)[0]
            p[i] = keep - eps
            down = ppo_loss(net, batch, clip, vf, ent)[0]
            p[i] = keep
            num = (up - down) / (2 * eps)
            worst = max(worst, abs(num - g[i]) / max(1e-6, abs(num) + abs(g[i])))
    return worst


def test_gradient_check_small():
    rng = np.random.default_rng(5)
    net = ActorCritic(2, (4,), seed=1)
    assert _flat_grad_check(net, _batch(net, 8, rng), 0.2, 0.5, 0.01) < 1e-4


def test_update_stability_and_diagnostics():
    rng = np.random.default_rng(0)
    net = ActorCritic(5, (16, 16), seed=0)
    d = ppo_update(net, Adam(net.params, 1e-3), _batch(net, 128, rng), PPOConfig(epochs=3, minibatch=32), rng)
    assert all(np.all(np.isfinite(p)) for p in net.params)
    assert 0.0 <= d["clip_fraction"] <= 1.0
    assert {"mean_ratio", "value_loss", "policy_loss", "entropy"} <= set(d)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_aborts():
    rng = np.random.default_rng(0)
    net = ActorCritic(3, (4,), seed=0)
    b = _batch(net, 8, rng)
    b["returns"][0] = np.inf
    before = [p.copy() for p in net.params]
    with pytest.raises(NonFiniteGradient):
        ppo_update(net, Adam(net.params), b, PPOConfig(epochs=1, minibatch=8), rng)
    assert all(np.array_equal(a, p) for a, p in zip(before, net.params))


def test_config_validation():
    for bad in (dict(clip=0.0), dict(gamma=1.5), dict(epochs=0), dict(eval_interval=0)):
        with pytest.raises(ValueError):
            PPOConfig(**bad)


# ---- checkpoints

def test_checkpoint_roundtrip(tmp_path):
    net = ActorCritic(7, (5, 3), seed=4)
    save_checkpoint(tmp_path / "n.bin", net)
    back = load_checkpoint(tmp_path / "n.bin", obs_dim=7)
    assert back.hidden == (5, 3)
    assert all(np.array_equal(a, b) for a, b in zip(net.params, back.params))
    with pytest.raises(ValueError, match="observation"):
        load_checkpoint(tmp_path / "n.bin", obs_dim=8)
    (tmp_path / "bad.bin").write_bytes((tmp_path / "n.bin").read_bytes()[:-3])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.bin")
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "none.bin")


# ---- training log

def test_training_log():
    log = TrainingLog()
    for s, r in [(10, 1.0), (20, 3.0), (30, 5.0)]:
        log.append(s, r)
    np.testing.assert_allclose(log.smoothed(2), [1.0, 2.0, 4.0])
    with pytest.raises(ValueError):
        log.append(30, 0.0)


# ---- training

@pytest.fixture(scope="module")
def small():
    sc, d = make_artificial_scenario(4, 3, 30, predictdays=4, seed=3)
    rs, sched = precompute_request_star(sc, d)
    sc.maxorder = default_maxorder(rs)
    return sc, d, sched


def test_train_zero_episodes_returns_init(small):
    sc, d, sched = small
    net, log, _ = train(sc, d, sched, PPOConfig(total_episodes=0, hidden=(8, 8), seed=1))
    fresh = ActorCritic(net.obs_dim, (8, 8), seed=0)
    assert len(log) == 0 and net.obs_dim == 4 + 4
    net2, _, _ = train(sc, d, sched, PPOConfig(total_episodes=0, hidden=(8, 8), seed=1))
    assert all(np.array_equal(a, b) for a, b in zip(net.params, net2.params))
    assert fresh.shapes() == net.shapes()


def test_train_log_length_and_determinism(small):
    sc, d, sched = small
    cfg = PPOConfig(total_episodes=7, episodes_per_batch=2, eval_interval=40, eval_products=2,
                    hidden=(8, 8), epochs=2, seed=5)
    net, log, diags = train(sc, d, sched, cfg)
    assert len(log) == (7 * 30) // 40
    assert log.steps == [40 * (j + 1) for j in range(len(log))]
    net2, log2, _ = train(sc, d, sched, cfg)
    assert log2.mean_reward == log.mean_reward
    assert all(np.array_equal(a, b) for a, b in zip(net.params, net2.params))


def _permute(sc, d, perm):
    prods = [sc.products[k] for k in perm]
    rets = [type(r)(r.trucksize, r.delay, tuple(r.basestock[k] for k in perm)) for r in sc.retailers]
    sc2 = ScenarioConfig(sc.T, sc.predictdays, prods, rets, sc.maxorder, sc.seed, sc.ranges, sc.meta)
    return sc2, DemandSeries(d.values[:, perm, :])


def test_product_permutation_invariance(small):
    sc, d, sched = small
    perm = np.array([2, 0, 3, 1])
    sc2, d2 = _permute(sc, d, perm)
    assert np.array_equal(canonical_products(sc2, d2), np.argsort(perm)[canonical_products(sc, d)])
    cfg = PPOConfig(total_episodes=4, episodes_per_batch=2, eval_interval=60, hidden=(8, 8), epochs=1, seed=2)
    net, log, _ = train(sc, d, sched, cfg)
    _, sched2 = precompute_request_star(sc2, d2)
    net2, log2, _ = train(sc2, d2, sched2, cfg)
    assert all(np.array_equal(a, b) for a, b in zip(net.params, net2.params))
    assert log.mean_reward == log2.mean_reward


def test_save_and_load_agent(small, tmp_path):
    sc, d, sched = small
    cfg = PPOConfig(total_episodes=2, hidden=(8, 8), epochs=1)
    net, _, _ = train(sc, d, sched, cfg)
    norm = Normalizer.from_dict(sc.normalizers())
    save_agent(tmp_path, net, norm, sc.maxorder, sc.predictdays, cfg)
    pol = load_agent(tmp_path, predictdays=sc.predictdays)
    tr = simulate_full(sc, d, pol)
    assert set(np.unique(tr.order)) <= {0.0, sc.maxorder}
    with pytest.raises(ValueError):
        load_agent(tmp_path, predictdays=sc.predictdays + 1)
