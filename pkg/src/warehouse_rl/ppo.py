"""PPO training of a single generic ordering policy over all products."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .encoding import Normalizer, decode_action, observation_size
from .network import ActorCritic, load_checkpoint, log_softmax, save_checkpoint
from .policies import OrderingPolicy
from .simulator import ApproxEnv, DayView, scenario_observations

log = logging.getLogger(__name__)


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class PPOConfig:
    clip: float = 0.2
    gamma: float = 0.95
    lam: float = 0.95
    lr: float = 3e-4
    lr_decay: bool = True
    epochs: int = 10
    minibatch: int = 64
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_episodes: int = 667       # ~2e5 steps at T=300
    episodes_per_batch: int = 4
    eval_interval: int = 10_000
    eval_products: int = 10
    hidden: tuple = (100, 100)
    reward_scale: float | None = None  # None: derived from price and maxorder normalizers
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma and lambda must lie in [0, 1]")
        if self.epochs < 1 or self.minibatch < 1 or self.episodes_per_batch < 1:
            raise ValueError("epochs, minibatch and episodes_per_batch must be positive")
        if self.total_episodes < 0 or self.eval_interval < 1 or self.eval_products < 1:
            raise ValueError("episode and evaluation counts must be positive")
        self.hidden = tuple(self.hidden)


@dataclass
class TrainingLog:
    steps: list = field(default_factory=list)
    mean_reward: list = field(default_factory=list)

    def append(self, step: int, reward: float) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError("training log steps must increase")
        self.steps.append(int(step))
        self.mean_reward.append(float(reward))

    def __len__(self):
        return len(self.steps)

    def smoothed(self, width: int = 50) -> np.ndarray:
        """Trailing moving average over up to ``width`` evaluations."""
        r = np.asarray(self.mean_reward, dtype=float)
        c = np.concatenate([[0.0], np.cumsum(r)])
        idx = np.arange(1, len(r) + 1)
        lo = np.maximum(0, idx - width)
        return (c[idx] - c[lo]) / (idx - lo)

    def to_csv(self, path, width: int = 50) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "mean_reward", f"smoothed_{width}"])
            for s, r, m in zip(self.steps, self.mean_reward, self.smoothed(width)):
                w.writerow([s, repr(r), repr(float(m))])


def policy_step(net: ActorCritic, obs, rng: np.random.Generator, greedy: bool = False):
    """Sample actions for a batch of observations: ``(action, logp, value)``."""
    logits, value, _ = net.forward(obs)
    logp_all = log_softmax(logits)
    if greedy:
        action = logp_all.argmax(axis=1)
    else:
        # inverse-CDF sampling keeps one uniform draw per row
        cdf = np.cumsum(np.exp(logp_all), axis=1)
        u = rng.random(len(cdf))[:, None]
        action = np.minimum((u > cdf).sum(axis=1), logits.shape[1] - 1)
    logp = logp_all[np.arange(len(action)), action]
    return action, logp, value


def compute_gae(rewards, values, gamma: float, lam: float, last_value: float = 0.0):
    """Generalized advantage estimates for one episode; bootstraps ``last_value``."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must have equal length")
    nxt = np.append(values[1:], last_value)
    delta = rewards + gamma * nxt - values
    adv = np.zeros_like(delta)
    acc = 0.0
    for t in range(len(delta) - 1, -1, -1):
        acc = delta[t] + gamma * lam * acc
        adv[t] = acc
    return adv, adv + values


def ppo_loss(net: ActorCritic, batch: dict, clip: float, vf_coef: float, ent_coef: float,
             normalize_adv: bool = False):
    """Clipped-surrogate loss, value loss and entropy bonus with their gradient.

    Returns ``(loss, grads, info)``.
    """
    obs, act = batch["obs"], batch["actions"]
    adv = np.asarray(batch["advantages"], dtype=float)
    if normalize_adv and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = len(act)
    logits, value, cache = net.forward(obs)
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    rows = np.arange(n)
    logp = logp_all[rows, act]
    ratio = np.exp(logp - batch["logp"])
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr1, surr2 = ratio * adv, clipped * adv
    pg_loss = -np.minimum(surr1, surr2).mean()
    verr = value - batch["returns"]
    v_loss = 0.5 * np.mean(verr ** 2)
    entropy = -(p * logp_all).sum(axis=1)
    loss = pg_loss + vf_coef * v_loss - ent_coef * entropy.mean()

    # the unclipped branch carries gradient whenever it is the minimum
    g_logp = np.where(surr1 <= surr2, -adv * ratio / n, 0.0)
    onehot = np.zeros_like(p)
    onehot[rows, act] = 1.0
    dlogits = g_logp[:, None] * (onehot - p)
    dlogits += (ent_coef / n) * p * (logp_all + entropy[:, None])
    dvalue = vf_coef * verr / n
    grads = net.backward(cache, dlogits, dvalue)
    info = {"policy_loss": float(pg_loss), "value_loss": float(v_loss),
            "entropy": float(entropy.mean()), "mean_ratio": float(ratio.mean()),
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip))}
    return float(loss), grads, info


class Adam:
    def __init__(self, params, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def ppo_update(net: ActorCritic, opt: Adam, batch: dict, config: PPOConfig,
               rng: np.random.Generator, lr: float | None = None) -> dict:
    """Several epochs of minibatch PPO on ``batch``; updates ``net`` in place.

    Raises :class:`NonFiniteGradient` before touching the weights of the
    offending minibatch.
    """
    n = len(batch["actions"])
    stats = []
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, config.minibatch):
            idx = perm[lo:lo + config.minibatch]
            mb = {key: val[idx] for key, val in batch.items()}
            _, grads, info = ppo_loss(net, mb, config.clip, config.vf_coef, config.ent_coef,
                                      normalize_adv=True)
            norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
            if not np.isfinite(norm):
                raise NonFiniteGradient(f"non-finite gradient norm; info={info}")
            if config.max_grad_norm and norm > config.max_grad_norm:
                grads = [g * (config.max_grad_norm / norm) for g in grads]
            opt.step(net.params, grads, lr)
            info["grad_norm"] = norm
            stats.append(info)
    return {key: float(np.mean([s[key] for s in stats])) for key in stats[0]} if stats else {}


def canonical_products(scenario, demand) -> np.ndarray:
    """Product order that depends on product data only, never on indices."""
    keys = []
    for k, spec in enumerate(scenario.products):
        col = np.ascontiguousarray(demand.values[:, k, :])
        bs = scenario.basestock[k]
        keys.append((spec.price, spec.stockcost, spec.delay, col.tobytes(), bs.tobytes(), k))
    return np.array([key[-1] for key in sorted(keys)], dtype=int)


def default_reward_scale(norm: Normalizer) -> float:
    # one day's profit at mean price and half of maxorder maps to ~0.1
    return 1.0 / (10.0 * norm.price * norm.kg / 2.0)


def _rollout(net, envs, ks, rng, maxorder, greedy=False):
    obs = np.stack([env.reset(int(k)) for env, k in zip(envs, ks)])
    T = envs[0].T
    n = len(envs)
    buf = {"obs": np.zeros((T, n, obs.shape[1])), "actions": np.zeros((T, n), dtype=int),
           "logp": np.zeros((T, n)), "values": np.zeros((T, n)), "rewards": np.zeros((T, n))}
    for t in range(T):
        action, logp, value = policy_step(net, obs, rng, greedy=greedy)
        buf["obs"][t] = obs
        buf["actions"][t] = action
        buf["logp"][t] = logp
        buf["values"][t] = value
        nxt = []
        for j, env in enumerate(envs):
            o, r, _ = env.step(decode_action(int(action[j]), maxorder))
            buf["rewards"][t, j] = r
            nxt.append(o)
        obs = np.stack(nxt)
    return buf


def evaluate(net, scenario, demand, schedule, norm, maxorder, ks, greedy=True, seed=0) -> float:
    """Mean per-day (approximate) reward of ``net`` over products ``ks``."""
    envs = [ApproxEnv(scenario, demand, schedule, norm) for _ in ks]
    buf = _rollout(net, envs, ks, np.random.default_rng(seed), maxorder, greedy=greedy)
    return float(buf["rewards"].mean())


def train(scenario, demand, schedule, config: PPOConfig | None = None, normalizer: Normalizer | None = None,
          maxorder: float | None = None, progress=None):
    """Train one policy on randomly drawn products of the approximate environment.

    Returns ``(net, TrainingLog, diagnostics)``.
    """
    config = config or PPOConfig()
    norm = normalizer or Normalizer.from_dict(scenario.normalizers())
    maxorder = float(scenario.maxorder if maxorder is None else maxorder)
    rng = np.random.default_rng(config.seed)
    net_seed, sample_seed, update_seed, eval_seed = (int(s.generate_state(1)[0])
                                                     for s in np.random.SeedSequence(config.seed).spawn(4))
    net = ActorCritic(observation_size(scenario.predictdays), config.hidden, seed=net_seed)
    opt = Adam(net.params, config.lr)
    sample_rng = np.random.default_rng(sample_seed)
    update_rng = np.random.default_rng(update_seed)
    eval_rng = np.random.default_rng(eval_seed)
    order = canonical_products(scenario, demand)
    scale = config.reward_scale if config.reward_scale is not None else default_reward_scale(norm)

    T = scenario.T
    total_steps = config.total_episodes * T
    log_ = TrainingLog()
    diags = []
    envs = [ApproxEnv(scenario, demand, schedule, norm) for _ in range(config.episodes_per_batch)]
    steps = 0
    next_eval = config.eval_interval
    episodes = 0
    while episodes < config.total_episodes:
        n = min(config.episodes_per_batch, config.total_episodes - episodes)
        ks = order[sample_rng.integers(0, scenario.P, size=n)]
        buf = _rollout(net, envs[:n], ks, rng, maxorder)
        adv = np.zeros((T, n))
        ret = np.zeros((T, n))
        for j in range(n):
            adv[:, j], ret[:, j] = compute_gae(buf["rewards"][:, j] * scale, buf["values"][:, j],
                                               config.gamma, config.lam)
        batch = {"obs": buf["obs"].reshape(T * n, -1), "actions": buf["actions"].reshape(-1),
                 "logp": buf["logp"].reshape(-1), "advantages": adv.reshape(-1),
                 "returns": ret.reshape(-1)}
        lr = config.lr * (1.0 - steps / total_steps) if config.lr_decay else config.lr
        d = ppo_update(net, opt, batch, config, update_rng, lr)
        d["episode_reward"] = float(buf["rewards"].mean())
        diags.append(d)
        episodes += n
        steps += n * T
        while steps >= next_eval:
            ks_eval = order[eval_rng.integers(0, scenario.P, size=config.eval_products)]
            r = evaluate(net, scenario, demand, schedule, norm, maxorder, ks_eval, greedy=True)
            log_.append(next_eval, r)
            if progress:
                progress(next_eval, r, d)
            next_eval += config.eval_interval
    return net, log_, diags


class RLPolicy(OrderingPolicy):
    """A trained network acting as an ordering policy in the exact simulator."""

    kind = "ppo"

    def __init__(self, net: ActorCritic, normalizer: Normalizer, maxorder: float,
                 greedy: bool = True, seed: int = 0):
        self.net = net
        self.norm = normalizer
        self.maxorder = float(maxorder)
        self.greedy = greedy
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def orders(self, view: DayView) -> np.ndarray:
        obs = scenario_observations(view, self.norm)
        action, _, _ = policy_step(self.net, obs, self.rng, greedy=self.greedy)
        return decode_action(action, self.maxorder)

    def params(self) -> dict:
        return {"normalizer": self.norm.to_dict(), "maxorder": self.maxorder,
                "greedy": self.greedy, "hidden": list(self.net.hidden)}


def save_agent(directory, net: ActorCritic, normalizer: Normalizer, maxorder: float,
               predictdays: int, config: PPOConfig | None = None) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"checkpoint": directory / "policy.bin", "policy": directory / "policy.json"}
    save_checkpoint(paths["checkpoint"], net)
    meta = {"kind": "ppo", "normalizer": normalizer.to_dict(), "maxorder": maxorder,
            "predictdays": predictdays, "obs_dim": net.obs_dim, "hidden": list(net.hidden),
            "config": asdict(config) if config else None,
            "seed": config.seed if config else None}
    paths["policy"].write_text(json.dumps(meta, indent=2, sort_keys=True, default=list))
    return paths


def load_agent(directory, predictdays: int | None = None, greedy: bool = True) -> RLPolicy:
    directory = Path(directory)
    meta_path = directory / "policy.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"missing policy metadata: {meta_path}")
    meta = json.loads(meta_path.read_text())
    if predictdays is not None and meta["predictdays"] != predictdays:
        raise ValueError(f"policy was trained with predictdays={meta['predictdays']}, "
                         f"scenario has {predictdays}")
    net = load_checkpoint(directory / "policy.bin",
                          obs_dim=observation_size(predictdays) if predictdays else None)
    return RLPolicy(net, Normalizer.from_dict(meta["normalizer"]), meta["maxorder"], greedy=greedy,
                    seed=meta.get("seed") or 0)
