"""Baseline learners: DQN over a discretized action set, DDPG with target
networks and soft updates, and the uniform random policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DdpgConfig, DqnConfig, PpoConfig
from .env import encode_observation, env_step_batch
from .mdp import Action, ParameterDistribution, decode_action_batch, sample_parameters
from .nets import AdamState, Mlp, clip_grad_norm
from .ppo import EpisodeMetrics, TrainResult
from .seeding import stream


def random_policy(K: int, P_max: float, rng: np.random.Generator) -> Action:
    """Uniform relay choice with uniform source power."""
    return Action(relay=int(rng.integers(1, K + 1)), p_s=float(rng.uniform(0, P_max)))


def random_policy_batch(K: int, P_max: float, n: int, rng: np.random.Generator):
    return rng.integers(1, K + 1, size=n), rng.uniform(0, P_max, size=n)


class ReplayBuffer:
    """Fixed-capacity ring buffer of flat transition rows."""

    def __init__(self, capacity: int, widths: dict[str, int]):
        self.capacity = capacity
        self.arrays = {k: np.zeros((capacity, w)) for k, w in widths.items()}
        self.size = 0
        self.cursor = 0

    def push_batch(self, **rows) -> None:
        n = next(iter(rows.values())).shape[0]
        for i in range(n):
            for key, arr in self.arrays.items():
                arr[self.cursor] = rows[key][i]
            self.cursor = (self.cursor + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = rng.integers(0, self.size, size=batch_size)
        return {k: arr[idx] for k, arr in self.arrays.items()}

    def __len__(self) -> int:
        return self.size


# --- DQN -----------------------------------------------------------------------

class DqnAgent:
    """Q-learning over K relays x power_levels interior power points,
    with a replay buffer, hard target syncs and linearly decaying epsilon."""

    def __init__(self, obs_dim: int, K: int, P_max: float, cfg: DqnConfig,
                 gamma: float, seed: int, total_steps: int):
        self.K = K
        self.P_max = P_max
        self.cfg = cfg
        self.gamma = gamma
        self.n_actions = K * cfg.power_levels
        self.levels = P_max * (np.arange(cfg.power_levels) + 1) / (cfg.power_levels + 1)
        self.q = Mlp.standard(obs_dim, self.n_actions, stream(seed, "dqn-init"))
        self.target = self.q.clone()
        self.adam = AdamState(self.q.params, cfg.lr)
        self.buffer = ReplayBuffer(cfg.buffer_size, {
            "obs": obs_dim, "action": 1, "reward": 1, "next_obs": obs_dim})
        self.steps = 0
        self.updates = 0
        self.eps_steps = max(1, int(cfg.eps_decay_frac * total_steps))

    def epsilon(self) -> float:
        frac = min(1.0, self.steps / self.eps_steps)
        return self.cfg.eps_start + frac * (self.cfg.eps_end - self.cfg.eps_start)

    def action_from_index(self, idx: int) -> Action:
        relay = idx // self.cfg.power_levels + 1
        return Action(relay=relay, p_s=float(self.levels[idx % self.cfg.power_levels]))

    def decode_indices(self, indices: np.ndarray):
        relays = indices // self.cfg.power_levels + 1
        powers = self.levels[indices % self.cfg.power_levels]
        return relays, powers

    def act_indices(self, obs: np.ndarray, rng: np.random.Generator,
                    greedy: bool = False) -> np.ndarray:
        greedy_idx = np.argmax(self.q.forward(obs), axis=-1)
        if greedy:
            return greedy_idx
        explore = rng.uniform(size=obs.shape[0]) < self.epsilon()
        random_idx = rng.integers(0, self.n_actions, size=obs.shape[0])
        return np.where(explore, random_idx, greedy_idx)

    def act_batch(self, obs: np.ndarray, rng: np.random.Generator | None = None,
                  mode: str = "mean"):
        idx = self.act_indices(obs, rng, greedy=(mode == "mean"))
        return self.decode_indices(idx)

    def observe_batch(self, obs, action_idx, reward, next_obs) -> None:
        self.buffer.push_batch(obs=obs, action=np.asarray(action_idx, float)[:, None],
                               reward=np.asarray(reward, float)[:, None],
                               next_obs=next_obs)
        self.steps += obs.shape[0]

    def update(self, rng: np.random.Generator) -> float:
        batch = self.buffer.sample(self.cfg.batch_size, rng)
        n = self.cfg.batch_size
        q_next = self.target.forward(batch["next_obs"]).max(axis=-1)
        y = batch["reward"][:, 0] + self.gamma * q_next
        q_all, cache = self.q.forward(batch["obs"], cache=True)
        a_idx = batch["action"][:, 0].astype(int)
        q_sa = q_all[np.arange(n), a_idx]
        delta = q_sa - y
        upstream = np.zeros_like(q_all)
        upstream[np.arange(n), a_idx] = 2.0 * delta / n
        grads, _ = self.q.backward(cache, upstream)
        self.adam.step(self.q.params, clip_grad_norm(grads, self.cfg.max_grad_norm))
        self.updates += 1
        if self.updates % self.cfg.target_sync == 0:
            self.target.copy_from(self.q)
        return float(np.mean(delta ** 2))


# --- DDPG ----------------------------------------------------------------------

def _ddpg_action_features(raw: np.ndarray, K: int, P_max: float) -> np.ndarray:
    """Differentiable normalization of raw (relay_value, power_value)."""
    return np.stack([(raw[..., 0] - 1.0) / K, raw[..., 1] / P_max], axis=-1)


class DdpgAgent:
    """Deterministic actor + Q critic with target twins and soft updates.

    Exploration adds Gaussian noise to the raw actor output; execution
    goes through the same decode path as the PPO agents.
    """

    def __init__(self, obs_dim: int, K: int, P_max: float, cfg: DdpgConfig,
                 gamma: float, seed: int):
        self.K = K
        self.P_max = P_max
        self.cfg = cfg
        self.gamma = gamma
        self.head_center = np.array([(K + 2) / 2.0, P_max / 2.0])
        self.head_scale = np.array([K / 2.0, P_max / 2.0])
        self.actor = Mlp.standard(obs_dim, 2, stream(seed, "ddpg-actor-init"))
        self.critic = Mlp.standard(obs_dim + 2, 1, stream(seed, "ddpg-critic-init"))
        self.target_actor = self.actor.clone()
        self.target_critic = self.critic.clone()
        self.adam_actor = AdamState(self.actor.params, cfg.lr_actor)
        self.adam_critic = AdamState(self.critic.params, cfg.lr_critic)
        self.buffer = ReplayBuffer(cfg.buffer_size, {
            "obs": obs_dim, "raw": 2, "reward": 1, "next_obs": obs_dim})

    def raw_actions(self, obs: np.ndarray, rng: np.random.Generator | None = None,
                    noisy: bool = False) -> np.ndarray:
        raw = self.head_center + self.head_scale * self.actor.forward(obs)
        if noisy:
            scale = np.array([self.cfg.noise_relay, self.cfg.noise_power])
            raw = raw + scale * rng.standard_normal(raw.shape)
        return raw

    def act_batch(self, obs: np.ndarray, rng: np.random.Generator | None = None,
                  mode: str = "mean"):
        raw = self.raw_actions(obs, rng, noisy=(mode == "sample"))
        return decode_action_batch(raw, self.K, self.P_max)

    def observe_batch(self, obs, raw, reward, next_obs) -> None:
        self.buffer.push_batch(obs=obs, raw=raw,
                               reward=np.asarray(reward, float)[:, None],
                               next_obs=next_obs)

    def _critic_input(self, obs: np.ndarray, raw: np.ndarray) -> np.ndarray:
        return np.concatenate([obs, _ddpg_action_features(raw, self.K, self.P_max)],
                              axis=-1)

    def update(self, rng: np.random.Generator) -> float:
        batch = self.buffer.sample(self.cfg.batch_size, rng)
        n = self.cfg.batch_size
        raw_next = self.head_center + self.head_scale * self.target_actor.forward(
            batch["next_obs"])
        q_next = self.target_critic.forward(self._critic_input(batch["next_obs"],
                                                               raw_next))[:, 0]
        y = batch["reward"][:, 0] + self.gamma * q_next
        q, cache = self.critic.forward(self._critic_input(batch["obs"], batch["raw"]),
                                       cache=True)
        delta = q[:, 0] - y
        grads_c, _ = self.critic.backward(cache, (2.0 * delta / n)[:, None])
        self.adam_critic.step(self.critic.params,
                              clip_grad_norm(grads_c, self.cfg.max_grad_norm))
        critic_mse = float(np.mean(delta ** 2))

        # actor ascends Q(s, mu(s)); gradient flows through the critic input
        out_pi, a_cache = self.actor.forward(batch["obs"], cache=True)
        raw_pi = self.head_center + self.head_scale * out_pi
        _, q_cache = self.critic.forward(self._critic_input(batch["obs"], raw_pi),
                                         cache=True)
        _, input_grad = self.critic.backward(q_cache, np.full((n, 1), 1.0 / n))
        feat_grad = input_grad[:, -2:]
        raw_grad = (feat_grad * np.array([1.0 / self.K, 1.0 / self.P_max])
                    * self.head_scale)
        grads_a, _ = self.actor.backward(a_cache, raw_grad)
        self.adam_actor.step(self.actor.params,
                             clip_grad_norm([-g for g in grads_a],
                                            self.cfg.max_grad_norm))

        self.soft_update()
        return critic_mse

    def soft_update(self, tau: float | None = None) -> None:
        tau = self.cfg.tau if tau is None else tau
        for online, target in ((self.actor, self.target_actor),
                               (self.critic, self.target_critic)):
            for p, tp in zip(online.params, target.params):
                tp *= 1.0 - tau
                tp += tau * p


# --- grid-level trainers ----------------------------------------------------------

@dataclass
class _Rollout:
    rewards: np.ndarray  # (t_max, l_max)


def _offpolicy_episode(runtime, agent, param, u: int, m: int, seed: int,
                       kind: str) -> _Rollout:
    """Roll l_max parallel trials on one parameter, feeding the replay
    buffer and running (l_max // update_every) updates per slot."""
    cfg: PpoConfig = runtime.config.rl
    network = runtime.config.network
    M = runtime.model.n_states
    encoding = runtime.config.env.obs_encoding
    rng = stream(seed, f"{kind}-rollout", u, m)
    l_max, t_max = cfg.l_max, cfg.t_max
    states = rng.integers(0, M, size=(l_max, 2 * network.K))
    rewards = np.zeros((t_max, l_max), dtype=int)
    updates_per_step = max(1, l_max // agent.cfg.update_every)
    for t in range(t_max):
        obs = encode_observation(states, M, encoding)
        if kind == "dqn":
            idx = agent.act_indices(obs, rng)
            relays, powers = agent.decode_indices(idx)
        else:
            raw = agent.raw_actions(obs, rng, noisy=True)
            relays, powers = decode_action_batch(raw, network.K, network.P_max)
        uniforms = rng.uniform(size=(l_max, 2 * network.K))
        nxt, r = env_step_batch(runtime.model, param, network, states, relays,
                                powers, uniforms,
                                outage_mode=runtime.config.env.outage_mode)
        next_obs = encode_observation(nxt, M, encoding)
        if kind == "dqn":
            agent.observe_batch(obs, idx, r, next_obs)
        else:
            agent.observe_batch(obs, raw, r, next_obs)
        if len(agent.buffer) >= agent.cfg.warmup:
            for _ in range(updates_per_step):
                agent.update(rng)
        rewards[t] = r
        states = nxt
    return _Rollout(rewards=rewards)


def _train_offpolicy(runtime, seed: int, kind: str, on_episode=None) -> TrainResult:
    cfg = runtime.config.rl
    network = runtime.config.network
    grid = runtime.grid
    total_steps = cfg.u_max * cfg.m_max * cfg.l_max * cfg.t_max
    if kind == "dqn":
        agent = DqnAgent(runtime.obs_dim, network.K, network.P_max,
                         runtime.config.dqn, cfg.gamma, seed, total_steps)
    else:
        agent = DdpgAgent(runtime.obs_dim, network.K, network.P_max,
                          runtime.config.ddpg, cfg.gamma, seed)
    dist = ParameterDistribution.uniform(grid.train_ids)
    metrics = []
    for u in range(cfg.u_max):
        params = sample_parameters(dist, grid, cfg.m_max,
                                   stream(seed, "param-sample", u))
        etas, rates = [], []
        for m, param in enumerate(params):
            roll = _offpolicy_episode(runtime, agent, param, u, m, seed, kind)
            weights = cfg.gamma ** np.arange(cfg.t_max)
            etas.append(float(np.mean(weights @ roll.rewards)))
            rates.append(float(roll.rewards.mean()))
        etas = np.array(etas)
        rates = np.array(rates)
        row = EpisodeMetrics(
            episode=u, avg_eta=float(etas.mean()), worst_eta=float(etas.min()),
            avg_rate=float(rates.mean()), worst_rate=float(rates.min()),
            actor_loss=float("nan"), critic_loss=float("nan"),
            accepted=len(params))
        metrics.append(row)
        if on_episode is not None:
            on_episode(u, agent, row)
    return TrainResult(method=kind, seed=seed, agent=agent, metrics=metrics)


def train_dqn(runtime, seed: int, on_episode=None) -> TrainResult:
    return _train_offpolicy(runtime, seed, "dqn", on_episode=on_episode)


def train_ddpg(runtime, seed: int, on_episode=None) -> TrainResult:
    return _train_offpolicy(runtime, seed, "ddpg", on_episode=on_episode)


class RandomAgent:
    """Uniform random action policy; trained-model interface compatible."""

    def __init__(self, K: int, P_max: float):
        self.K = K
        self.P_max = P_max

    def act_batch(self, obs: np.ndarray, rng: np.random.Generator, mode: str = "mean"):
        return random_policy_batch(self.K, self.P_max, obs.shape[0], rng)


def train_random(runtime, seed: int, on_episode=None) -> TrainResult:
    """No learning: rolls out the random policy to produce comparable
    training-curve statistics."""
    cfg = runtime.config.rl
    network = runtime.config.network
    grid = runtime.grid
    M = runtime.model.n_states
    agent = RandomAgent(network.K, network.P_max)
    dist = ParameterDistribution.uniform(grid.train_ids)
    metrics = []
    weights = cfg.gamma ** np.arange(cfg.t_max)
    for u in range(cfg.u_max):
        params = sample_parameters(dist, grid, cfg.m_max,
                                   stream(seed, "param-sample", u))
        etas, rates = [], []
        for m, param in enumerate(params):
            rng = stream(seed, "random-rollout", u, m)
            states = rng.integers(0, M, size=(cfg.l_max, 2 * network.K))
            rewards = np.zeros((cfg.t_max, cfg.l_max), dtype=int)
            for t in range(cfg.t_max):
                relays, powers = random_policy_batch(network.K, network.P_max,
                                                     cfg.l_max, rng)
                uniforms = rng.uniform(size=(cfg.l_max, 2 * network.K))
                states, r = env_step_batch(runtime.model, param, network, states,
                                           relays, powers, uniforms,
                                           outage_mode=runtime.config.env.outage_mode)
                rewards[t] = r
            etas.append(float(np.mean(weights @ rewards)))
            rates.append(float(rewards.mean()))
        etas = np.array(etas)
        rates = np.array(rates)
        row = EpisodeMetrics(
            episode=u, avg_eta=float(etas.mean()), worst_eta=float(etas.min()),
            avg_rate=float(rates.mean()), worst_rate=float(rates.min()),
            actor_loss=float("nan"), critic_loss=float("nan"), accepted=0)
        metrics.append(row)
        if on_episode is not None:
            on_episode(u, agent, row)
    return TrainResult(method="random", seed=seed, agent=agent, metrics=metrics)
