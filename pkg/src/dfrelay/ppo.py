"""Clipped-surrogate policy optimization and the robust alternate-
optimization training loop.

The robust trainer and the vanilla PPO trainer share one code path; the
only difference is whether the distance-penalized acceptance test filters
which parameters' experience is used for updates. With a single-parameter
grid the two are bit-identical under equal seeds.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import PpoConfig
from .env import (EnvironmentParameter, ParameterGrid, encode_observation,
                  env_step_batch, observation_dim)
from .mdp import (Action, ParameterDistribution, Trajectory, decode_action_batch,
                  discounted_return, sample_parameters)
from .nets import (AdamState, Mlp, clip_grad_norm, gaussian_logp, head_upstream,
                   split_head)
from .seeding import stream

LOG_RATIO_GUARD = 30.0


# --- losses -------------------------------------------------------------------

def advantage(r_t, gamma: float, q_next_max, q_current):
    """Temporal-difference error r_t + gamma * max Q(s', .) - Q(s, a)."""
    return r_t + gamma * q_next_max - q_current


def critic_loss(delta):
    """Squared TD error; the target term is treated as a constant, so the
    gradient w.r.t. Q(s_t, a_t) is -2 * delta."""
    return np.square(delta)


def actor_loss(ratio, delta, kappa: float):
    """Clipped surrogate objective min(ratio*delta, clip(ratio)*delta).

    This is an objective to maximize; the optimizer descends its negation.
    delta is a constant w.r.t. the actor parameters.
    """
    ratio = np.asarray(ratio, dtype=float)
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must be in (0, 1), got {kappa}")
    if np.any(~np.isfinite(ratio)) or np.any(ratio <= 0):
        raise ValueError("probability ratio must be finite and > 0 "
                         "(non-positive ratio signals log-prob corruption)")
    clipped = np.clip(ratio, 1.0 - kappa, 1.0 + kappa)
    return np.minimum(ratio * delta, clipped * delta)


# --- agent ---------------------------------------------------------------------

def action_features(relays: np.ndarray, powers: np.ndarray, K: int,
                    P_max: float) -> np.ndarray:
    """Critic action features: relay one-hot plus normalized source power."""
    relays = np.asarray(relays, dtype=int)
    feats = np.zeros((relays.shape[0], K + 1))
    feats[np.arange(relays.shape[0]), relays - 1] = 1.0
    feats[:, K] = np.asarray(powers, dtype=float) / P_max
    return feats


class PpoAgent:
    """Actor (Gaussian head over raw relay/power values), old actor, and a
    Q(s, a) critic fed the observation concatenated with action features."""

    def __init__(self, obs_dim: int, K: int, P_max: float, cfg: PpoConfig, seed: int):
        self.obs_dim = obs_dim
        self.K = K
        self.P_max = P_max
        self.cfg = cfg
        self.min_std = np.array([cfg.min_std_relay, cfg.min_std_power])
        # raw outputs live on a normalized scale; the head maps them onto
        # the physical action box (relay values [1, K+1), power [0, P_max])
        self.head_center = np.array([(K + 2) / 2.0, P_max / 2.0])
        self.head_scale = np.array([K / 2.0, P_max / 2.0])
        self.actor = Mlp.standard(obs_dim, 4, stream(seed, "actor-init"))
        self.old_actor = self.actor.clone()
        self.critic = Mlp.standard(obs_dim + K + 1, 1, stream(seed, "critic-init"))
        self.adam_actor = AdamState(self.actor.params, cfg.lr_actor)
        self.adam_critic = AdamState(self.critic.params, cfg.lr_critic)

    def sync_old_actor(self) -> None:
        self.old_actor.copy_from(self.actor)

    def split(self, out: np.ndarray):
        return split_head(out, self.min_std, self.head_center, self.head_scale)

    def head(self, obs: np.ndarray):
        return self.split(self.actor.forward(obs))

    def upstream(self, x, mean, std, weight):
        return head_upstream(x, mean, std, weight, self.min_std, self.head_scale)

    def act_batch(self, obs: np.ndarray, rng: np.random.Generator | None = None,
                  mode: str = "mean"):
        """Executable (relays, powers) for an observation batch."""
        mean, std = self.head(obs)
        if mode == "sample":
            raw = mean + std * rng.standard_normal(mean.shape)
        else:
            raw = mean
        return decode_action_batch(raw, self.K, self.P_max)

    def q_values(self, obs: np.ndarray, relays: np.ndarray, powers: np.ndarray,
                 cache: bool = False):
        x = np.concatenate([obs, action_features(relays, powers, self.K, self.P_max)],
                           axis=-1)
        out = self.critic.forward(x, cache=cache)
        if cache:
            return out[0][:, 0], out[1]
        return out[:, 0]


# --- experience ----------------------------------------------------------------

@dataclass
class TransitionBatch:
    obs: np.ndarray
    raw: np.ndarray
    relay: np.ndarray
    p_s: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]


def batch_from_trajectories(trajectories: list[Trajectory]) -> TransitionBatch:
    return TransitionBatch(
        obs=np.concatenate([t.obs for t in trajectories]),
        raw=np.concatenate([t.raw for t in trajectories]),
        relay=np.concatenate([t.relay for t in trajectories]),
        p_s=np.concatenate([t.p_s for t in trajectories]),
        reward=np.concatenate([t.reward for t in trajectories]),
        next_obs=np.concatenate([t.next_obs for t in trajectories]))


@dataclass
class UpdateStats:
    actor_objective: float
    critic_loss: float
    ratio_means: list = field(default_factory=list)  # pre-step mean ratio per epoch
    ratio_max: float = 1.0


def ppo_update(agent: PpoAgent, batch: TransitionBatch, cfg: PpoConfig) -> UpdateStats:
    """Run cfg.epochs optimization epochs on one parameter's experience.

    Precondition: the caller synchronized the old actor. Each epoch
    recomputes the ratio against the frozen old actor, descends the critic
    on the squared TD error (frozen target) and ascends the actor on the
    clipped surrogate. The TD errors fed to the surrogate are standardized
    per epoch; without that zero-mean weighting, batches whose advantages
    share one sign push the policy mean monotonically off the action box.
    """
    if len(batch) == 0:
        raise ValueError("cannot update on an empty batch")
    n = len(batch)
    mean_old, std_old = agent.split(agent.old_actor.forward(batch.obs))
    logp_old = gaussian_logp(batch.raw, mean_old, std_old)

    stats = UpdateStats(actor_objective=np.nan, critic_loss=np.nan)
    for _ in range(cfg.epochs):
        # TD error under the current networks; max over next actions is
        # approximated by the critic at the new policy's mean action.
        mean_next, _ = agent.split(agent.actor.forward(batch.next_obs))
        relays_next, powers_next = decode_action_batch(mean_next, agent.K, agent.P_max)
        q_next = agent.q_values(batch.next_obs, relays_next, powers_next)
        q_cur, q_cache = agent.q_values(batch.obs, batch.relay, batch.p_s, cache=True)
        delta = advantage(batch.reward, cfg.gamma, q_next, q_cur)

        c_loss = float(np.mean(critic_loss(delta)))
        grads_c, _ = agent.critic.backward(q_cache, (-2.0 * delta / n)[:, None])
        agent.adam_critic.step(agent.critic.params,
                               clip_grad_norm(grads_c, cfg.max_grad_norm))

        out, a_cache = agent.actor.forward(batch.obs, cache=True)
        mean, std = agent.split(out)
        logp_new = gaussian_logp(batch.raw, mean, std)
        # float guard: a near-deterministic policy can push log-ratios of
        # stale samples past exp()'s range; their true weight is ~0 (or is
        # neutralized by the clip), so bounding the exponent only avoids
        # under/overflow without changing the update direction.
        ratio = np.exp(np.clip(logp_new - logp_old, -LOG_RATIO_GUARD, LOG_RATIO_GUARD))
        stats.ratio_means.append(float(np.mean(ratio)))
        stats.ratio_max = max(stats.ratio_max, float(np.max(ratio)))
        if float(np.mean(logp_old - logp_new)) > cfg.target_kl:
            break  # actor drifted far enough from the update anchor

        # centered TD errors weight the surrogate: same ordering, but a
        # batch of one-sided advantages can no longer push the policy mean
        # monotonically off the action box
        delta_a = delta - delta.mean()
        objective = actor_loss(ratio, delta_a, cfg.kappa)
        a_obj = float(np.mean(objective))
        unclipped_is_min = (ratio * delta_a
                            <= np.clip(ratio, 1 - cfg.kappa, 1 + cfg.kappa) * delta_a)
        dobj_dlogp = np.where(unclipped_is_min, ratio * delta_a, 0.0) / n
        upstream = agent.upstream(batch.raw, mean, std, dobj_dlogp)
        grads_a, _ = agent.actor.backward(a_cache, upstream)
        agent.adam_actor.step(agent.actor.params,
                              clip_grad_norm([-g for g in grads_a], cfg.max_grad_norm))

        stats.actor_objective = a_obj
        stats.critic_loss = c_loss
    return stats


# --- rollouts ------------------------------------------------------------------

def rollout_param(model, param: EnvironmentParameter, network, head_fn,
                  l_max: int, t_max: int, rng: np.random.Generator,
                  encoding: str, outage_mode: str) -> list[Trajectory]:
    """Collect l_max parallel trials of t_max slots on one parameter.

    head_fn maps an observation batch to the policy's (mean, std). All
    randomness comes from `rng` in a fixed order (initial states, action
    normals, transition uniforms), so a rollout is reproducible from its
    stream alone.
    """
    K, M = network.K, model.n_states
    init = rng.integers(0, M, size=(l_max, 2 * K))
    normals = rng.standard_normal((t_max, l_max, 2))
    uniforms = rng.uniform(size=(t_max, l_max, 2 * K))

    obs_buf = np.zeros((t_max, l_max, observation_dim(K, M, encoding)))
    next_buf = np.zeros_like(obs_buf)
    raw_buf = np.zeros((t_max, l_max, 2))
    relay_buf = np.zeros((t_max, l_max), dtype=int)
    power_buf = np.zeros((t_max, l_max))
    reward_buf = np.zeros((t_max, l_max), dtype=int)
    logp_buf = np.zeros((t_max, l_max))

    states = init
    for t in range(t_max):
        obs = encode_observation(states, M, encoding)
        mean, std = head_fn(obs)
        raw = mean + std * normals[t]
        logp = gaussian_logp(raw, mean, std)
        relays, powers = decode_action_batch(raw, K, network.P_max)
        states, rewards = env_step_batch(model, param, network, states,
                                         relays, powers, uniforms[t],
                                         outage_mode=outage_mode)
        obs_buf[t] = obs
        next_buf[t] = encode_observation(states, M, encoding)
        raw_buf[t] = raw
        relay_buf[t] = relays
        power_buf[t] = powers
        reward_buf[t] = rewards
        logp_buf[t] = logp

    return [Trajectory(obs=obs_buf[:, b], raw=raw_buf[:, b], relay=relay_buf[:, b],
                       p_s=power_buf[:, b], reward=reward_buf[:, b],
                       next_obs=next_buf[:, b], logp=logp_buf[:, b],
                       param_id=param.id, seed_key=()) for b in range(l_max)]


def collect_episodes(env, head_fn, n_trials: int, t_max: int,
                     rng: np.random.Generator) -> TransitionBatch:
    """Sequential collector for any env with reset/step and K/P_max attrs.

    head_fn maps an observation batch to (mean, std). Used by small-scale
    oracle problems; the relay trainers use the vectorized `rollout_param`.
    """
    rows = {k: [] for k in ("obs", "raw", "relay", "p_s", "reward", "next_obs")}
    for _ in range(n_trials):
        obs = env.reset(rng)
        for _ in range(t_max):
            mean, std = head_fn(obs[None, :])
            raw = (mean + std * rng.standard_normal(mean.shape))[0]
            relays, powers = decode_action_batch(raw[None, :], env.K, env.P_max)
            nxt, reward = env.step(Action(relay=int(relays[0]), p_s=float(powers[0])), rng)
            rows["obs"].append(obs)
            rows["raw"].append(raw)
            rows["relay"].append(int(relays[0]))
            rows["p_s"].append(float(powers[0]))
            rows["reward"].append(reward)
            rows["next_obs"].append(nxt)
            obs = nxt
    return TransitionBatch(obs=np.array(rows["obs"]), raw=np.array(rows["raw"]),
                           relay=np.array(rows["relay"]), p_s=np.array(rows["p_s"]),
                           reward=np.array(rows["reward"]),
                           next_obs=np.array(rows["next_obs"]))


# --- robust filtering ------------------------------------------------------------

def tv_distance_params(p_a: EnvironmentParameter, p_b: EnvironmentParameter,
                       grid: ParameterGrid) -> float:
    """Surrogate TV distance between environment parameters in [0, 1].

    Each non-degenerate (field, relay) component is mapped to its index
    fraction within its candidate set; the distance is the mean absolute
    difference of those fractions (half the L1 distance rescaled by 2/C).
    Identical parameters give 0, opposite grid corners give 1.
    """
    for p in (p_a, p_b):
        k = np.arange(grid.K)
        if (not np.array_equal(grid.d_sk_cand[k, p.loc_idx], p.d_sk)
                or not np.array_equal(grid.lambda_cand[k, p.thr_idx], p.lambda_k)):
            raise ValueError(f"parameter id {p.id} does not belong to this grid")
    f_a = grid.index_fractions(p_a)
    f_b = grid.index_fractions(p_b)
    if f_a.size == 0:
        return 0.0
    return float(np.mean(np.abs(f_a - f_b)))


def robust_filter(etas, distances, zeta: float, eta_worst: float | None = None) -> np.ndarray:
    """Indices m with eta_m - zeta * D_TV(p_w, p_m) >= eta_worst.

    The worst parameter itself is always accepted (distance 0, eta equal
    to the minimum). zeta = 0 accepts everything.
    """
    etas = np.asarray(etas, dtype=float)
    if etas.size == 0:
        raise ValueError("eta list must be non-empty")
    distances = np.asarray(distances, dtype=float)
    if eta_worst is None:
        eta_worst = float(etas.min())
    return np.flatnonzero(etas - zeta * distances >= eta_worst)


# --- training loops ---------------------------------------------------------------

@dataclass
class EpisodeMetrics:
    episode: int
    avg_eta: float
    worst_eta: float
    avg_rate: float
    worst_rate: float
    actor_loss: float
    critic_loss: float
    accepted: int


@dataclass
class TrainResult:
    method: str
    seed: int
    agent: object
    metrics: list


def _train_onpolicy(runtime, seed: int, robust: bool, workers: int = 1,
                    on_episode=None) -> TrainResult:
    cfg = runtime.config.rl
    network = runtime.config.network
    encoding = runtime.config.env.obs_encoding
    outage_mode = runtime.config.env.outage_mode
    grid = runtime.grid
    agent = PpoAgent(runtime.obs_dim, network.K, network.P_max, cfg, seed)
    dist = ParameterDistribution.uniform(grid.train_ids)

    metrics: list[EpisodeMetrics] = []
    for u in range(cfg.u_max):
        params = sample_parameters(dist, grid, cfg.m_max,
                                   stream(seed, "param-sample", u))

        def one_rollout(m_and_param):
            m, param = m_and_param
            return rollout_param(runtime.model, param, network, agent.head,
                                 cfg.l_max, cfg.t_max,
                                 stream(seed, "rollout", u, m),
                                 encoding, outage_mode)
        jobs = list(enumerate(params))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                trajs = list(pool.map(one_rollout, jobs))
        else:
            trajs = [one_rollout(job) for job in jobs]

        etas = np.array([discounted_return(tr, cfg.gamma) for tr in trajs])
        rates = np.array([np.mean([t.reward.mean() for t in tr]) for tr in trajs])
        w = int(np.argmin(etas))
        if robust:
            dists = np.array([tv_distance_params(params[w], p, grid) for p in params])
            accepted = robust_filter(etas, dists, cfg.zeta)
        else:
            accepted = np.arange(len(params))

        a_losses, c_losses = [], []
        for m in accepted:
            agent.sync_old_actor()
            stats = ppo_update(agent, batch_from_trajectories(trajs[m]), cfg)
            a_losses.append(stats.actor_objective)
            c_losses.append(stats.critic_loss)

        row = EpisodeMetrics(
            episode=u, avg_eta=float(etas.mean()), worst_eta=float(etas[w]),
            avg_rate=float(rates.mean()), worst_rate=float(rates.min()),
            actor_loss=float(np.mean(a_losses)) if a_losses else float("nan"),
            critic_loss=float(np.mean(c_losses)) if c_losses else float("nan"),
            accepted=len(accepted))
        metrics.append(row)
        if on_episode is not None:
            on_episode(u, agent, row)

    method = "robust" if robust else "ppo"
    return TrainResult(method=method, seed=seed, agent=agent, metrics=metrics)


def train_robust(runtime, seed: int, workers: int = 1, on_episode=None) -> TrainResult:
    """Full alternate-optimization loop with the distance-penalized filter."""
    return _train_onpolicy(runtime, seed, robust=True, workers=workers,
                           on_episode=on_episode)


def train_ppo(runtime, seed: int, workers: int = 1, on_episode=None) -> TrainResult:
    """Vanilla PPO baseline: updates on every sampled parameter's experience."""
    return _train_onpolicy(runtime, seed, robust=False, workers=workers,
                           on_episode=on_episode)
