"""Frozen-model evaluation over the parameter grid, summary reports,
CSV outputs, and versioned checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import DdpgAgent, DqnAgent, RandomAgent
from .channel import load_markov_model, save_markov_model
from .config import ScenarioConfig, scenario_from_dict
from .env import ParameterGrid, encode_observation, env_step_multi, grid_from_candidates
from .nets import CheckpointError, Mlp, load_networks, save_networks
from .ppo import PpoAgent, TrainResult
from .runtime import ScenarioRuntime
from .seeding import stream

CHECKPOINT_FORMAT = "dfrelay-checkpoint-v1"


@dataclass
class EvalSummary:
    episodes: int
    per_episode_avg: np.ndarray    # mean success rate over parameters, per episode
    per_episode_worst: np.ndarray  # min success rate over parameters, per episode
    per_episode_rates: np.ndarray  # (episodes, n_params) success rate table

    def _stats(self, series: np.ndarray) -> dict[str, float]:
        return {"max": float(series.max()), "min": float(series.min()),
                "mean": float(series.mean()), "std": float(series.std())}

    @property
    def avg(self) -> dict[str, float]:
        return self._stats(self.per_episode_avg)

    @property
    def worst(self) -> dict[str, float]:
        return self._stats(self.per_episode_worst)


@dataclass
class TrainReport:
    method: str
    seed: int
    metrics: list                      # per-episode EpisodeMetrics rows
    summary: EvalSummary | None = None
    train_evals: list | None = None    # (episode, avg_rate, worst_rate) snapshots


def evaluate_agent(agent, runtime: ScenarioRuntime, param_ids, episodes: int,
                   seed: int, mode: str = "mean", t_max: int | None = None) -> EvalSummary:
    """Roll the frozen agent over every listed parameter for each episode.

    All parameters are stepped in one batch per slot; each episode owns a
    seeded stream consumed in a fixed order (initial states, then per slot
    the policy draw followed by the transition uniforms).
    """
    param_ids = np.asarray(param_ids, dtype=int)
    if param_ids.size == 0:
        raise ValueError("evaluation needs a non-empty parameter set")
    seed_key = seed if isinstance(seed, tuple) else (seed,)
    network = runtime.config.network
    model = runtime.model
    M = model.n_states
    encoding = runtime.config.env.obs_encoding
    outage_mode = runtime.config.env.outage_mode
    params = [runtime.grid.params[i] for i in param_ids]
    loc_idx = np.array([p.loc_idx for p in params])
    lambda_k = np.array([p.lambda_k for p in params])
    n = len(params)
    t_max = t_max if t_max is not None else runtime.config.rl.t_max

    avg_rows = np.zeros(episodes)
    worst_rows = np.zeros(episodes)
    rate_table = np.zeros((episodes, n))
    for ep in range(episodes):
        rng = stream(*seed_key, "eval", ep)
        states = rng.integers(0, M, size=(n, 2 * network.K))
        wins = np.zeros(n)
        for _ in range(t_max):
            obs = encode_observation(states, M, encoding)
            relays, powers = agent.act_batch(obs, rng, mode=mode)
            uniforms = rng.uniform(size=(n, 2 * network.K))
            states, r = env_step_multi(model, network, loc_idx, lambda_k, states,
                                       relays, powers, uniforms,
                                       outage_mode=outage_mode)
            wins += r
        rates = wins / t_max
        rate_table[ep] = rates
        avg_rows[ep] = rates.mean()
        worst_rows[ep] = rates.min()
    return EvalSummary(episodes=episodes, per_episode_avg=avg_rows,
                       per_episode_worst=worst_rows, per_episode_rates=rate_table)


def evaluate_model(agent, runtime: ScenarioRuntime, seed: int,
                   episodes: int | None = None) -> EvalSummary:
    """Protocol evaluation: the full grid including unseen parameters."""
    protocol = runtime.config.protocol
    return evaluate_agent(agent, runtime, runtime.grid.test_ids,
                          episodes or protocol.episodes, seed,
                          mode=protocol.mode)


# --- comparison tables -----------------------------------------------------------

_COLUMNS = ("avg_max", "avg_min", "avg_mean", "avg_std",
            "worst_max", "worst_min", "worst_mean", "worst_std")


def summary_row(summary: EvalSummary) -> dict[str, float]:
    avg, worst = summary.avg, summary.worst
    return {"avg_max": avg["max"], "avg_min": avg["min"],
            "avg_mean": avg["mean"], "avg_std": avg["std"],
            "worst_max": worst["max"], "worst_min": worst["min"],
            "worst_mean": worst["mean"], "worst_std": worst["std"]}


def compare_methods(entries: list[tuple[str, EvalSummary]]):
    """Render the per-method comparison. Best value per column is starred
    (highest for rates, lowest for standard deviations); input order is
    preserved. Returns (table text, csv rows)."""
    rows = [(method, summary_row(summary)) for method, summary in entries]
    best = {}
    for col in _COLUMNS:
        values = [r[col] for _, r in rows]
        best[col] = min(values) if col.endswith("_std") else max(values)

    header = ["method"] + list(_COLUMNS)
    csv_lines = [",".join(header)]
    width = max(len("method"), *(len(m) for m, _ in rows)) if rows else 6
    text_lines = [" ".join(["method".ljust(width)] + [c.rjust(11) for c in _COLUMNS])]
    for method, r in rows:
        csv_lines.append(",".join([method] + [repr(float(r[c])) for c in _COLUMNS]))
        cells = []
        for col in _COLUMNS:
            mark = "*" if r[col] == best[col] else " "
            cells.append(f"{r[col]:.4f}{mark}".rjust(11))
        text_lines.append(" ".join([method.ljust(width)] + cells))
    return "\n".join(text_lines), "\n".join(csv_lines) + "\n"


# --- CSV outputs -------------------------------------------------------------------

def _r(x) -> str:
    return repr(float(x))


def write_train_metrics_csv(path, metrics) -> None:
    lines = ["episode,avg_eta,worst_eta,actor_loss,critic_loss,accepted"]
    for m in metrics:
        lines.append(f"{m.episode},{_r(m.avg_eta)},{_r(m.worst_eta)},"
                     f"{_r(m.actor_loss)},{_r(m.critic_loss)},{m.accepted}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_curves_csv(path, metrics, method: str, seed: int) -> None:
    lines = ["episode,avg_rate,worst_rate,method,seed"]
    for m in metrics:
        lines.append(f"{m.episode},{_r(m.avg_rate)},{_r(m.worst_rate)},{method},{seed}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_train_evals_csv(path, rows) -> None:
    lines = ["episode,avg_rate,worst_rate"]
    for episode, avg_rate, worst_rate in rows:
        lines.append(f"{episode},{_r(avg_rate)},{_r(worst_rate)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_eval_episodes_csv(path, summary: EvalSummary) -> None:
    lines = ["episode,avg_rate,worst_rate"]
    for ep in range(summary.episodes):
        lines.append(f"{ep},{_r(summary.per_episode_avg[ep])},"
                     f"{_r(summary.per_episode_worst[ep])}")
    Path(path).write_text("\n".join(lines) + "\n")


# --- checkpoints --------------------------------------------------------------------

def networks_for_result(result: TrainResult) -> dict[str, Mlp]:
    agent = result.agent
    if result.method in ("robust", "ppo"):
        return {"actor": agent.actor, "critic": agent.critic}
    if result.method == "dqn":
        return {"q": agent.q, "target": agent.target}
    if result.method == "ddpg":
        return {"actor": agent.actor, "critic": agent.critic,
                "target_actor": agent.target_actor,
                "target_critic": agent.target_critic}
    if result.method == "random":
        return {}
    raise ValueError(f"unknown method {result.method!r}")


def save_checkpoint(directory, runtime: ScenarioRuntime, nets: dict[str, Mlp],
                    method: str, seed: int) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = runtime.grid
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "method": method,
        "seed": seed,
        "config": runtime.config.to_dict(),
        "config_hash": runtime.config.config_hash(),
        "grid": {
            "d_sk_cand": grid.d_sk_cand.tolist(),
            "d_kd_cand": grid.d_kd_cand.tolist(),
            "lambda_cand": grid.lambda_cand.tolist(),
            "train_ids": grid.train_ids.tolist(),
        },
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                        sort_keys=True) + "\n")
    save_markov_model(runtime.model, directory / "model.txt")
    save_networks(nets, directory / "networks.txt")


@dataclass
class CheckpointBundle:
    runtime: ScenarioRuntime
    nets: dict[str, Mlp]
    method: str
    seed: int


def load_checkpoint(directory) -> CheckpointBundle:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"no manifest.json under {directory}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"unsupported checkpoint format: expected {CHECKPOINT_FORMAT!r}, "
            f"found {manifest.get('format')!r}")
    config = scenario_from_dict(manifest["config"])
    g = manifest["grid"]
    d_sk = np.array(g["d_sk_cand"])
    d_kd = np.array(g["d_kd_cand"])
    lam = np.array(g["lambda_cand"])
    K = config.network.K
    L = config.geometry.locations_per_relay
    J = config.thresholds.candidates
    if d_sk.shape != (K, L) or d_kd.shape != (K, L) or lam.shape != (K, J):
        raise CheckpointError(
            f"checkpoint grid shape {d_sk.shape}/{lam.shape} does not match its "
            f"config (K={K}, L={L}, J={J})")
    grid = grid_from_candidates(d_sk, d_kd, lam,
                                config.geometry.train_locations,
                                config.thresholds.train_candidates)
    stored_train = np.array(g["train_ids"], dtype=int)
    if not np.array_equal(stored_train, grid.train_ids):
        raise CheckpointError("checkpoint train ids do not match its config")
    model = load_markov_model(directory / "model.txt")
    if model.n_links != 2 * K or model.n_locations != L:
        raise CheckpointError(
            f"checkpoint model ({model.n_links} links, {model.n_locations} "
            f"locations) does not match its config (K={K}, L={L})")
    runtime = ScenarioRuntime(config=config, grid=grid, model=model)
    nets = load_networks(directory / "networks.txt")
    return CheckpointBundle(runtime=runtime, nets=nets,
                            method=manifest["method"], seed=int(manifest["seed"]))


def agent_from_networks(method: str, nets: dict[str, Mlp],
                        runtime: ScenarioRuntime):
    """Reconstruct a frozen agent for evaluation from checkpointed nets."""
    cfg = runtime.config
    network = cfg.network
    if method in ("robust", "ppo"):
        agent = PpoAgent(runtime.obs_dim, network.K, network.P_max, cfg.rl, seed=0)
        agent.actor.copy_from(nets["actor"])
        agent.critic.copy_from(nets["critic"])
        agent.sync_old_actor()
        return agent
    if method == "dqn":
        agent = DqnAgent(runtime.obs_dim, network.K, network.P_max, cfg.dqn,
                         cfg.rl.gamma, seed=0, total_steps=1)
        agent.q.copy_from(nets["q"])
        agent.target.copy_from(nets.get("target", nets["q"]))
        return agent
    if method == "ddpg":
        agent = DdpgAgent(runtime.obs_dim, network.K, network.P_max, cfg.ddpg,
                          cfg.rl.gamma, seed=0)
        agent.actor.copy_from(nets["actor"])
        agent.critic.copy_from(nets["critic"])
        agent.target_actor.copy_from(nets.get("target_actor", nets["actor"]))
        agent.target_critic.copy_from(nets.get("target_critic", nets["critic"]))
        return agent
    if method == "random":
        return RandomAgent(network.K, network.P_max)
    raise ValueError(f"unknown method {method!r}")
