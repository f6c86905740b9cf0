"""MDP plumbing shared by all learners: actions, trajectories, discounted
returns, and sampling over the environment-parameter grid."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import InvalidActionError

RELAY_EPS = 1e-9  # keeps floor(clamp(x, 1, K+1-eps)) inside {1..K}


@dataclass(frozen=True)
class Action:
    relay: int    # 1-based relay index
    p_s: float    # source transmit power [W]


def decode_action_batch(raw: np.ndarray, K: int, P_max: float):
    """Map raw policy outputs (B, 2) to executable (relays, powers).

    The relay head is clamped into [1, K+1) and floored; the power head is
    clamped into [0, P_max]. Clamping (rather than rejection) is part of
    the contract because Gaussian heads have unbounded support.
    """
    raw = np.asarray(raw, dtype=float)
    if np.any(~np.isfinite(raw)):
        raise InvalidActionError("raw action values must be finite")
    relays = np.floor(np.clip(raw[..., 0], 1.0, K + 1.0 - RELAY_EPS)).astype(int)
    powers = np.clip(raw[..., 1], 0.0, P_max)
    return relays, powers


def decode_action(relay_value: float, power_value: float, K: int, P_max: float) -> Action:
    relays, powers = decode_action_batch(np.array([[relay_value, power_value]]), K, P_max)
    return Action(relay=int(relays[0]), p_s=float(powers[0]))


@dataclass
class Trajectory:
    """One rollout trial: everything the updates and logs need."""

    obs: np.ndarray       # (T, obs_dim) observation at decision time
    raw: np.ndarray       # (T, 2) pre-clamp policy sample
    relay: np.ndarray     # (T,) executed relay index
    p_s: np.ndarray       # (T,) executed source power
    reward: np.ndarray    # (T,) success bits
    next_obs: np.ndarray  # (T, obs_dim)
    logp: np.ndarray      # (T,) log-probability under the behavior policy
    param_id: int
    seed_key: tuple

    def __len__(self) -> int:
        return self.obs.shape[0]


def discounted_return(trajectories: list[Trajectory], gamma: float) -> float:
    """Average cumulative discounted reward over trials, t indexed from 0.

    For binary rewards the result lies in [0, 1/(1-gamma)].
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    if not trajectories:
        raise ValueError("at least one trajectory is required")
    totals = []
    for traj in trajectories:
        weights = gamma ** np.arange(len(traj))
        totals.append(float(weights @ traj.reward))
    return float(np.mean(totals))


@dataclass
class ParameterDistribution:
    """Sampling weights over environment-parameter ids."""

    ids: np.ndarray       # parameter ids in the grid
    weights: np.ndarray   # probabilities, sum to 1

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=int)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.ids.size == 0:
            raise ValueError("parameter distribution must cover at least one id")
        if np.any(self.weights < 0):
            raise ValueError("weights must be >= 0")
        total = self.weights.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 within 1e-12, got {total}")

    @classmethod
    def uniform(cls, ids) -> "ParameterDistribution":
        ids = np.asarray(ids, dtype=int)
        if ids.size == 0:
            raise ValueError("cannot build a distribution over an empty grid")
        return cls(ids=ids, weights=np.full(ids.size, 1.0 / ids.size))


def sample_parameters(dist: ParameterDistribution, grid, m_max: int,
                      rng: np.random.Generator):
    """Draw m_max i.i.d. environment parameters from the grid."""
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    if grid.size == 0:
        raise ValueError("parameter grid is empty")
    picks = rng.choice(dist.ids, size=m_max, p=dist.weights)
    return [grid.params[i] for i in picks]


# --- line-delimited trajectory logs ------------------------------------------

def write_trajectory_log(path: str | Path, trajectories: list[Trajectory]) -> None:
    with open(path, "w") as fh:
        for traj in trajectories:
            record = {
                "param_id": traj.param_id,
                "seed_key": list(traj.seed_key),
                "obs": traj.obs.tolist(),
                "raw": traj.raw.tolist(),
                "relay": traj.relay.tolist(),
                "p_s": traj.p_s.tolist(),
                "reward": traj.reward.tolist(),
                "next_obs": traj.next_obs.tolist(),
                "logp": traj.logp.tolist(),
            }
            fh.write(json.dumps(record) + "\n")


def read_trajectory_log(path: str | Path) -> list[Trajectory]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        out.append(Trajectory(
            obs=np.array(rec["obs"]), raw=np.array(rec["raw"]),
            relay=np.array(rec["relay"], dtype=int), p_s=np.array(rec["p_s"]),
            reward=np.array(rec["reward"], dtype=int),
            next_obs=np.array(rec["next_obs"]), logp=np.array(rec["logp"]),
            param_id=rec["param_id"], seed_key=tuple(rec["seed_key"])))
    return out
