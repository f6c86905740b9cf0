"""Environment parameters, the discrete parameter grid, and the relay
environment the agent steps through.

One EnvironmentParameter fixes the relay locations (hence all link
distances) and per-relay decode thresholds; together with the Markov
channel model it defines one MDP. The agent only ever observes the
previous slot's channel states: `env_step` first advances the chains,
then scores the action against the newly realized states, so the reward
always depends on states the agent has not yet seen.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .channel import MarkovChannelModel, mutual_information, outage_indicator
from .config import GeometryConfig, NetworkConfig, ThresholdConfig
from .seeding import stream


class InvalidActionError(ValueError):
    """Action outside the admissible space; actions are never silently clipped."""


@dataclass
class EnvironmentParameter:
    """One realization of the uncertainty tuple (distances, thresholds)."""

    d_sk: np.ndarray      # (K,) source-relay distances [m]
    d_kd: np.ndarray      # (K,) relay-destination distances [m]
    lambda_k: np.ndarray  # (K,) relay decode thresholds [bits/s/Hz]
    id: int               # stable index into the grid
    loc_idx: np.ndarray   # (K,) location index per relay
    thr_idx: np.ndarray   # (K,) threshold index per relay


@dataclass
class ParameterGrid:
    """Cartesian grid over per-relay location and threshold candidates."""

    d_sk_cand: np.ndarray    # (K, L)
    d_kd_cand: np.ndarray    # (K, L)
    lambda_cand: np.ndarray  # (K, J)
    params: list[EnvironmentParameter] = field(default_factory=list)
    train_ids: np.ndarray = None
    test_ids: np.ndarray = None

    @property
    def size(self) -> int:
        return len(self.params)

    @property
    def K(self) -> int:
        return self.d_sk_cand.shape[0]

    def index_fractions(self, param: EnvironmentParameter) -> np.ndarray:
        """Per-(field, relay) index fractions used by the parameter TV distance.

        Components whose candidate set is degenerate (single candidate)
        are dropped: they carry no information about the environment.
        """
        L = self.d_sk_cand.shape[1]
        J = self.lambda_cand.shape[1]
        comps = []
        for k in range(self.K):
            if L > 1:
                comps.append(param.loc_idx[k] / (L - 1))   # d_sk index fraction
                comps.append(param.loc_idx[k] / (L - 1))   # d_kd index fraction
            if J > 1:
                comps.append(param.thr_idx[k] / (J - 1))
        return np.asarray(comps, dtype=float)


def relay_positions(geom: GeometryConfig, K: int) -> np.ndarray:
    """Candidate relay positions (K, L, 2), jittered uniformly in the box."""
    rng = stream(geom.seed, "geometry")
    L = geom.locations_per_relay
    x = rng.uniform(geom.box_x[0], geom.box_x[1], size=(K, L))
    y = rng.uniform(geom.box_y[0], geom.box_y[1], size=(K, L))
    return np.stack([x, y], axis=-1)


def grid_from_candidates(d_sk_cand: np.ndarray, d_kd_cand: np.ndarray,
                         lambda_cand: np.ndarray, train_locations: int,
                         train_candidates: int) -> ParameterGrid:
    """Enumerate the full parameter grid in a fixed order (location tuples
    outer, threshold tuples inner, both lexicographic)."""
    K, L = d_sk_cand.shape
    J = lambda_cand.shape[1]
    grid = ParameterGrid(d_sk_cand=d_sk_cand, d_kd_cand=d_kd_cand,
                         lambda_cand=lambda_cand)
    params = []
    train_ids = []
    pid = 0
    for locs in itertools.product(range(L), repeat=K):
        for thrs in itertools.product(range(J), repeat=K):
            loc_idx = np.array(locs)
            thr_idx = np.array(thrs)
            params.append(EnvironmentParameter(
                d_sk=d_sk_cand[np.arange(K), loc_idx],
                d_kd=d_kd_cand[np.arange(K), loc_idx],
                lambda_k=lambda_cand[np.arange(K), thr_idx],
                id=pid, loc_idx=loc_idx, thr_idx=thr_idx))
            if np.all(loc_idx < train_locations) and np.all(thr_idx < train_candidates):
                train_ids.append(pid)
            pid += 1
    grid.params = params
    grid.train_ids = np.array(train_ids, dtype=int)
    grid.test_ids = np.arange(pid, dtype=int)
    return grid


def build_grid(network: NetworkConfig, geom: GeometryConfig,
               thr: ThresholdConfig) -> ParameterGrid:
    """Generate candidate sets from the scenario geometry, then enumerate."""
    K = network.K
    pos = relay_positions(geom, K)
    dest = np.array([geom.source_destination_distance, 0.0])
    d_sk = np.linalg.norm(pos, axis=-1)
    d_kd = np.linalg.norm(pos - dest, axis=-1)

    rng = stream(thr.seed, "thresholds")
    if thr.candidates == 1:
        lam = np.full((K, 1), thr.low)
    else:
        lam = np.sort(rng.uniform(thr.low, thr.high, size=(K, thr.candidates)), axis=1)
    return grid_from_candidates(d_sk, d_kd, lam, geom.train_locations,
                                thr.train_candidates)


# --- observation encoding ---------------------------------------------------

def observation_dim(K: int, M: int, encoding: str) -> int:
    if encoding == "onehot":
        return 2 * K * M
    if encoding == "index":
        return 2 * K
    raise ValueError(f"unknown encoding {encoding!r}")


def encode_observation(states: np.ndarray, M: int, encoding: str) -> np.ndarray:
    """Encode per-link state indices (..., 2K) as a flat feature vector.

    "onehot" emits one indicator block of width M per link; "index" emits
    the normalized index state/(M-1) per link. Both are injective on the
    finite state grid.
    """
    states = np.asarray(states)
    if encoding == "onehot":
        feats = np.zeros(states.shape + (M,))
        np.put_along_axis(feats, states[..., None], 1.0, axis=-1)
        return feats.reshape(states.shape[:-1] + (states.shape[-1] * M,))
    if encoding == "index":
        return states / (M - 1)
    raise ValueError(f"unknown encoding {encoding!r}")


# --- stepping ----------------------------------------------------------------

def _check_actions(relays, powers, K: int, P_max: float) -> None:
    relays = np.asarray(relays)
    powers = np.asarray(powers)
    if np.any(~np.isfinite(powers)):
        raise InvalidActionError("P_s must be finite")
    if np.any(relays < 1) or np.any(relays > K):
        raise InvalidActionError(f"relay index must be in [1, {K}], got {relays}")
    if np.any(powers < 0) or np.any(powers > P_max):
        raise InvalidActionError(f"P_s must be in [0, {P_max}], got {powers}")


def env_step_multi(model: MarkovChannelModel, network: NetworkConfig,
                   loc_idx: np.ndarray, lambda_k: np.ndarray,
                   states: np.ndarray, relays: np.ndarray, powers: np.ndarray,
                   uniforms: np.ndarray, outage_mode: str = "or"):
    """Advance a batch of chains one slot and score the actions.

    Each batch row may live under its own environment parameter:
    loc_idx (B, K) location index per relay, lambda_k (B, K) decode
    thresholds. states/uniforms are (B, 2K); the pre-drawn U(0,1) variates
    drive the transitions, so next states never depend on the actions.
    """
    K = network.K
    states = np.asarray(states)
    B, n_links = states.shape
    _check_actions(relays, powers, K, network.P_max)

    loc_of_link = np.asarray(loc_idx)[:, np.arange(n_links) % K]  # (B, 2K)
    link_idx = np.broadcast_to(np.arange(n_links), (B, n_links))
    rows = model.transitions[link_idx, loc_of_link, states]       # (B, 2K, M)
    cum = np.cumsum(rows, axis=-1)
    nxt = np.sum(uniforms[..., None] >= cum, axis=-1)
    nxt = np.minimum(nxt, model.n_states - 1)

    r0 = np.asarray(relays) - 1                                   # 0-based relay
    b = np.arange(B)
    loc_r = np.asarray(loc_idx)[b, r0]
    g_sk = model.representatives[r0, loc_r, nxt[b, r0]]
    g_kd = model.representatives[K + r0, loc_r, nxt[b, K + r0]]
    p_s = np.asarray(powers, dtype=float)
    i_k = mutual_information(p_s, g_sk, network.P_0)
    i_d = mutual_information(network.P_max - p_s, g_kd, network.P_0)
    out = outage_indicator(i_k, i_d, np.asarray(lambda_k)[b, r0], network.lambda_d,
                           mode=outage_mode)
    return nxt, 1 - np.asarray(out)


def env_step_batch(model: MarkovChannelModel, param: EnvironmentParameter,
                   network: NetworkConfig, states: np.ndarray,
                   relays: np.ndarray, powers: np.ndarray,
                   uniforms: np.ndarray, outage_mode: str = "or"):
    """Batched step where every row shares one environment parameter."""
    B = np.asarray(states).shape[0]
    loc_idx = np.broadcast_to(param.loc_idx, (B, network.K))
    lambda_k = np.broadcast_to(param.lambda_k, (B, network.K))
    return env_step_multi(model, network, loc_idx, lambda_k, states,
                          relays, powers, uniforms, outage_mode=outage_mode)


def env_step(model: MarkovChannelModel, param: EnvironmentParameter,
             network: NetworkConfig, state: np.ndarray, action,
             rng: np.random.Generator, outage_mode: str = "or"):
    """Single-chain step: returns (next_state, success reward bit).

    The transition draw is taken from `rng` before the action has any
    effect, which makes the chain action-independent by construction.
    """
    state = np.asarray(state)
    uniforms = rng.uniform(size=(1, state.shape[-1]))
    nxt, reward = env_step_batch(model, param, network, state[None, :],
                                 np.array([action.relay]), np.array([action.p_s]),
                                 uniforms, outage_mode=outage_mode)
    return nxt[0], int(reward[0])


class RelayEnv:
    """Sequential wrapper around `env_step` holding the current chain state."""

    def __init__(self, model: MarkovChannelModel, param: EnvironmentParameter,
                 network: NetworkConfig, outage_mode: str = "or",
                 encoding: str = "onehot"):
        self.model = model
        self.param = param
        self.network = network
        self.outage_mode = outage_mode
        self.encoding = encoding
        self.K = network.K
        self.P_max = network.P_max
        self.obs_dim = observation_dim(network.K, model.n_states, encoding)
        self.state = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = rng.integers(0, self.model.n_states, size=2 * self.K)
        return encode_observation(self.state, self.model.n_states, self.encoding)

    def step(self, action, rng: np.random.Generator):
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        self.state, reward = env_step(self.model, self.param, self.network,
                                      self.state, action, rng,
                                      outage_mode=self.outage_mode)
        obs = encode_observation(self.state, self.model.n_states, self.encoding)
        return obs, reward
