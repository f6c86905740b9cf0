import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfrelay.env import InvalidActionError
from dfrelay.mdp import (Action, ParameterDistribution, Trajectory,
                         decode_action, decode_action_batch, discounted_return,
                         read_trajectory_log, sample_parameters,
                         write_trajectory_log)
from dfrelay.ppo import rollout_param
from dfrelay.seeding import stream


def test_decode_examples():
    assert decode_action(2.7, 0.05, K=3, P_max=0.1) == Action(2, 0.05)
    assert decode_action(0.2, -1.0, K=3, P_max=0.1) == Action(1, 0.0)
    assert decode_action(3.9999, 0.2, K=3, P_max=0.1) == Action(3, 0.1)
    assert decode_action(99.0, 0.05, K=3, P_max=0.1).relay == 3


def test_decode_rejects_non_finite():
    with pytest.raises(InvalidActionError):
        decode_action(float("inf"), 0.05, 3, 0.1)
    with pytest.raises(InvalidActionError):
        decode_action(1.0, float("nan"), 3, 0.1)


@given(relay=st.integers(1, 5), p=st.floats(0.0, 0.1),
       K=st.integers(1, 5), P_max=st.just(0.1))
@settings(max_examples=200)
def test_decode_idempotent_on_valid_actions(relay, p, K, P_max):
    relay = min(relay, K)
    once = decode_action(float(relay), p, K, P_max)
    twice = decode_action(float(once.relay), once.p_s, K, P_max)
    assert once == twice


@given(raw=st.tuples(st.floats(-50, 50, allow_nan=False),
                     st.floats(-1, 1, allow_nan=False)))
@settings(max_examples=200)
def test_decode_always_in_bounds(raw):
    action = decode_action(raw[0], raw[1], K=4, P_max=0.1)
    assert 1 <= action.relay <= 4
    assert 0.0 <= action.p_s <= 0.1


def _traj(rewards):
    T = len(rewards)
    zeros = np.zeros((T, 2))
    return Trajectory(obs=zeros, raw=zeros, relay=np.ones(T, dtype=int),
                      p_s=np.zeros(T), reward=np.asarray(rewards, dtype=int),
                      next_obs=zeros, logp=np.zeros(T), param_id=0, seed_key=())


def test_discounted_return_examples():
    assert discounted_return([_traj([1, 0, 1])], 0.5) == 1.25
    long_ones = _traj([1] * 500)
    assert abs(discounted_return([long_ones], 0.9) - 10.0) < 1e-20 * 500 + 1e-9
    assert discounted_return([_traj([0, 0, 0])], 0.9) == 0.0


def test_discounted_return_bounds_and_errors():
    with pytest.raises(ValueError):
        discounted_return([_traj([1])], 1.0)
    with pytest.raises(ValueError):
        discounted_return([], 0.9)
    val = discounted_return([_traj([1] * 30), _traj([0] * 30)], 0.9)
    assert 0.0 <= val <= 1.0 / 0.1


def test_parameter_distribution_validation():
    with pytest.raises(ValueError):
        ParameterDistribution(ids=np.array([], dtype=int), weights=np.array([]))
    with pytest.raises(ValueError):
        ParameterDistribution(ids=np.array([0, 1]), weights=np.array([0.6, 0.6]))
    with pytest.raises(ValueError):
        ParameterDistribution(ids=np.array([0, 1]), weights=np.array([1.5, -0.5]))


def test_sampling_frequencies(tiny_runtime):
    grid = tiny_runtime.grid
    dist = ParameterDistribution.uniform(grid.test_ids)
    picks = sample_parameters(dist, grid, 10**5, stream(3, "freq"))
    ids = np.array([p.id for p in picks])
    for pid in grid.test_ids:
        assert abs(np.mean(ids == pid) - 0.25) < 0.01


def test_sampling_point_mass_and_skew(tiny_runtime):
    grid = tiny_runtime.grid
    point = ParameterDistribution(ids=np.array([2]), weights=np.array([1.0]))
    assert all(p.id == 2 for p in sample_parameters(point, grid, 50, stream(1)))
    skew = ParameterDistribution(ids=np.array([0, 1]),
                                 weights=np.array([0.9, 0.1]))
    ids = np.array([p.id for p in sample_parameters(skew, grid, 10**5, stream(2))])
    assert abs(np.mean(ids == 0) - 0.9) < 0.01


def test_sampling_reproducible(tiny_runtime):
    grid = tiny_runtime.grid
    dist = ParameterDistribution.uniform(grid.test_ids)
    a = [p.id for p in sample_parameters(dist, grid, 100, stream(5, "rep"))]
    b = [p.id for p in sample_parameters(dist, grid, 100, stream(5, "rep"))]
    assert a == b


def test_trajectory_log_roundtrip(tmp_path, tiny_runtime):
    cfg = tiny_runtime.config
    trajs = rollout_param(tiny_runtime.model, tiny_runtime.grid.params[0],
                          cfg.network, lambda obs: (np.full((len(obs), 2), 1.5),
                                                    np.full((len(obs), 2), 0.1)),
                          l_max=3, t_max=5, rng=stream(8),
                          encoding=cfg.env.obs_encoding,
                          outage_mode=cfg.env.outage_mode)
    path = tmp_path / "trajs.jsonl"
    write_trajectory_log(path, trajs)
    again = read_trajectory_log(path)
    assert len(again) == len(trajs)
    for a, b in zip(trajs, again):
        assert np.array_equal(a.obs, b.obs)
        assert np.array_equal(a.raw, b.raw)
        assert np.array_equal(a.reward, b.reward)
        assert a.param_id == b.param_id


def test_eta_seed_split_consistency(tiny_runtime):
    """Disjoint trial sets estimate the same expected return."""
    cfg = tiny_runtime.config
    head = lambda obs: (np.tile([1.5, 0.05], (len(obs), 1)),
                        np.tile([0.3, 0.02], (len(obs), 1)))
    etas = []
    for half in range(2):
        trajs = rollout_param(tiny_runtime.model, tiny_runtime.grid.params[0],
                              cfg.network, head, l_max=400, t_max=20,
                              rng=stream(31, "split", half),
                              encoding=cfg.env.obs_encoding,
                              outage_mode=cfg.env.outage_mode)
        etas.append(discounted_return(trajs, 0.9))
    assert abs(etas[0] - etas[1]) < 0.4  # ~5 standard errors at 400 trials
