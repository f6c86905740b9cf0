"""Tiny enumerable environments used as learning oracles in the test
suite: the optimum is known in closed form, so agent convergence can be
asserted against it."""

from __future__ import annotations

import numpy as np


class TwoStateBandit:
    """Two observable states, two relays; relay state+1 is optimal.

    Power is ignored, the reward is 1 exactly when the chosen relay
    matches the state, so the optimal policy scores 1 per step and the
    uniform-random policy 0.5.
    """

    K = 2
    P_max = 0.1
    obs_dim = 2

    def __init__(self):
        self.state = 0

    def optimal_relay(self, state: int) -> int:
        return state + 1

    def _obs(self) -> np.ndarray:
        out = np.zeros(2)
        out[self.state] = 1.0
        return out

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = int(rng.integers(2))
        return self._obs()

    def step(self, action, rng: np.random.Generator):
        reward = int(action.relay == self.optimal_relay(self.state))
        self.state = int(rng.integers(2))
        return self._obs(), reward
